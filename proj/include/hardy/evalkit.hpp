#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hardy/data.hpp"
#include "hardy/errors.hpp"
#include "hardy/trainer.hpp"

namespace hardy {

// Overall fraction correct (accuracy weighted by class frequency).
inline double weighted_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.empty() || preds.size() != labels.size())
        throw DomainError("weighted_accuracy: non-empty equal-length inputs required");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

// Mean per-class recall over the classes present in the labels.
inline double unweighted_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.empty() || preds.size() != labels.size())
        throw DomainError("unweighted_accuracy: non-empty equal-length inputs required");
    std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // class -> (hits, total)
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto& [hits, total] = per_class[labels[i]];
        ++total;
        hits += preds[i] == labels[i];
    }
    double sum = 0.0;
    for (const auto& [cls, ht] : per_class)
        sum += static_cast<double>(ht.first) / static_cast<double>(ht.second);
    return sum / static_cast<double>(per_class.size());
}

enum class F1Variant { Weighted, PositiveClass };

// Binary F1. Weighted variant averages the two per-class F1 scores by
// class support; a class with no predicted and no true positives scores 0.
inline double f1_binary(const std::vector<int>& preds, const std::vector<int>& labels,
                        F1Variant variant = F1Variant::Weighted) {
    if (preds.empty() || preds.size() != labels.size())
        throw DomainError("f1_binary: non-empty equal-length inputs required");
    for (std::size_t i = 0; i < preds.size(); ++i)
        if ((preds[i] != 0 && preds[i] != 1) || (labels[i] != 0 && labels[i] != 1))
            throw DomainError("f1_binary: inputs must be 0/1");
    auto f1_of = [&](int positive) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const bool p = preds[i] == positive, l = labels[i] == positive;
            tp += p && l;
            fp += p && !l;
            fn += !p && l;
        }
        const std::size_t denom = 2 * tp + fp + fn;
        return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    };
    if (variant == F1Variant::PositiveClass) return f1_of(1);
    std::size_t support1 = 0;
    for (int l : labels) support1 += l == 1;
    const double w1 = static_cast<double>(support1) / static_cast<double>(labels.size());
    return (1.0 - w1) * f1_of(0) + w1 * f1_of(1);
}

struct ConditionReport {
    Condition condition;
    double wa = 0;  // also Acc for binary runs
    double ua = 0;
    double f1 = 0;  // binary runs only
    std::size_t count = 0;
};

struct ReportTable {
    bool binary = false;
    std::array<ConditionReport, 6> rows;
    ConditionReport average;  // unweighted mean over the six conditions
    std::map<std::string, std::string> metadata;
};

// Evaluates a TRAINED model over the six missing-modality settings and
// appends the Average row.
inline ReportTable evaluate_conditions(const Recognizer& model, const Dataset& test) {
    if (test.size() == 0) throw DomainError("evaluate_conditions: empty test set");
    if (model.stage() != Stage::Trained) throw ContractError("evaluation requires a TRAINED bundle");
    ReportTable table;
    table.binary = test.classes == 2;
    std::vector<int> labels(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) labels[i] = test.samples[i].label;
    for (std::size_t ci = 0; ci < 6; ++ci) {
        const Condition& cond = Condition::six()[ci];
        std::vector<int> preds(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) preds[i] = model.predict(test.samples[i], cond);
        ConditionReport& r = table.rows[ci];
        r.condition = cond;
        r.count = test.size();
        r.wa = weighted_accuracy(preds, labels);
        r.ua = unweighted_accuracy(preds, labels);
        if (table.binary) r.f1 = f1_binary(preds, labels);
        table.average.wa += r.wa;
        table.average.ua += r.ua;
        table.average.f1 += r.f1;
    }
    table.average.wa /= 6.0;
    table.average.ua /= 6.0;
    table.average.f1 /= 6.0;
    table.average.count = test.size();
    return table;
}

// Cellwise difference a - b (metadata taken from neither).
inline ReportTable table_delta(const ReportTable& a, const ReportTable& b) {
    ReportTable d;
    d.binary = a.binary;
    for (std::size_t i = 0; i < 6; ++i) {
        if (!(a.rows[i].condition == b.rows[i].condition))
            throw ContractError("table_delta: condition sets disagree");
        d.rows[i].condition = a.rows[i].condition;
        d.rows[i].wa = a.rows[i].wa - b.rows[i].wa;
        d.rows[i].ua = a.rows[i].ua - b.rows[i].ua;
        d.rows[i].f1 = a.rows[i].f1 - b.rows[i].f1;
    }
    d.average.wa = a.average.wa - b.average.wa;
    d.average.ua = a.average.ua - b.average.ua;
    d.average.f1 = a.average.f1 - b.average.f1;
    return d;
}

// ---- report CSV ----------------------------------------------------------
// '#' comment lines carry metadata; values use 6 fractional digits.

inline void write_report_csv(const ReportTable& table, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot create " + path.string());
    for (const auto& [k, v] : table.metadata) os << "# " << k << "=" << v << "\n";
    char buf[32];
    auto emit = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        os << buf;
    };
    os << (table.binary ? "condition,Acc,F1\n" : "condition,WA,UA\n");
    auto row = [&](const std::string& name, const ConditionReport& r) {
        os << name << ",";
        emit(r.wa);
        os << ",";
        emit(table.binary ? r.f1 : r.ua);
        os << "\n";
    };
    for (const auto& r : table.rows) row(r.condition.str(), r);
    row("Average", table.average);
}

inline ReportTable read_report_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path.string());
    ReportTable table;
    std::string line;
    bool have_header = false;
    std::vector<ConditionReport> parsed;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::string body = line.substr(line.find_first_not_of("# "));
            auto eq = body.find('=');
            if (eq != std::string::npos) table.metadata[body.substr(0, eq)] = body.substr(eq + 1);
            continue;
        }
        if (!have_header) {
            if (line == "condition,Acc,F1") table.binary = true;
            else if (line != "condition,WA,UA")
                throw FormatError("unknown report header '" + line + "' in " + path.string());
            have_header = true;
            continue;
        }
        auto c1 = line.find(',');
        auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw FormatError("malformed report row '" + line + "'");
        const std::string name = line.substr(0, c1);
        const double m1 = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        const double m2 = std::stod(line.substr(c2 + 1));
        ConditionReport r;
        r.wa = m1;
        (table.binary ? r.f1 : r.ua) = m2;
        if (name == "Average") {
            table.average = r;
        } else {
            if (parsed.size() == 6) throw FormatError("too many condition rows in " + path.string());
            r.condition = Condition::parse(name);
            parsed.push_back(r);
        }
    }
    if (!have_header || parsed.size() != 6)
        throw FormatError("incomplete report table in " + path.string());
    std::copy(parsed.begin(), parsed.end(), table.rows.begin());
    return table;
}

}  // namespace hardy
