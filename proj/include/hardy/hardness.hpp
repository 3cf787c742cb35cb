#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hardy/adam.hpp"
#include "hardy/data.hpp"
#include "hardy/encoders.hpp"
#include "hardy/errors.hpp"
#include "hardy/io.hpp"

namespace hardy {

// Weights of the unified hardness score: h = sigmoid(beta * (a1*h_dir + a2*h_ind)).
struct HardnessConfig {
    double alpha1 = 0.6;
    double alpha2 = 0.4;
    double beta = 4.0;
};

struct HardnessRecord {
    int id = 0;
    Condition condition;
    double h_dir_a = 0, h_dir_t = 0, h_dir_v = 0;
    double h_dir = 0;
    double h_ind = 0;
    double h = 0.5;
};

// Clamp keeps k' = ceil(h*k) >= 1 and curricula bounded.
inline constexpr double kHardnessClampLo = 1e-9;
inline constexpr double kHardnessClampHi = 1.0 - 1e-9;

inline double unified_hardness(double h_dir, double h_ind, const HardnessConfig& cfg) {
    if (cfg.alpha1 < 0 || cfg.alpha2 < 0 || cfg.beta <= 0)
        throw DomainError("hardness weights must be nonnegative with beta > 0");
    const double h = 1.0 / (1.0 + std::exp(-cfg.beta * (cfg.alpha1 * h_dir + cfg.alpha2 * h_ind)));
    return std::clamp(h, kHardnessClampLo, kHardnessClampHi);
}

// ---- differentiable hardness building blocks -----------------------------

// Shannon entropy of the softmax-normalized feature vector, composed from
// the closed op set: H(p) = sum_i p_i * (-log p_i) with -log p_i expressed
// as a cross-entropy against class i.
inline Graph::NodeId feature_entropy(Forward& f, Graph::NodeId pooled) {
    const std::size_t d = f.g.value(pooled).numel();
    if (d < 2) throw ShapeError("feature_entropy: dimension must be >= 2");
    auto p = f.g.softmax(pooled);
    std::vector<Graph::NodeId> neg_logs;
    neg_logs.reserve(d);
    for (std::size_t i = 0; i < d; ++i) neg_logs.push_back(f.g.cross_entropy(pooled, i));
    auto col = f.g.reshape(f.g.concat(neg_logs), {d, 1});
    auto row = f.g.reshape(p, {1, d});
    return f.g.reshape(f.g.matmul(row, col), {1});
}

// Proxy mutual information between two token sequences: marginal entropies
// of the pooled features minus the entropy of the pooled symmetric fusion.
inline Graph::NodeId mutual_information(Forward& f, Graph::NodeId seq_p, Graph::NodeId seq_q,
                                        const std::string& fusion_prefix, std::size_t d) {
    auto hp = feature_entropy(f, pool(f, seq_p));
    auto hq = feature_entropy(f, pool(f, seq_q));
    auto hj = feature_entropy(f, pool(f, fuse_pair(f, seq_p, seq_q, fusion_prefix, d)));
    return f.g.add(f.g.add(hp, hq), f.g.scale(hj, -1.0));
}

// h_ind = I(a;t) + I(a;v) + I(t;v).
inline Graph::NodeId indirect_hardness(Forward& f, const std::array<Graph::NodeId, 3>& seqs,
                                       const std::string& fusion_prefix, std::size_t d) {
    auto iat = mutual_information(f, seqs[0], seqs[1], fusion_prefix, d);
    auto iav = mutual_information(f, seqs[0], seqs[2], fusion_prefix, d);
    auto itv = mutual_information(f, seqs[1], seqs[2], fusion_prefix, d);
    return f.g.add(f.g.add(iat, iav), itv);
}

// Value-level direct hardness: per-modality MSE of the reconstructions and
// their sum. Never part of a gradient path.
struct DirectHardness {
    std::array<double, 3> per_modality{};
    double total = 0;
};

inline DirectHardness direct_hardness(const std::array<Tensor, 3>& x_true,
                                      const std::array<Tensor, 3>& x_hat) {
    DirectHardness out;
    for (std::size_t mi = 0; mi < 3; ++mi) {
        require_same_shape(x_true[mi], x_hat[mi], "direct_hardness");
        double acc = 0.0;
        for (std::size_t j = 0; j < x_true[mi].numel(); ++j) {
            const double diff = x_true[mi].data[j] - x_hat[mi].data[j];
            acc += diff * diff;
        }
        out.per_modality[mi] = acc / static_cast<double>(x_true[mi].numel());
        out.total += out.per_modality[mi];
    }
    return out;
}

// ---- the trainable hardness evaluator ------------------------------------

struct HardnessTrainOptions {
    std::size_t epochs = 10;
    double lr = 1e-4;
    std::size_t batch = 32;
    double dropout = 0.5;
};

// Multi-view hardness evaluator: semantic encoders, shared pairwise fusion,
// per-modality heads (stage 1), joint head and linear reconstructors
// (stage 2). After stage 2 the module is frozen and only scores samples.
class HardnessModule {
public:
    HardnessModule() = default;

    HardnessModule(const ModelDims& dims, Rng& rng) : dims_(dims) {
        Rng init = rng.split("hardness-init");
        for (Modality m : kModalities) {
            const std::string tag = modality_tag(m);
            init_encoder(params_, "h.enc." + tag, dims.raw_dim(m), dims, init);
            init_affine(params_, "h.cls." + tag, dims.width, dims.classes, init);
            init_affine(params_, "h.rec." + tag, 3 * dims.width, dims.raw_dim(m), init);
        }
        init_fusion(params_, "h.fus", dims.width, init);
        init_affine(params_, "h.cls.joint", 3 * dims.width, dims.classes, init);
    }

    const ModelDims& dims() const { return dims_; }
    const ParamSet& params() const { return params_; }
    bool frozen() const { return stage_ == 2; }
    int stage() const { return stage_; }
    const std::vector<double>& stage1_trace() const { return stage1_trace_; }
    const std::vector<double>& stage1_ce_trace() const { return stage1_ce_trace_; }
    const std::vector<double>& stage2_trace() const { return stage2_trace_; }

    // Stage 1: encoders + fusion + per-modality heads on complete samples,
    // loss = sum_m CE(y, y^m) - h_ind (h_ind averaged per batch).
    void train_stage1(const Dataset& ds, const HardnessTrainOptions& opt, Rng& rng) {
        if (ds.size() == 0) throw ContractError("stage 1 requires a non-empty training set");
        for (const auto& s : ds.samples)
            if (!s.available.all())
                throw ContractError("stage-1 hardness training requires complete samples (sample " +
                                    std::to_string(s.id) + " has condition " + s.available.str() + ")");
        Rng run = rng.split("hardness-stage1");
        Adam optim(AdamConfig{.lr = opt.lr});
        stage1_trace_.clear();
        stage1_ce_trace_.clear();
        for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
            double epoch_loss = 0.0;
            double epoch_ce = 0.0;
            for (std::size_t start = 0; start < ds.size(); start += opt.batch) {
                const std::size_t end = std::min(ds.size(), start + opt.batch);
                GradMap acc;
                for (std::size_t i = start; i < end; ++i) {
                    Graph g;
                    Forward f{g, params_, true, &run, opt.dropout};
                    auto seqs = encode_all(f, ds.samples[i], Condition{true, true, true});
                    std::vector<Graph::NodeId> terms;
                    for (Modality m : kModalities) {
                        auto logits = classify(f, pool(f, seqs[static_cast<std::size_t>(m)]),
                                               std::string("h.cls.") + modality_tag(m));
                        terms.push_back(g.cross_entropy(logits, static_cast<std::size_t>(ds.samples[i].label)));
                    }
                    auto ce_sum = g.add(g.add(terms[0], terms[1]), terms[2]);
                    auto h_ind = indirect_hardness(f, seqs, "h.fus", dims_.width);
                    auto loss = g.add(ce_sum, g.scale(h_ind, -1.0));
                    auto scaled = g.scale(loss, 1.0 / static_cast<double>(end - start));
                    epoch_loss += g.value(loss).item();
                    epoch_ce += g.value(ce_sum).item();
                    accumulate(acc, g.backward(scaled));
                }
                filter_prefixes(acc, {"h.enc.", "h.fus.", "h.cls.a", "h.cls.t", "h.cls.v"});
                optim.step(params_, acc);
            }
            stage1_trace_.push_back(epoch_loss / static_cast<double>(ds.size()));
            stage1_ce_trace_.push_back(epoch_ce / static_cast<double>(ds.size()));
        }
        stage_ = std::max(stage_, 1);
    }

    // Stage 2: fine-tune encoders, train reconstructors + joint head under
    // per-epoch uniformly drawn missing conditions; loss = CE + h_dir.
    // Fusion and the per-modality heads stay frozen. The module freezes
    // afterwards.
    void train_stage2(const Dataset& ds, const HardnessTrainOptions& opt, Rng& rng) {
        if (stage_ < 1) throw ContractError("stage 2 requires stage-1 training first");
        Rng run = rng.split("hardness-stage2");
        Adam optim(AdamConfig{.lr = opt.lr});
        stage2_trace_.clear();
        for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
            double epoch_rec = 0.0;
            std::vector<Condition> conds(ds.size());
            for (auto& c : conds) c = Condition::six()[run.uniform_int(6)];
            for (std::size_t start = 0; start < ds.size(); start += opt.batch) {
                const std::size_t end = std::min(ds.size(), start + opt.batch);
                GradMap acc;
                for (std::size_t i = start; i < end; ++i) {
                    Graph g;
                    Forward f{g, params_, true, &run, opt.dropout};
                    auto seqs = encode_all(f, ds.samples[i], conds[i]);
                    auto joint = g.concat({pool(f, seqs[0]), pool(f, seqs[1]), pool(f, seqs[2])});
                    auto logits = classify(f, joint, "h.cls.joint");
                    auto ce = g.cross_entropy(logits, static_cast<std::size_t>(ds.samples[i].label));
                    auto recs = reconstruct_linear(f, joint, "h.rec");
                    Graph::NodeId h_dir = ce;  // replaced below; placeholder for the sum
                    std::vector<Graph::NodeId> rec_terms;
                    for (Modality m : kModalities) {
                        const std::size_t mi = static_cast<std::size_t>(m);
                        rec_terms.push_back(g.mse(g.input(ds.samples[i].raw[mi]), recs[mi]));
                    }
                    h_dir = g.add(g.add(rec_terms[0], rec_terms[1]), rec_terms[2]);
                    epoch_rec += g.value(h_dir).item();
                    auto loss = g.scale(g.add(ce, h_dir), 1.0 / static_cast<double>(end - start));
                    accumulate(acc, g.backward(loss));
                }
                filter_prefixes(acc, {"h.enc.", "h.rec.", "h.cls.joint"});
                optim.step(params_, acc);
            }
            stage2_trace_.push_back(epoch_rec / static_cast<double>(ds.size()));
        }
        stage_ = 2;
    }

    // Deterministic scoring with the frozen module.
    HardnessRecord score(const ModalitySample& sample, const Condition& cond,
                         const HardnessConfig& cfg) const {
        if (!frozen()) throw ContractError("hardness module must be frozen (post stage 2) to score");
        Graph g;
        Forward f{g, params_};
        auto seqs = encode_all(f, sample, cond);
        auto joint = g.concat({pool(f, seqs[0]), pool(f, seqs[1]), pool(f, seqs[2])});
        auto recs = reconstruct_linear(f, joint, "h.rec");
        std::array<Tensor, 3> x_hat{g.value(recs[0]), g.value(recs[1]), g.value(recs[2])};
        DirectHardness dir = direct_hardness(sample.raw, x_hat);
        auto h_ind_node = indirect_hardness(f, seqs, "h.fus", dims_.width);
        HardnessRecord rec;
        rec.id = sample.id;
        rec.condition = cond;
        rec.h_dir_a = dir.per_modality[0];
        rec.h_dir_t = dir.per_modality[1];
        rec.h_dir_v = dir.per_modality[2];
        rec.h_dir = dir.total;
        rec.h_ind = g.value(h_ind_node).item();
        rec.h = unified_hardness(rec.h_dir, rec.h_ind, cfg);
        return rec;
    }

    void save(const std::filesystem::path& path) const {
        ParamSet out = params_;
        out["__meta.stage"] = Tensor::scalar(static_cast<double>(stage_));
        out["__meta.dims"] = Tensor::vec({static_cast<double>(dims_.raw[0]),
                                          static_cast<double>(dims_.raw[1]),
                                          static_cast<double>(dims_.raw[2]),
                                          static_cast<double>(dims_.width),
                                          static_cast<double>(dims_.tokens),
                                          static_cast<double>(dims_.classes)});
        write_checkpoint(path, out);
    }

    static HardnessModule load(const std::filesystem::path& path) {
        ParamSet in = read_checkpoint(path);
        HardnessModule m;
        const Tensor& d = in.at("__meta.dims");
        m.dims_.raw = {static_cast<std::size_t>(d.data[0]), static_cast<std::size_t>(d.data[1]),
                       static_cast<std::size_t>(d.data[2])};
        m.dims_.width = static_cast<std::size_t>(d.data[3]);
        m.dims_.tokens = static_cast<std::size_t>(d.data[4]);
        m.dims_.classes = static_cast<std::size_t>(d.data[5]);
        m.stage_ = static_cast<int>(in.at("__meta.stage").item());
        in.erase("__meta.stage");
        in.erase("__meta.dims");
        m.params_ = std::move(in);
        return m;
    }

private:
    std::array<Graph::NodeId, 3> encode_all(Forward& f, const ModalitySample& s,
                                            const Condition& cond) const {
        std::array<Graph::NodeId, 3> seqs{};
        for (Modality m : kModalities) {
            const std::size_t mi = static_cast<std::size_t>(m);
            if (s.raw[mi].numel() != dims_.raw_dim(m))
                throw ShapeError("sample modality " + std::string(modality_tag(m)) + " has dim " +
                                 std::to_string(s.raw[mi].numel()) + ", expected " +
                                 std::to_string(dims_.raw_dim(m)));
            auto x = f.g.input(s.masked(m, cond));
            seqs[mi] = encode(f, x, "h.enc." + std::string(modality_tag(m)), dims_);
        }
        return seqs;
    }

    static void accumulate(GradMap& acc, const GradMap& grads) {
        for (const auto& [name, g] : grads) {
            auto it = acc.find(name);
            if (it == acc.end()) {
                acc[name] = g;
            } else {
                for (std::size_t j = 0; j < g.numel(); ++j) it->second.data[j] += g.data[j];
            }
        }
    }

    static void filter_prefixes(GradMap& acc, std::initializer_list<const char*> keep) {
        for (auto it = acc.begin(); it != acc.end();) {
            bool kept = false;
            for (const char* p : keep)
                if (it->first.rfind(p, 0) == 0) kept = true;
            it = kept ? std::next(it) : acc.erase(it);
        }
    }

    ModelDims dims_;
    ParamSet params_;
    int stage_ = 0;
    std::vector<double> stage1_trace_, stage1_ce_trace_, stage2_trace_;
};

// ---- hardness record CSV -------------------------------------------------

inline void write_hardness_csv(const std::vector<HardnessRecord>& records,
                               const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot create " + path.string());
    os << "id,condition,h_dir_a,h_dir_t,h_dir_v,h_dir,h_ind,h\n";
    char buf[64];
    auto emit = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (const auto& r : records) {
        os << r.id << "," << r.condition.str() << ",";
        emit(r.h_dir_a); os << ",";
        emit(r.h_dir_t); os << ",";
        emit(r.h_dir_v); os << ",";
        emit(r.h_dir); os << ",";
        emit(r.h_ind); os << ",";
        emit(r.h); os << "\n";
    }
}

inline std::vector<HardnessRecord> read_hardness_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind("id,condition,", 0) != 0)
        throw FormatError("missing hardness CSV header in " + path.string());
    std::vector<HardnessRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t pos = 0;
        while (true) {
            auto comma = line.find(',', pos);
            cells.push_back(line.substr(pos, comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (cells.size() != 8) throw FormatError("malformed hardness CSV row '" + line + "'");
        HardnessRecord r;
        r.id = std::stoi(cells[0]);
        r.condition = Condition::parse(cells[1]);
        r.h_dir_a = std::stod(cells[2]);
        r.h_dir_t = std::stod(cells[3]);
        r.h_dir_v = std::stod(cells[4]);
        r.h_dir = std::stod(cells[5]);
        r.h_ind = std::stod(cells[6]);
        r.h = std::stod(cells[7]);
        out.push_back(r);
    }
    return out;
}

}  // namespace hardy
