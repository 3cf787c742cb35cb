#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hardy/featstore.hpp"
#include "hardy/hardness.hpp"

namespace hardy {

// One retrieval hit with its per-modality L2 distances to the query and
// their mean over the available modalities.
struct Candidate {
    int id = 0;
    std::array<double, 3> dist{};
    double integrated = 0;
};

struct Curriculum {
    int anchor_id = 0;
    Condition condition;
    double h = 0.5;
    std::size_t k_prime = 1;          // requested support count, ceil(h*k)
    std::vector<int> support_ids;     // most similar first; may fall short of k_prime
    bool short_list = false;          // database too small to honor k_prime

    std::size_t size() const { return support_ids.size(); }
};

// Flat indices over the three modality databases. Zero rows under the
// inner-product metric are indexed as uniform unit vectors and flagged
// instead of failing the whole build.
struct StoreIndices {
    std::array<FlatIndex, 3> index;
    std::vector<int> degenerate_ids;
};

namespace detail {

inline Tensor uniform_unit(std::size_t d) {
    Tensor t = Tensor::zeros({d});
    const double v = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& x : t.data) x = v;
    return t;
}

inline bool all_zero(const Tensor& t) {
    for (double x : t.data) if (x != 0.0) return false;
    return true;
}

}  // namespace detail

inline StoreIndices build_store_indices(const FeatureStore& store) {
    store.validate();
    StoreIndices out;
    for (Modality m : kModalities) {
        const std::size_t mi = static_cast<std::size_t>(m);
        Tensor mat = store.matrix(m);
        if (store.metrics[mi] == Metric::InnerProduct) {
            for (std::size_t i = 0; i < mat.rows(); ++i) {
                double norm2 = 0.0;
                for (std::size_t j = 0; j < mat.cols(); ++j) norm2 += mat.at(i, j) * mat.at(i, j);
                if (norm2 == 0.0) {
                    const double v = 1.0 / std::sqrt(static_cast<double>(mat.cols()));
                    for (std::size_t j = 0; j < mat.cols(); ++j) mat.at(i, j) = v;
                    out.degenerate_ids.push_back(static_cast<int>(i));
                }
            }
        }
        out.index[mi] = build_index(mat, store.metrics[mi]);
    }
    return out;
}

// Per-modality top-k, unioned and deduplicated. `exclude_id` drops the
// anchor's own row when the query is a database member.
inline std::vector<int> retrieve_candidates(const std::array<Tensor, 3>& query,
                                            const Condition& cond, const FeatureStore& store,
                                            const StoreIndices& indices, std::size_t k,
                                            int exclude_id = -1) {
    if (cond.count() == 0) throw ContractError("retrieval requires at least one available modality");
    if (k == 0) throw DomainError("retrieve_candidates: k must be >= 1");
    std::vector<int> ids;
    for (Modality m : kModalities) {
        if (!cond.available(m)) continue;
        const std::size_t mi = static_cast<std::size_t>(m);
        Tensor q = query[mi];
        if (store.metrics[mi] == Metric::InnerProduct && detail::all_zero(q))
            q = detail::uniform_unit(q.numel());
        // over-fetch by one so self-exclusion still yields k hits
        const std::size_t want = exclude_id >= 0 ? k + 1 : k;
        for (const auto& hit : topk(indices.index[mi], q, want)) {
            if (hit.first != exclude_id) ids.push_back(hit.first);
        }
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

// Mean rooted-L2 distance between query and candidate retrieval features,
// taken over the available modalities only.
inline double integrated_similarity(const std::array<Tensor, 3>& query, int candidate_id,
                                    const Condition& cond, const FeatureStore& store) {
    if (cond.count() == 0) throw ContractError("similarity requires at least one available modality");
    double sum = 0.0;
    for (Modality m : kModalities) {
        if (!cond.available(m)) continue;
        const std::size_t mi = static_cast<std::size_t>(m);
        Tensor row = store.row(m, candidate_id);
        if (row.numel() != query[mi].numel())
            throw ShapeError("similarity: query dim " + std::to_string(query[mi].numel()) +
                             " vs store dim " + std::to_string(row.numel()));
        double d2 = 0.0;
        for (std::size_t j = 0; j < row.numel(); ++j) {
            const double diff = query[mi].data[j] - row.data[j];
            d2 += diff * diff;
        }
        sum += std::sqrt(d2);
    }
    return sum / static_cast<double>(cond.count());
}

// k' = ceil(h * k), the hardness-scaled support count.
inline std::size_t dynamic_k(double h, std::size_t k) {
    if (k == 0) throw DomainError("dynamic_k: k must be >= 1");
    if (h <= 0.0 || h >= 1.0)
        throw DomainError("dynamic_k: h must lie strictly inside (0,1), got " + std::to_string(h));
    return static_cast<std::size_t>(std::ceil(h * static_cast<double>(k)));
}

inline Curriculum build_curriculum(const std::array<Tensor, 3>& query, const Condition& cond,
                                   const HardnessRecord& rec, const FeatureStore& store,
                                   const StoreIndices& indices, std::size_t k) {
    const double h = std::clamp(rec.h, kHardnessClampLo, kHardnessClampHi);
    std::vector<int> ids = retrieve_candidates(query, cond, store, indices, k, rec.id);
    std::vector<Candidate> cands;
    cands.reserve(ids.size());
    for (int id : ids) {
        Candidate c;
        c.id = id;
        for (Modality m : kModalities) {
            if (!cond.available(m)) continue;
            const std::size_t mi = static_cast<std::size_t>(m);
            Tensor row = store.row(m, id);
            double d2 = 0.0;
            for (std::size_t j = 0; j < row.numel(); ++j) {
                const double diff = query[mi].data[j] - row.data[j];
                d2 += diff * diff;
            }
            c.dist[mi] = std::sqrt(d2);
        }
        c.integrated = integrated_similarity(query, id, cond, store);
        cands.push_back(c);
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
        if (x.integrated != y.integrated) return x.integrated < y.integrated;
        return x.id < y.id;
    });
    if (cands.size() > k) cands.resize(k);

    Curriculum cur;
    cur.anchor_id = rec.id;
    cur.condition = cond;
    cur.h = h;
    cur.k_prime = dynamic_k(h, k);
    const std::size_t take = std::min(cur.k_prime, cands.size());
    cur.short_list = take < cur.k_prime;
    for (std::size_t i = 0; i < take; ++i) cur.support_ids.push_back(cands[i].id);
    return cur;
}

// Anchor is a database member: query features are its stored rows, so the
// curriculum is bit-reproducible from (store, record, k) alone.
inline Curriculum curriculum_for_member(const HardnessRecord& rec, const FeatureStore& store,
                                        const StoreIndices& indices, std::size_t k) {
    std::array<Tensor, 3> q;
    for (Modality m : kModalities) q[static_cast<std::size_t>(m)] = store.row(m, rec.id);
    return build_curriculum(q, rec.condition, rec, store, indices, k);
}

// ---- curriculum CSV ------------------------------------------------------

inline void write_curricula_csv(const std::vector<Curriculum>& cs,
                                const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot create " + path.string());
    os << "anchor_id,condition,h,k_prime,support_ids\n";
    char buf[64];
    for (const auto& c : cs) {
        std::snprintf(buf, sizeof buf, "%.17g", c.h);
        os << c.anchor_id << "," << c.condition.str() << "," << buf << "," << c.k_prime << ",";
        for (std::size_t i = 0; i < c.support_ids.size(); ++i) {
            if (i) os << ';';
            os << c.support_ids[i];
        }
        os << "\n";
    }
}

inline std::vector<Curriculum> read_curricula_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind("anchor_id,", 0) != 0)
        throw FormatError("missing curriculum CSV header in " + path.string());
    std::vector<Curriculum> out;
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
        if (cells.size() != 5) throw FormatError("malformed curriculum CSV row '" + line + "'");
        Curriculum c;
        c.anchor_id = std::stoi(cells[0]);
        c.condition = Condition::parse(cells[1]);
        c.h = std::stod(cells[2]);
        c.k_prime = std::stoul(cells[3]);
        pos = 0;
        while (pos < cells[4].size()) {
            auto semi = cells[4].find(';', pos);
            c.support_ids.push_back(std::stoi(cells[4].substr(pos, semi - pos)));
            if (semi == std::string::npos) break;
            pos = semi + 1;
        }
        c.short_list = c.support_ids.size() < c.k_prime;
        out.push_back(c);
    }
    return out;
}

}  // namespace hardy
