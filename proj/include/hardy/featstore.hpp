#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "hardy/adam.hpp"
#include "hardy/data.hpp"
#include "hardy/encoders.hpp"
#include "hardy/errors.hpp"
#include "hardy/io.hpp"
#include "hardy/tensor.hpp"

namespace hardy {

enum class Metric { InnerProduct, EuclideanL2 };

inline const char* metric_name(Metric m) {
    return m == Metric::InnerProduct ? "ip" : "l2";
}

inline Metric parse_metric(const std::string& s) {
    if (s == "ip") return Metric::InnerProduct;
    if (s == "l2") return Metric::EuclideanL2;
    throw ConfigError("unknown metric '" + s + "' (expected ip or l2)");
}

// Paper default: inner product for text, L2 for acoustic and visual.
inline std::array<Metric, 3> default_metrics() {
    return {Metric::EuclideanL2, Metric::InnerProduct, Metric::EuclideanL2};
}

inline Tensor normalize(const Tensor& v) {
    double norm2 = 0.0;
    for (double x : v.data) norm2 += x * x;
    if (norm2 == 0.0) throw DegenerateInputError("cannot normalize a zero vector");
    const double inv = 1.0 / std::sqrt(norm2);
    Tensor out = v;
    for (double& x : out.data) x *= inv;
    return out;
}

// Exhaustive exact index. Inner-product indices keep L2-normalized copies
// of the rows; the source matrix is never modified.
struct FlatIndex {
    Metric metric = Metric::EuclideanL2;
    Tensor rows;  // N x d

    std::size_t size() const { return rows.rows(); }
    std::size_t dim() const { return rows.cols(); }
};

inline FlatIndex build_index(const Tensor& matrix, Metric metric) {
    if (matrix.rank() != 2 || matrix.rows() == 0)
        throw ShapeError("build_index: non-empty rank-2 matrix required, got " + matrix.shape_string());
    FlatIndex idx;
    idx.metric = metric;
    idx.rows = matrix;
    if (metric == Metric::InnerProduct) {
        for (std::size_t i = 0; i < matrix.rows(); ++i) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < matrix.cols(); ++j) norm2 += matrix.at(i, j) * matrix.at(i, j);
            if (norm2 == 0.0)
                throw DegenerateInputError("zero row " + std::to_string(i) +
                                           " cannot be indexed under inner product");
            const double inv = 1.0 / std::sqrt(norm2);
            for (std::size_t j = 0; j < matrix.cols(); ++j) idx.rows.at(i, j) *= inv;
        }
    }
    return idx;
}

// Exact top-k. Inner product: descending dot with the normalized query.
// L2: ascending squared distance. Ties break toward the lower id.
inline std::vector<std::pair<int, double>> topk(const FlatIndex& idx, const Tensor& query,
                                                std::size_t k) {
    if (query.rank() != 1 || query.numel() != idx.dim())
        throw ShapeError("topk: query " + query.shape_string() + " vs index dim " +
                         std::to_string(idx.dim()));
    if (k == 0) throw DomainError("topk: k must be >= 1");
    Tensor q = query;
    if (idx.metric == Metric::InnerProduct) q = normalize(query);
    const std::size_t n = idx.size(), d = idx.dim();
    std::vector<std::pair<int, double>> scored(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        if (idx.metric == Metric::InnerProduct) {
            for (std::size_t j = 0; j < d; ++j) s += q.data[j] * idx.rows.at(i, j);
        } else {
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = q.data[j] - idx.rows.at(i, j);
                s += diff * diff;
            }
        }
        scored[i] = {static_cast<int>(i), s};
    }
    const bool descending = idx.metric == Metric::InnerProduct;
    std::sort(scored.begin(), scored.end(), [descending](const auto& x, const auto& y) {
        if (x.second != y.second) return descending ? x.second > y.second : x.second < y.second;
        return x.first < y.first;
    });
    scored.resize(std::min(k, n));
    return scored;
}

// ---- feature store -------------------------------------------------------

// Aligned per-modality retrieval feature matrices over one sample set.
struct FeatureStore {
    std::array<Tensor, 3> features;  // each N x d_r(m)
    std::vector<int> labels;
    std::array<Metric, 3> metrics = default_metrics();
    std::uint64_t seed = 0;

    std::size_t size() const { return labels.size(); }

    const Tensor& matrix(Modality m) const { return features[static_cast<std::size_t>(m)]; }

    Tensor row(Modality m, int id) const {
        const Tensor& mat = matrix(m);
        if (id < 0 || static_cast<std::size_t>(id) >= mat.rows())
            throw LookupError("store has no sample id " + std::to_string(id));
        Tensor out = Tensor::zeros({mat.cols()});
        for (std::size_t j = 0; j < mat.cols(); ++j) out.data[j] = mat.at(id, j);
        return out;
    }

    void validate() const {
        for (Modality m : kModalities) {
            if (matrix(m).rows() != labels.size())
                throw IntegrityError("store modality " + std::string(modality_tag(m)) +
                                     " row count disagrees with labels");
        }
    }
};

inline void write_store(const FeatureStore& store, const std::filesystem::path& dir) {
    store.validate();
    std::filesystem::create_directories(dir);
    std::map<std::string, std::string> mf;
    mf["count"] = std::to_string(store.size());
    mf["seed"] = std::to_string(store.seed);
    for (Modality m : kModalities) {
        const std::string tag = modality_tag(m);
        write_matrix(dir / (tag + ".hmf1"), store.matrix(m));
        mf["dim_" + tag] = std::to_string(store.matrix(m).cols());
        mf["metric_" + tag] = metric_name(store.metrics[static_cast<std::size_t>(m)]);
    }
    write_labels(dir / "labels.hml1", store.labels);
    write_manifest(dir / "manifest.txt", mf);
}

inline FeatureStore read_store(const std::filesystem::path& dir) {
    auto mf = read_manifest(dir / "manifest.txt");
    FeatureStore store;
    store.seed = std::stoull(mf.at("seed"));
    const std::size_t n = std::stoul(mf.at("count"));
    for (Modality m : kModalities) {
        const std::string tag = modality_tag(m);
        const std::size_t mi = static_cast<std::size_t>(m);
        store.features[mi] = read_matrix(dir / (tag + ".hmf1"));
        const std::size_t dim = std::stoul(mf.at("dim_" + tag));
        if (store.features[mi].rows() != n)
            throw IntegrityError("manifest field count disagrees with " + tag + ".hmf1");
        if (store.features[mi].cols() != dim)
            throw IntegrityError("manifest field dim_" + tag + " disagrees with " + tag + ".hmf1");
        store.metrics[mi] = parse_metric(mf.at("metric_" + tag));
    }
    store.labels = read_labels(dir / "labels.hml1");
    if (store.labels.size() != n) throw IntegrityError("manifest field count disagrees with labels.hml1");
    return store;
}

// ---- retrieval encoders --------------------------------------------------

// Two trainable affine layers per modality (frozen backbones are identity
// over the stored raw features). `identity` bypasses the layers entirely,
// which reproduces the raw-features ablation.
struct RetrievalEncoders {
    ParamSet params;
    ModelDims dims;
    bool identity = false;

    Tensor embed(Modality m, const Tensor& raw) const {
        if (identity) return raw;
        Graph g;
        Forward f{g, params};
        auto z = retrieval_encode(f, g.input(raw), std::string("ret.") + modality_tag(m));
        return g.value(z);
    }
};

// Classification-guided fine-tuning of the retrieval layers (one head per
// modality, cross-entropy on the sample label).
inline RetrievalEncoders train_retrieval_encoders(const Dataset& ds, const ModelDims& dims,
                                                  std::size_t epochs, double lr,
                                                  std::size_t batch, Rng& rng) {
    RetrievalEncoders enc;
    enc.dims = dims;
    Rng init = rng.split("init");
    for (Modality m : kModalities) {
        const std::string tag = modality_tag(m);
        init_retrieval_encoder(enc.params, "ret." + tag, dims.raw_dim(m), dims.retrieval, init);
        init_affine(enc.params, "ret." + tag + ".head", dims.retrieval, dims.classes, init);
    }
    Adam opt(AdamConfig{.lr = lr});
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t start = 0; start < ds.size(); start += batch) {
            const std::size_t end = std::min(ds.size(), start + batch);
            GradMap acc;
            for (std::size_t i = start; i < end; ++i) {
                Graph g;
                Forward f{g, enc.params};
                std::vector<Graph::NodeId> losses;
                for (Modality m : kModalities) {
                    const std::string tag = modality_tag(m);
                    auto z = retrieval_encode(f, g.input(ds.samples[i].raw_of(m)), "ret." + tag);
                    auto logits = affine(f, z, "ret." + tag + ".head");
                    losses.push_back(g.cross_entropy(logits, static_cast<std::size_t>(ds.samples[i].label)));
                }
                auto loss = g.scale(g.add(g.add(losses[0], losses[1]), losses[2]),
                                    1.0 / static_cast<double>(end - start));
                for (auto& [name, grad] : g.backward(loss)) {
                    auto it = acc.find(name);
                    if (it == acc.end()) {
                        acc[name] = grad;
                    } else {
                        for (std::size_t j = 0; j < grad.numel(); ++j) it->second.data[j] += grad.data[j];
                    }
                }
            }
            opt.step(enc.params, acc);
        }
    }
    return enc;
}

// Embed every training sample and assemble the three modality databases.
inline FeatureStore build_feature_store(const Dataset& ds, const RetrievalEncoders& enc,
                                        const std::array<Metric, 3>& metrics, std::uint64_t seed) {
    FeatureStore store;
    store.metrics = metrics;
    store.seed = seed;
    for (Modality m : kModalities) {
        const std::size_t mi = static_cast<std::size_t>(m);
        const std::size_t dim = enc.identity ? ds.dims[mi] : enc.dims.retrieval;
        store.features[mi] = Tensor::zeros({ds.size(), dim});
        for (std::size_t i = 0; i < ds.size(); ++i) {
            Tensor z = enc.embed(m, ds.samples[i].raw[mi]);
            // f32 grid keeps the on-disk round trip lossless
            for (std::size_t j = 0; j < dim; ++j)
                store.features[mi].at(i, j) = static_cast<double>(static_cast<float>(z.data[j]));
        }
    }
    store.labels.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) store.labels[i] = ds.samples[i].label;
    return store;
}

}  // namespace hardy
