#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hardy/graph.hpp"
#include "hardy/rng.hpp"
#include "hardy/tensor.hpp"

namespace hardy {

enum class Modality { Acoustic = 0, Textual = 1, Visual = 2 };

inline const char* modality_tag(Modality m) {
    switch (m) {
        case Modality::Acoustic: return "a";
        case Modality::Textual: return "t";
        default: return "v";
    }
}

constexpr std::array<Modality, 3> kModalities{Modality::Acoustic, Modality::Textual,
                                              Modality::Visual};

struct ModelDims {
    std::array<std::size_t, 3> raw{64, 64, 64};  // d_a, d_t, d_v
    std::size_t width = 32;                      // d
    std::size_t tokens = 4;                      // L
    std::size_t classes = 4;                     // C
    std::size_t retrieval = 32;                  // d_r
    std::size_t ae_hidden = 64;                  // autoencoder hidden

    std::size_t raw_dim(Modality m) const { return raw[static_cast<std::size_t>(m)]; }
};

// Forward-pass context: one graph, one parameter set, one mode. Parameter
// nodes are created on demand and cached by name.
struct Forward {
    Graph& g;
    const ParamSet& params;
    bool training = false;
    Rng* rng = nullptr;           // required when training with dropout > 0
    double dropout_rate = 0.0;

    Graph::NodeId p(const std::string& name) { return g.param(name, params.at(name)); }
};

// ---- parameter initialization ------------------------------------------

inline void init_affine(ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t out,
                        Rng& rng) {
    ps[prefix + ".W"] = Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    ps[prefix + ".b"] = Tensor::zeros({out});
}

// Transformer-style encoder: raw projection to L tokens, one
// self-attention block, two-layer feed-forward, residual connections.
inline void init_encoder(ParamSet& ps, const std::string& prefix, std::size_t raw_dim,
                         const ModelDims& dims, Rng& rng) {
    const std::size_t d = dims.width, L = dims.tokens;
    init_affine(ps, prefix + ".proj", raw_dim, L * d, rng);
    for (const char* w : {"q", "k", "v", "o"})
        ps[prefix + ".attn." + std::string(w)] =
            Tensor::randn({d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    init_affine(ps, prefix + ".ffn1", d, 4 * d, rng);
    init_affine(ps, prefix + ".ffn2", 4 * d, d, rng);
}

inline void init_fusion(ParamSet& ps, const std::string& prefix, std::size_t d, Rng& rng) {
    for (const char* w : {"q", "k", "v"})
        ps[prefix + "." + std::string(w)] =
            Tensor::randn({d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
}

inline void init_retrieval_encoder(ParamSet& ps, const std::string& prefix, std::size_t raw_dim,
                                   std::size_t d_r, Rng& rng) {
    init_affine(ps, prefix + ".l1", raw_dim, d_r, rng);
    init_affine(ps, prefix + ".l2", d_r, d_r, rng);
}

inline void init_autoencoder(ParamSet& ps, const std::string& prefix, std::size_t in,
                             std::size_t hidden, std::size_t raw_dim, Rng& rng) {
    init_affine(ps, prefix + ".enc", in, hidden, rng);
    init_affine(ps, prefix + ".dec", hidden, raw_dim, rng);
}

// ---- forward building blocks -------------------------------------------

// x: rank-1 vector of width `in`; returns rank-1 vector of width `out`.
inline Graph::NodeId affine(Forward& f, Graph::NodeId x, const std::string& prefix) {
    const Tensor& W = f.params.at(prefix + ".W");
    auto row = f.g.reshape(x, {1, W.rows()});
    auto y = f.g.matmul(row, f.p(prefix + ".W"));
    auto yb = f.g.add(f.g.reshape(y, {W.cols()}), f.p(prefix + ".b"));
    return yb;
}

// Scaled dot-product attention. query: Lq x d, keyvalue: Lk x d.
inline Graph::NodeId scaled_attention(Forward& f, Graph::NodeId q, Graph::NodeId k,
                                      Graph::NodeId v, std::size_t d) {
    auto scores = f.g.scale(f.g.matmul(q, f.g.transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    auto weights = f.g.softmax(scores);
    return f.g.matmul(weights, v);
}

// Semantic encoder forward. `x` is a rank-1 raw vector node (missing
// modalities are zeroed by the caller). Output is the L x d token sequence.
inline Graph::NodeId encode(Forward& f, Graph::NodeId x, const std::string& prefix,
                            const ModelDims& dims) {
    const std::size_t d = dims.width, L = dims.tokens;
    auto flat = affine(f, x, prefix + ".proj");
    auto tokens = f.g.reshape(flat, {L, d});
    auto q = f.g.matmul(tokens, f.p(prefix + ".attn.q"));
    auto k = f.g.matmul(tokens, f.p(prefix + ".attn.k"));
    auto v = f.g.matmul(tokens, f.p(prefix + ".attn.v"));
    auto attn = f.g.matmul(scaled_attention(f, q, k, v, d), f.p(prefix + ".attn.o"));
    auto res1 = f.g.add(tokens, attn);
    auto h = f.g.gelu(f.g.add(f.g.matmul(res1, f.p(prefix + ".ffn1.W")), f.p(prefix + ".ffn1.b")));
    if (f.training && f.dropout_rate > 0.0) h = f.g.dropout(h, f.dropout_rate, *f.rng);
    auto ffn = f.g.add(f.g.matmul(h, f.p(prefix + ".ffn2.W")), f.p(prefix + ".ffn2.b"));
    return f.g.add(res1, ffn);
}

// Mean over tokens: L x d -> d.
inline Graph::NodeId pool(Forward& f, Graph::NodeId seq) { return f.g.mean_rows(seq); }

// Single cross-attention pass with shared fusion weights; no residual and
// no output projection.
inline Graph::NodeId cross_attention(Forward& f, Graph::NodeId query, Graph::NodeId keyvalue,
                                     const std::string& prefix, std::size_t d) {
    if (f.g.value(query).cols() != d || f.g.value(keyvalue).cols() != d) {
        throw ShapeError("cross_attention: sequence widths " +
                         f.g.value(query).shape_string() + " / " +
                         f.g.value(keyvalue).shape_string() + " must be " + std::to_string(d));
    }
    auto q = f.g.matmul(query, f.p(prefix + ".q"));
    auto k = f.g.matmul(keyvalue, f.p(prefix + ".k"));
    auto v = f.g.matmul(keyvalue, f.p(prefix + ".v"));
    return scaled_attention(f, q, k, v, d);
}

// Symmetric pairwise fusion: both attention directions summed.
inline Graph::NodeId fuse_pair(Forward& f, Graph::NodeId fp, Graph::NodeId fq,
                               const std::string& prefix, std::size_t d) {
    auto pq = cross_attention(f, fp, fq, prefix, d);
    auto qp = cross_attention(f, fq, fp, prefix, d);
    return f.g.add(pq, qp);
}

// Classification head on a pooled feature vector.
inline Graph::NodeId classify(Forward& f, Graph::NodeId pooled, const std::string& prefix) {
    return affine(f, pooled, prefix);
}

// Hardness-module linear reconstructors: x_hat^m = W_m [f_a; f_t; f_v] + b_m.
inline std::array<Graph::NodeId, 3> reconstruct_linear(Forward& f, Graph::NodeId joint,
                                                       const std::string& prefix) {
    std::array<Graph::NodeId, 3> out{};
    for (Modality m : kModalities)
        out[static_cast<std::size_t>(m)] =
            affine(f, joint, prefix + "." + modality_tag(m));
    return out;
}

// Retrieval encoder: two affine layers with GELU between.
inline Graph::NodeId retrieval_encode(Forward& f, Graph::NodeId x, const std::string& prefix) {
    auto h = f.g.gelu(affine(f, x, prefix + ".l1"));
    return affine(f, h, prefix + ".l2");
}

// Recognition-model reconstruction autoencoder: 3d -> hidden -> raw.
inline Graph::NodeId autoencode(Forward& f, Graph::NodeId joint, const std::string& prefix) {
    auto h = f.g.gelu(affine(f, joint, prefix + ".enc"));
    return affine(f, h, prefix + ".dec");
}

}  // namespace hardy
