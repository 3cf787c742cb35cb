#include "doctest.h"

#include <cmath>
#include <vector>

#include "hardy/encoders.hpp"
#include "hardy/graph.hpp"
#include "hardy/rng.hpp"

using namespace hardy;

namespace {

// Straight-line reference implementations, independent of Graph.

std::vector<double> affine_ref(const std::vector<double>& x, const Tensor& W, const Tensor& b) {
    std::vector<double> y(W.cols(), 0.0);
    for (std::size_t j = 0; j < W.cols(); ++j) {
        for (std::size_t i = 0; i < W.rows(); ++i) y[j] += x[i] * W.at(i, j);
        y[j] += b.data[j];
    }
    return y;
}

double gelu_ref(double x) { return x * 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// rows: L x d matrices as vectors of rows.
using Seq = std::vector<std::vector<double>>;

Seq matmul_ref(const Seq& X, const Tensor& W) {
    Seq Y(X.size(), std::vector<double>(W.cols(), 0.0));
    for (std::size_t i = 0; i < X.size(); ++i)
        for (std::size_t j = 0; j < W.cols(); ++j)
            for (std::size_t r = 0; r < W.rows(); ++r) Y[i][j] += X[i][r] * W.at(r, j);
    return Y;
}

// Explicit-loop scaled dot-product attention over already-projected Q/K/V.
Seq attention_ref(const Seq& Q, const Seq& K, const Seq& V, std::size_t d) {
    Seq out(Q.size(), std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < Q.size(); ++i) {
        std::vector<double> scores(K.size(), 0.0);
        double mx = -1e300;
        for (std::size_t j = 0; j < K.size(); ++j) {
            for (std::size_t r = 0; r < d; ++r) scores[j] += Q[i][r] * K[j][r];
            scores[j] /= std::sqrt(static_cast<double>(d));
            mx = std::max(mx, scores[j]);
        }
        double sum = 0.0;
        for (double& s : scores) {
            s = std::exp(s - mx);
            sum += s;
        }
        for (std::size_t j = 0; j < K.size(); ++j)
            for (std::size_t r = 0; r < d; ++r) out[i][r] += scores[j] / sum * V[j][r];
    }
    return out;
}

Seq encode_ref(const std::vector<double>& x, const ParamSet& ps, const std::string& prefix,
               const ModelDims& dims) {
    const std::size_t d = dims.width, L = dims.tokens;
    auto flat = affine_ref(x, ps.at(prefix + ".proj.W"), ps.at(prefix + ".proj.b"));
    Seq tokens(L, std::vector<double>(d));
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < d; ++j) tokens[i][j] = flat[i * d + j];
    Seq Q = matmul_ref(tokens, ps.at(prefix + ".attn.q"));
    Seq K = matmul_ref(tokens, ps.at(prefix + ".attn.k"));
    Seq V = matmul_ref(tokens, ps.at(prefix + ".attn.v"));
    Seq attn = matmul_ref(attention_ref(Q, K, V, d), ps.at(prefix + ".attn.o"));
    Seq res1 = tokens;
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < d; ++j) res1[i][j] += attn[i][j];
    Seq out = res1;
    for (std::size_t i = 0; i < L; ++i) {
        auto h = affine_ref(res1[i], ps.at(prefix + ".ffn1.W"), ps.at(prefix + ".ffn1.b"));
        for (double& v : h) v = gelu_ref(v);
        auto f = affine_ref(h, ps.at(prefix + ".ffn2.W"), ps.at(prefix + ".ffn2.b"));
        for (std::size_t j = 0; j < d; ++j) out[i][j] += f[j];
    }
    return out;
}

ModelDims small_dims() {
    ModelDims dims;
    dims.raw = {6, 6, 6};
    dims.width = 4;
    dims.tokens = 3;
    dims.classes = 3;
    return dims;
}

Tensor run_encode(const ParamSet& ps, const Tensor& x, const ModelDims& dims) {
    Graph g;
    Forward f{g, ps};
    return g.value(encode(f, g.input(x), "enc", dims));
}

}  // namespace

TEST_CASE("encode: zero weights propagate missing (zero) input to zero sequence") {
    ModelDims dims = small_dims();
    Rng rng(1);
    ParamSet ps;
    init_encoder(ps, "enc", dims.raw[0], dims, rng);
    for (auto& [k, v] : ps) v = Tensor::zeros(v.shape);
    Tensor out = run_encode(ps, Tensor::zeros({dims.raw[0]}), dims);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("encode: deterministic in evaluation mode; missing equals zero vector bitwise") {
    ModelDims dims = small_dims();
    Rng rng(2);
    ParamSet ps;
    init_encoder(ps, "enc", dims.raw[0], dims, rng);
    Tensor x = Tensor::randn({dims.raw[0]}, rng);
    CHECK(run_encode(ps, x, dims).data == run_encode(ps, x, dims).data);
    // a zeroed vector is exactly what the masking path feeds in
    CHECK(run_encode(ps, Tensor::zeros({dims.raw[0]}), dims).data ==
          run_encode(ps, Tensor::zeros({dims.raw[0]}), dims).data);
}

TEST_CASE("encode: matches straight-line reference within 1e-10, 20 seeded trials") {
    ModelDims dims = small_dims();
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        ParamSet ps;
        Rng init = rng.split(t);
        init_encoder(ps, "enc", dims.raw[0], dims, init);
        Tensor x = Tensor::randn({dims.raw[0]}, init);
        Tensor got = run_encode(ps, x, dims);
        Seq ref = encode_ref(x.data, ps, "enc", dims);
        for (std::size_t i = 0; i < dims.tokens; ++i)
            for (std::size_t j = 0; j < dims.width; ++j)
                CHECK(std::fabs(got.at(i, j) - ref[i][j]) < 1e-10);
    }
}

TEST_CASE("pool: singleton, arithmetic, per-coordinate oracle") {
    Graph g;
    ParamSet ps;
    Forward f{g, ps};
    CHECK(g.value(pool(f, g.input(Tensor::mat(1, 2, {7, 9})))).data == std::vector<double>{7, 9});

    Graph g2;
    Forward f2{g2, ps};
    CHECK(g2.value(pool(f2, g2.input(Tensor::mat(2, 2, {1, 1, 3, 3})))).data ==
          std::vector<double>{2, 2});

    Rng rng(4);
    Tensor seq = Tensor::randn({5, 3}, rng);
    Graph g3;
    Forward f3{g3, ps};
    Tensor got = g3.value(pool(f3, g3.input(seq)));
    for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 5; ++i) mean += seq.at(i, j);
        mean /= 5.0;
        CHECK(got.data[j] == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("reconstruct_linear: bias-only, zero input, scalar-loop oracle") {
    const std::size_t d3 = 6, dm = 4;
    Rng rng(5);
    ParamSet ps;
    for (Modality m : kModalities) init_affine(ps, std::string("rec.") + modality_tag(m), d3, dm, rng);

    SUBCASE("bias-only reconstruction is exact") {
        Tensor target = Tensor::randn({dm}, rng);
        ps["rec.a.W"] = Tensor::zeros({d3, dm});
        ps["rec.a.b"] = target;
        Graph g;
        Forward f{g, ps};
        auto joint = g.input(Tensor::randn({d3}, rng));
        auto outs = reconstruct_linear(f, joint, "rec");
        CHECK(g.value(outs[0]).data == target.data);
    }
    SUBCASE("all-zero features give the bias") {
        Graph g;
        Forward f{g, ps};
        auto outs = reconstruct_linear(f, g.input(Tensor::zeros({d3})), "rec");
        CHECK(g.value(outs[1]).data == ps.at("rec.t.b").data);
    }
    SUBCASE("random case equals matvec+bias oracle") {
        Tensor joint = Tensor::randn({d3}, rng);
        Graph g;
        Forward f{g, ps};
        auto outs = reconstruct_linear(f, g.input(joint), "rec");
        for (Modality m : kModalities) {
            std::string pre = std::string("rec.") + modality_tag(m);
            auto ref = affine_ref(joint.data, ps.at(pre + ".W"), ps.at(pre + ".b"));
            const Tensor& got = g.value(outs[static_cast<std::size_t>(m)]);
            for (std::size_t i = 0; i < dm; ++i) CHECK(std::fabs(got.data[i] - ref[i]) < 1e-12);
        }
    }
}

TEST_CASE("cross_attention: singleton softmax, duplicate tokens, explicit-loop oracle") {
    const std::size_t d = 4;
    Rng rng(6);
    ParamSet ps;
    init_fusion(ps, "fus", d, rng);

    SUBCASE("L=1 output is W_V applied to the key-value token") {
        Tensor q = Tensor::randn({1, d}, rng);
        Tensor kv = Tensor::randn({1, d}, rng);
        Graph g;
        Forward f{g, ps};
        Tensor got = g.value(cross_attention(f, g.input(q), g.input(kv), "fus", d));
        Seq ref = matmul_ref({kv.data}, ps.at("fus.v"));
        for (std::size_t j = 0; j < d; ++j) CHECK(got.data[j] == doctest::Approx(ref[0][j]).epsilon(1e-12));
    }
    SUBCASE("identical key-value tokens collapse to W_V of that token") {
        Tensor q = Tensor::randn({3, d}, rng);
        std::vector<double> tok(d);
        for (auto& v : tok) v = rng.normal();
        Tensor kv = Tensor::zeros({3, d});
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < d; ++j) kv.at(i, j) = tok[j];
        Graph g;
        Forward f{g, ps};
        Tensor got = g.value(cross_attention(f, g.input(q), g.input(kv), "fus", d));
        Seq ref = matmul_ref({tok}, ps.at("fus.v"));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < d; ++j)
                CHECK(got.at(i, j) == doctest::Approx(ref[0][j]).epsilon(1e-10));
    }
    SUBCASE("random L=4 matches explicit-loop attention oracle") {
        Tensor q = Tensor::randn({4, d}, rng);
        Tensor kv = Tensor::randn({4, d}, rng);
        Graph g;
        Forward f{g, ps};
        Tensor got = g.value(cross_attention(f, g.input(q), g.input(kv), "fus", d));
        auto to_seq = [d](const Tensor& t) {
            Seq s(t.rows(), std::vector<double>(d));
            for (std::size_t i = 0; i < t.rows(); ++i)
                for (std::size_t j = 0; j < d; ++j) s[i][j] = t.at(i, j);
            return s;
        };
        Seq Q = matmul_ref(to_seq(q), ps.at("fus.q"));
        Seq K = matmul_ref(to_seq(kv), ps.at("fus.k"));
        Seq V = matmul_ref(to_seq(kv), ps.at("fus.v"));
        Seq ref = attention_ref(Q, K, V, d);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < d; ++j) CHECK(std::fabs(got.at(i, j) - ref[i][j]) < 1e-10);
    }
    SUBCASE("width mismatch raises a shape error") {
        Graph g;
        Forward f{g, ps};
        CHECK_THROWS_AS(cross_attention(f, g.input(Tensor::zeros({2, d + 1})),
                                        g.input(Tensor::zeros({2, d})), "fus", d),
                        ShapeError);
    }
}

TEST_CASE("attention weights: every query row sums to 1 within 1e-12") {
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        Tensor scores = Tensor::randn({4, 4}, rng, 5.0);
        Graph g;
        const Tensor w = g.value(g.softmax(g.input(scores)));
        for (std::size_t i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 4; ++j) sum += w.at(i, j);
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("fuse_pair: exact symmetry over 100 seeded trials; zero params give zero") {
    const std::size_t d = 4;
    Rng rng(8);
    for (int t = 0; t < 100; ++t) {
        Rng init = rng.split(t);
        ParamSet ps;
        init_fusion(ps, "fus", d, init);
        Tensor a = Tensor::randn({3, d}, init);
        Tensor b = Tensor::randn({3, d}, init);
        Graph g1;
        Forward f1{g1, ps};
        Tensor ab = g1.value(fuse_pair(f1, g1.input(a), g1.input(b), "fus", d));
        Graph g2;
        Forward f2{g2, ps};
        Tensor ba = g2.value(fuse_pair(f2, g2.input(b), g2.input(a), "fus", d));
        CHECK(ab.data == ba.data);
    }
    ParamSet zero;
    init_fusion(zero, "fus", d, rng);
    for (auto& [k, v] : zero) v = Tensor::zeros(v.shape);
    Graph g;
    Forward f{g, zero};
    Tensor out = g.value(fuse_pair(f, g.input(Tensor::randn({2, d}, rng)),
                                   g.input(Tensor::randn({2, d}, rng)), "fus", d));
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("classify: zero weights, selector, matvec oracle") {
    Rng rng(9);
    ParamSet ps;
    init_affine(ps, "head", 3, 3, rng);

    SUBCASE("zero weights reproduce the bias for any input") {
        ps["head.W"] = Tensor::zeros({3, 3});
        ps["head.b"] = Tensor::vec({1, 0, 0});
        Graph g;
        Forward f{g, ps};
        CHECK(g.value(classify(f, g.input(Tensor::randn({3}, rng)), "head")).data ==
              std::vector<double>{1, 0, 0});
    }
    SUBCASE("identity weights on a one-hot feature reproduce the feature") {
        ps["head.W"] = Tensor::identity(3);
        ps["head.b"] = Tensor::zeros({3});
        Graph g;
        Forward f{g, ps};
        CHECK(g.value(classify(f, g.input(Tensor::vec({0, 1, 0})), "head")).data ==
              std::vector<double>{0, 1, 0});
    }
    SUBCASE("random case equals matvec+bias oracle") {
        Tensor x = Tensor::randn({3}, rng);
        Graph g;
        Forward f{g, ps};
        Tensor got = g.value(classify(f, g.input(x), "head"));
        auto ref = affine_ref(x.data, ps.at("head.W"), ps.at("head.b"));
        for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(got.data[i] - ref[i]) < 1e-12);
    }
}
