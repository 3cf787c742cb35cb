#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "hardy/data.hpp"
#include "hardy/hardness.hpp"

using namespace hardy;
namespace fs = std::filesystem;

namespace {

ModelDims smoke_dims() {
    ModelDims dims;
    dims.raw = {10, 10, 10};
    dims.width = 8;
    dims.tokens = 2;
    dims.classes = 4;
    return dims;
}

Dataset smoke_dataset(std::size_t n, std::uint64_t seed) {
    SynthSpec spec;
    spec.classes = 4;
    spec.train_n = n;
    spec.test_n = 4;
    spec.dims = {10, 10, 10};
    spec.latent = 8;
    spec.seed = seed;
    fs::path dir = fs::temp_directory_path() / ("hardy_hardness_smoke_" + std::to_string(seed));
    fs::remove_all(dir);
    synth_data(spec, dir);
    Dataset ds = load_dataset(dir / "train");
    fs::remove_all(dir);
    return ds;
}

double entropy_oracle(const std::vector<double>& f) {
    double mx = f[0];
    for (double v : f) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : f) sum += std::exp(v - mx);
    double h = 0.0;
    for (double v : f) {
        const double p = std::exp(v - mx) / sum;
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

double run_entropy(const std::vector<double>& v) {
    Graph g;
    ParamSet ps;
    Forward f{g, ps};
    return g.value(feature_entropy(f, g.input(Tensor::vec(v)))).item();
}

double param_checksum(const ParamSet& ps) {
    double acc = 0.0;
    std::size_t i = 1;
    for (const auto& [k, t] : ps)
        for (double v : t.data) acc += v * static_cast<double>(i++ % 97);
    return acc;
}

}  // namespace

TEST_CASE("direct_hardness: zero error, unit offsets, scalar-loop sum") {
    std::array<Tensor, 3> x{Tensor::vec({1, 2}), Tensor::vec({3, 4}), Tensor::vec({5, 6})};
    CHECK(direct_hardness(x, x).total == 0.0);

    std::array<Tensor, 3> xh = x;
    xh[0] = Tensor::vec({2, 3});
    DirectHardness d = direct_hardness(x, xh);
    CHECK(d.per_modality[0] == 1.0);
    CHECK(d.total == 1.0);

    Rng rng(1);
    std::array<Tensor, 3> a{Tensor::randn({5}, rng), Tensor::randn({6}, rng), Tensor::randn({7}, rng)};
    std::array<Tensor, 3> b{Tensor::randn({5}, rng), Tensor::randn({6}, rng), Tensor::randn({7}, rng)};
    DirectHardness got = direct_hardness(a, b);
    double ref = 0.0;
    for (std::size_t mi = 0; mi < 3; ++mi) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a[mi].numel(); ++j)
            acc += (a[mi].data[j] - b[mi].data[j]) * (a[mi].data[j] - b[mi].data[j]);
        ref += acc / static_cast<double>(a[mi].numel());
    }
    CHECK(got.total == doctest::Approx(ref).epsilon(1e-12));

    std::array<Tensor, 3> bad = b;
    bad[1] = Tensor::vec({1});
    CHECK_THROWS_AS(direct_hardness(a, bad), ShapeError);
}

TEST_CASE("feature_entropy: uniform ln4, near-deterministic spike, loop oracle") {
    CHECK(run_entropy({0, 0, 0, 0}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(run_entropy({50, 0, 0, 0}) >= 0.0);
    CHECK(run_entropy({50, 0, 0, 0}) < 1e-8);

    Rng rng(2);
    for (int t = 0; t < 30; ++t) {
        std::vector<double> v(4 + rng.uniform_int(5));
        for (auto& x : v) x = 3.0 * rng.normal();
        CHECK(std::fabs(run_entropy(v) - entropy_oracle(v)) < 1e-12);
    }
}

TEST_CASE("mutual_information: symmetry, uniform entropies, composition oracle") {
    const std::size_t d = 4;
    Rng rng(3);
    ParamSet ps;
    init_fusion(ps, "fus", d, rng);

    auto mi_of = [&](const Tensor& a, const Tensor& b) {
        Graph g;
        Forward f{g, ps};
        return g.value(mutual_information(f, g.input(a), g.input(b), "fus", d)).item();
    };

    for (int t = 0; t < 20; ++t) {
        Tensor a = Tensor::randn({3, d}, rng);
        Tensor b = Tensor::randn({3, d}, rng);
        CHECK(mi_of(a, b) == mi_of(b, a));
    }

    ParamSet zero = ps;
    for (auto& [k, v] : zero) v = Tensor::zeros(v.shape);
    Graph g;
    Forward f{g, zero};
    double got = g.value(mutual_information(f, g.input(Tensor::zeros({2, d})),
                                            g.input(Tensor::zeros({2, d})), "fus", d)).item();
    CHECK(got == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // composition oracle: entropies of pooled inputs and pooled fusion
    Tensor a = Tensor::randn({3, d}, rng);
    Tensor b = Tensor::randn({3, d}, rng);
    Graph g2;
    Forward f2{g2, ps};
    auto an = g2.input(a);
    auto bn = g2.input(b);
    double fused_pooled_entropy;
    {
        Graph g3;
        Forward f3{g3, ps};
        auto fp = fuse_pair(f3, g3.input(a), g3.input(b), "fus", d);
        fused_pooled_entropy = entropy_oracle(g3.value(g3.mean_rows(fp)).data);
    }
    double ref = entropy_oracle(g2.value(g2.mean_rows(an)).data) +
                 entropy_oracle(g2.value(g2.mean_rows(bn)).data) - fused_pooled_entropy;
    CHECK(std::fabs(mi_of(a, b) - ref) < 1e-12);
}

TEST_CASE("indirect_hardness: zero fusion on zero features, relabeling invariance, composition") {
    const std::size_t d = 4;
    Rng rng(4);
    ParamSet ps;
    init_fusion(ps, "fus", d, rng);
    std::array<Tensor, 3> seqs{Tensor::randn({2, d}, rng), Tensor::randn({2, d}, rng),
                               Tensor::randn({2, d}, rng)};

    auto ih = [&](const std::array<Tensor, 3>& s) {
        Graph g;
        Forward f{g, ps};
        return g.value(indirect_hardness(f, {g.input(s[0]), g.input(s[1]), g.input(s[2])}, "fus", d))
            .item();
    };
    auto mi_of = [&](const Tensor& a, const Tensor& b) {
        Graph g;
        Forward f{g, ps};
        return g.value(mutual_information(f, g.input(a), g.input(b), "fus", d)).item();
    };

    // sum of the three pairwise terms
    double ref = mi_of(seqs[0], seqs[1]) + mi_of(seqs[0], seqs[2]) + mi_of(seqs[1], seqs[2]);
    CHECK(ih(seqs) == doctest::Approx(ref).epsilon(1e-12));

    // invariant under relabeling of the modalities (shared fusion weights)
    std::array<Tensor, 3> perm{seqs[2], seqs[0], seqs[1]};
    CHECK(ih(perm) == doctest::Approx(ih(seqs)).epsilon(1e-12));
}

TEST_CASE("unified_hardness: logistic at zero, Eq-value, asymptote, monotone grid, ablations") {
    HardnessConfig cfg;
    CHECK(unified_hardness(0.0, 0.0, cfg) == 0.5);
    CHECK(unified_hardness(1.0, 0.5, cfg) == doctest::Approx(0.9608).epsilon(1e-4));
    CHECK(unified_hardness(1e9, 0.0, cfg) <= kHardnessClampHi);
    CHECK(unified_hardness(-1e9, 0.0, cfg) >= kHardnessClampLo);

    double prev = 0.0;
    for (int i = 0; i < 50; ++i) {
        double h = unified_hardness(-2.0 + 0.1 * i, 0.3, cfg);
        if (i) CHECK(h > prev);
        CHECK(h > 0.0);
        CHECK(h < 1.0);
        prev = h;
    }

    HardnessConfig no_dir{0.0, 0.4, 4.0};
    CHECK(unified_hardness(5.0, 0.2, no_dir) == unified_hardness(-7.0, 0.2, no_dir));
    HardnessConfig no_ind{0.6, 0.0, 4.0};
    CHECK(unified_hardness(0.3, 9.0, no_ind) == unified_hardness(0.3, -9.0, no_ind));

    CHECK_THROWS_AS(unified_hardness(0, 0, HardnessConfig{-1, 0.4, 4}), DomainError);
}

TEST_CASE("hardness training: zero lr freezes, losses fall, determinism, contracts") {
    ModelDims dims = smoke_dims();
    HardnessTrainOptions fast{.epochs = 1, .lr = 0.0, .batch = 16, .dropout = 0.0};
    Dataset tiny = smoke_dataset(24, 100);

    SUBCASE("zero learning rate leaves parameters unchanged") {
        Rng rng(5);
        HardnessModule mod(dims, rng);
        ParamSet before = mod.params();
        Rng train_rng(6);
        mod.train_stage1(tiny, fast, train_rng);
        for (const auto& [k, t] : before) CHECK(mod.params().at(k).data == t.data);
        mod.train_stage2(tiny, fast, train_rng);
        for (const auto& [k, t] : before) CHECK(mod.params().at(k).data == t.data);
    }

    SUBCASE("stage 2 before stage 1 is a contract error") {
        Rng rng(7);
        HardnessModule mod(dims, rng);
        Rng train_rng(8);
        CHECK_THROWS_AS(mod.train_stage2(tiny, fast, train_rng), ContractError);
    }

    SUBCASE("stage 1 rejects samples with missing modalities") {
        Rng rng(9);
        HardnessModule mod(dims, rng);
        Dataset bad = tiny;
        bad.samples[3].available = Condition{true, false, true};
        Rng train_rng(10);
        CHECK_THROWS_AS(mod.train_stage1(bad, fast, train_rng), ContractError);
    }

    SUBCASE("smoke run: classification and reconstruction losses decrease; determinism") {
        Dataset ds = smoke_dataset(200, 11);
        auto run = [&](std::uint64_t seed) {
            Rng rng(seed);
            HardnessModule mod(dims, rng);
            HardnessTrainOptions opt{.epochs = 10, .lr = 3e-3, .batch = 32, .dropout = 0.0};
            Rng train_rng(seed + 1);
            mod.train_stage1(ds, opt, train_rng);
            mod.train_stage2(ds, opt, train_rng);
            return mod;
        };
        HardnessModule mod = run(12);
        CHECK(mod.stage1_ce_trace().back() < mod.stage1_ce_trace().front());
        CHECK(mod.stage2_trace().back() < mod.stage2_trace().front());
        CHECK(mod.frozen());

        HardnessModule mod2 = run(12);
        for (const auto& [k, t] : mod.params()) CHECK(mod2.params().at(k).data == t.data);

        // deterministic scoring, no parameter mutation
        HardnessConfig cfg;
        const double checksum = param_checksum(mod.params());
        auto r1 = mod.score(ds.samples[0], Condition::parse("at"), cfg);
        auto r2 = mod.score(ds.samples[0], Condition::parse("at"), cfg);
        CHECK(r1.h == r2.h);
        CHECK(r1.h_dir == r2.h_dir);
        CHECK(r1.h_ind == r2.h_ind);
        CHECK(param_checksum(mod.params()) == checksum);
        CHECK(r1.h > 0.0);
        CHECK(r1.h < 1.0);
        // unified score reproducible from stored components
        CHECK(std::fabs(r1.h - unified_hardness(r1.h_dir, r1.h_ind, cfg)) < 1e-12);

        // checkpoint round trip preserves scores bit-exactly
        fs::path ck = fs::temp_directory_path() / "hardy_hardness_ck.hmc1";
        mod.save(ck);
        HardnessModule loaded = HardnessModule::load(ck);
        CHECK(loaded.frozen());
        auto r3 = loaded.score(ds.samples[0], Condition::parse("at"), cfg);
        CHECK(r3.h == r1.h);
        fs::remove(ck);
    }

    SUBCASE("scoring an unfrozen module is a contract error") {
        Rng rng(13);
        HardnessModule mod(dims, rng);
        CHECK_THROWS_AS(mod.score(tiny.samples[0], Condition::parse("a"), HardnessConfig{}),
                        ContractError);
    }
}

TEST_CASE("score: bias-only reconstructors on a constant sample give h_dir 0") {
    ModelDims dims = smoke_dims();
    Rng rng(14);
    HardnessModule mod(dims, rng);
    Dataset tiny = smoke_dataset(8, 15);
    HardnessTrainOptions fast{.epochs = 1, .lr = 0.0, .batch = 8, .dropout = 0.0};
    Rng train_rng(16);
    mod.train_stage1(tiny, fast, train_rng);
    mod.train_stage2(tiny, fast, train_rng);
    // surgically install bias-only reconstructors that reproduce sample 0
    ParamSet hacked = mod.params();
    for (Modality m : kModalities) {
        const std::string pre = std::string("h.rec.") + modality_tag(m);
        hacked[pre + ".W"] = Tensor::zeros(hacked[pre + ".W"].shape);
        hacked[pre + ".b"] = tiny.samples[0].raw[static_cast<std::size_t>(m)];
    }
    fs::path ck = fs::temp_directory_path() / "hardy_hardness_biasonly.hmc1";
    {
        ParamSet with_meta = hacked;
        with_meta["__meta.stage"] = Tensor::scalar(2);
        with_meta["__meta.dims"] = Tensor::vec({10, 10, 10, 8, 2, 4});
        write_checkpoint(ck, with_meta);
    }
    HardnessModule biased = HardnessModule::load(ck);
    HardnessConfig cfg;
    auto r = biased.score(tiny.samples[0], Condition{true, true, true}, cfg);
    CHECK(r.h_dir == 0.0);
    CHECK(r.h == doctest::Approx(unified_hardness(0.0, r.h_ind, cfg)).epsilon(1e-12));
    fs::remove(ck);
}

TEST_CASE("hardness CSV round-trips") {
    std::vector<HardnessRecord> recs;
    Rng rng(17);
    for (int i = 0; i < 10; ++i) {
        HardnessRecord r;
        r.id = i;
        r.condition = Condition::six()[i % 6];
        r.h_dir_a = rng.uniform();
        r.h_dir_t = rng.uniform();
        r.h_dir_v = rng.uniform();
        r.h_dir = r.h_dir_a + r.h_dir_t + r.h_dir_v;
        r.h_ind = rng.normal();
        r.h = unified_hardness(r.h_dir, r.h_ind, HardnessConfig{});
        recs.push_back(r);
    }
    fs::path p = fs::temp_directory_path() / "hardy_hardness.csv";
    write_hardness_csv(recs, p);
    auto back = read_hardness_csv(p);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i].id == recs[i].id);
        CHECK(back[i].condition == recs[i].condition);
        CHECK(back[i].h == recs[i].h);
        CHECK(back[i].h_dir == recs[i].h_dir);
        CHECK(back[i].h_ind == recs[i].h_ind);
    }
    fs::remove(p);
}
