#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hardy/encoders.hpp"
#include "hardy/errors.hpp"
#include "hardy/io.hpp"
#include "hardy/rng.hpp"
#include "hardy/tensor.hpp"

namespace hardy {

// Availability mask: which modalities are present at evaluation/training
// time. Absent modalities are replaced by zero vectors at encode time.
struct Condition {
    bool a = true, t = true, v = true;

    bool available(Modality m) const {
        switch (m) {
            case Modality::Acoustic: return a;
            case Modality::Textual: return t;
            default: return v;
        }
    }

    bool all() const { return a && t && v; }
    int count() const { return int(a) + int(t) + int(v); }

    std::string str() const {
        std::string s;
        if (a) s += 'a';
        if (t) s += 't';
        if (v) s += 'v';
        return s;
    }

    static Condition parse(const std::string& s) {
        Condition c{false, false, false};
        for (char ch : s) {
            if (ch == 'a') c.a = true;
            else if (ch == 't') c.t = true;
            else if (ch == 'v') c.v = true;
            else throw DomainError("unknown modality '" + std::string(1, ch) + "' in condition " + s);
        }
        if (c.count() == 0) throw DomainError("empty condition");
        return c;
    }

    bool operator==(const Condition&) const = default;

    // The six evaluation settings: available-modality sets {a},{v},{t},{at},{av},{tv}.
    static const std::array<Condition, 6>& six() {
        static const std::array<Condition, 6> cs{
            Condition{true, false, false},  Condition{false, false, true},
            Condition{false, true, false},  Condition{true, true, false},
            Condition{true, false, true},   Condition{false, true, true}};
        return cs;
    }
};

struct ModalitySample {
    int id = 0;
    std::array<Tensor, 3> raw;  // acoustic, textual, visual feature vectors
    int label = 0;
    Condition available{true, true, true};

    const Tensor& raw_of(Modality m) const { return raw[static_cast<std::size_t>(m)]; }

    // Zeroed copy of a modality when either the sample's own mask or the
    // requested condition hides it.
    Tensor masked(Modality m, const Condition& c) const {
        const Tensor& x = raw_of(m);
        return c.available(m) && available.available(m) ? x : Tensor::zeros(x.shape);
    }
};

struct Dataset {
    std::vector<ModalitySample> samples;
    std::array<std::size_t, 3> dims{};
    std::size_t classes = 0;
    std::vector<int> hard_ids;  // sidecar annotation from the generator

    std::size_t size() const { return samples.size(); }
};

// ---- dataset directory layout -------------------------------------------
// <dir>/a.hmf1 t.hmf1 v.hmf1 labels.hml1 manifest.txt [hard.txt]

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::size_t n = ds.size();
    for (Modality m : kModalities) {
        const std::size_t mi = static_cast<std::size_t>(m);
        Tensor mat = Tensor::zeros({n, ds.dims[mi]});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < ds.dims[mi]; ++j)
                mat.at(i, j) = ds.samples[i].raw[mi].data[j];
        write_matrix(dir / (std::string(modality_tag(m)) + ".hmf1"), mat);
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = ds.samples[i].label;
    write_labels(dir / "labels.hml1", labels);
    std::map<std::string, std::string> mf;
    mf["count"] = std::to_string(n);
    mf["classes"] = std::to_string(ds.classes);
    mf["dim_a"] = std::to_string(ds.dims[0]);
    mf["dim_t"] = std::to_string(ds.dims[1]);
    mf["dim_v"] = std::to_string(ds.dims[2]);
    write_manifest(dir / "manifest.txt", mf);
    if (!ds.hard_ids.empty()) {
        std::ofstream os(dir / "hard.txt", std::ios::trunc);
        for (int id : ds.hard_ids) os << id << "\n";
    }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    auto mf = read_manifest(dir / "manifest.txt");
    Dataset ds;
    ds.classes = std::stoul(mf.at("classes"));
    const std::size_t n = std::stoul(mf.at("count"));
    std::array<Tensor, 3> mats;
    for (Modality m : kModalities) {
        const std::size_t mi = static_cast<std::size_t>(m);
        const std::string key = std::string("dim_") + modality_tag(m);
        ds.dims[mi] = std::stoul(mf.at(key));
        mats[mi] = read_matrix(dir / (std::string(modality_tag(m)) + ".hmf1"));
        if (mats[mi].rows() != n || mats[mi].cols() != ds.dims[mi]) {
            throw IntegrityError("manifest field " + key + "/count disagrees with " +
                                 std::string(modality_tag(m)) + ".hmf1 header in " + dir.string());
        }
    }
    std::vector<int> labels = read_labels(dir / "labels.hml1");
    if (labels.size() != n) throw IntegrityError("labels.hml1 count disagrees with manifest in " + dir.string());
    ds.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ModalitySample& s = ds.samples[i];
        s.id = static_cast<int>(i);
        s.label = labels[i];
        for (std::size_t mi = 0; mi < 3; ++mi) {
            s.raw[mi] = Tensor::zeros({ds.dims[mi]});
            for (std::size_t j = 0; j < ds.dims[mi]; ++j) s.raw[mi].data[j] = mats[mi].at(i, j);
        }
    }
    if (std::filesystem::exists(dir / "hard.txt")) {
        std::ifstream is(dir / "hard.txt");
        int id;
        while (is >> id) ds.hard_ids.push_back(id);
    }
    return ds;
}

// ---- synthetic data ------------------------------------------------------

struct SynthSpec {
    std::size_t classes = 4;
    std::size_t train_n = 600;
    std::size_t test_n = 200;
    std::array<std::size_t, 3> dims{64, 64, 64};
    std::size_t latent = 16;
    double rho = 1.0;         // cross-modal correlation of per-modality latents
    double hard_frac = 0.0;   // fraction of hard samples
    double noise = 0.1;       // base observation noise
    double hard_noise = 3.0;  // noise amplification for hard samples
    std::uint64_t seed = 0;

    void validate() const {
        if (classes < 2) throw ConfigError("synth: classes must be >= 2 (field classes)");
        for (std::size_t d : dims)
            if (d < 4) throw ConfigError("synth: modality dims must be >= 4 (field dims)");
        if (rho < 0.0 || rho > 1.0) throw ConfigError("synth: rho must be in [0,1] (field rho)");
        if (hard_frac < 0.0 || hard_frac > 1.0)
            throw ConfigError("synth: hard_frac must be in [0,1] (field hard_frac)");
        if (train_n == 0 || test_n == 0) throw ConfigError("synth: split sizes must be positive");
    }
};

namespace detail {

// Per-sample generator. Each modality view is an affine image of a latent:
// shared latent for normal samples, independently drawn latents (plus
// amplified noise) for hard ones.
inline ModalitySample synth_sample(int id, int label, const SynthSpec& spec,
                                   const std::vector<Tensor>& class_means,
                                   const std::array<Tensor, 3>& proj,
                                   const std::array<Tensor, 3>& bias, bool hard, Rng& rng) {
    ModalitySample s;
    s.id = id;
    s.label = label;
    Tensor shared = Tensor::zeros({spec.latent});
    for (std::size_t j = 0; j < spec.latent; ++j)
        shared.data[j] = class_means[label].data[j] + rng.normal();
    const double sigma = hard ? spec.noise * spec.hard_noise : spec.noise;
    for (Modality m : kModalities) {
        const std::size_t mi = static_cast<std::size_t>(m);
        Tensor z = shared;
        if (hard) {
            for (std::size_t j = 0; j < spec.latent; ++j)
                z.data[j] = class_means[label].data[j] + rng.normal();
        } else if (spec.rho < 1.0) {
            const double mix = std::sqrt(1.0 - spec.rho * spec.rho);
            for (std::size_t j = 0; j < spec.latent; ++j)
                z.data[j] = spec.rho * shared.data[j] + mix * (class_means[label].data[j] + rng.normal());
        }
        s.raw[mi] = Tensor::zeros({spec.dims[mi]});
        for (std::size_t r = 0; r < spec.dims[mi]; ++r) {
            double acc = bias[mi].data[r];
            for (std::size_t j = 0; j < spec.latent; ++j) acc += proj[mi].at(r, j) * z.data[j];
            s.raw[mi].data[r] = acc + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
        }
        // clamp to f32 grid so the on-disk round trip is lossless
        for (double& x : s.raw[mi].data) x = static_cast<double>(static_cast<float>(x));
    }
    return s;
}

}  // namespace detail

// Draws disjoint train/test splits under <out>/train and <out>/test.
inline void synth_data(const SynthSpec& spec, const std::filesystem::path& out) {
    spec.validate();
    Rng root(spec.seed);
    Rng structure = root.split("structure");
    std::vector<Tensor> class_means;
    for (std::size_t c = 0; c < spec.classes; ++c)
        class_means.push_back(Tensor::randn({spec.latent}, structure, 2.0));
    std::array<Tensor, 3> proj, bias;
    for (std::size_t mi = 0; mi < 3; ++mi) {
        proj[mi] = Tensor::randn({spec.dims[mi], spec.latent}, structure,
                                 1.0 / std::sqrt(static_cast<double>(spec.latent)));
        bias[mi] = Tensor::randn({spec.dims[mi]}, structure, 0.3);
    }
    auto make_split = [&](std::size_t n, Rng rng) {
        Dataset ds;
        ds.classes = spec.classes;
        ds.dims = spec.dims;
        for (std::size_t i = 0; i < n; ++i) {
            const int label = static_cast<int>(rng.uniform_int(spec.classes));
            const bool hard = rng.uniform() < spec.hard_frac;
            ds.samples.push_back(detail::synth_sample(static_cast<int>(i), label, spec,
                                                      class_means, proj, bias, hard, rng));
            if (hard) ds.hard_ids.push_back(static_cast<int>(i));
        }
        return ds;
    };
    write_dataset(make_split(spec.train_n, root.split("train")), out / "train");
    write_dataset(make_split(spec.test_n, root.split("test")), out / "test");
}

}  // namespace hardy
