#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>

#include "hardy/data.hpp"
#include "hardy/errors.hpp"
#include "hardy/featstore.hpp"
#include "hardy/io.hpp"
#include "hardy/pipeline.hpp"

namespace hardy {

// Flat key=value run configuration. Unknown keys are rejected so typos in
// config files fail loudly instead of silently using a default.
struct Config {
    // model
    std::size_t d_a = 64, d_t = 64, d_v = 64;
    std::size_t width = 32;
    std::size_t tokens = 4;
    std::size_t classes = 4;
    std::size_t retrieval_dim = 32;
    std::size_t ae_hidden = 64;
    // hardness / curriculum
    std::size_t k = 5;
    double alpha1 = 0.6;
    double alpha2 = 0.4;
    double beta = 4.0;
    // optimization
    std::size_t epochs = 25;
    std::size_t pretrain_epochs = 10;
    std::size_t hardness_epochs = 6;
    double hardness_lr = 1e-3;
    std::size_t retrieval_epochs = 3;
    double retrieval_lr = 1e-3;
    double lr = 1e-4;
    double dropout = 0.5;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
    // retrieval metrics
    std::string metric_a = "l2", metric_t = "ip", metric_v = "l2";
    // ablation flags
    bool no_hdir = false, no_hind = false, fixed_k = false;
    bool no_retrieval = false, raw_retrieval_features = false;
    // synthetic data
    std::size_t train_n = 600, test_n = 200, latent = 16;
    double rho = 1.0, hard_frac = 0.0, noise = 0.1, hard_noise = 3.0;

    void set(const std::string& key, const std::string& value);
    std::map<std::string, std::string> to_map() const;

    ModelDims model_dims() const {
        ModelDims dims;
        dims.raw = {d_a, d_t, d_v};
        dims.width = width;
        dims.tokens = tokens;
        dims.classes = classes;
        dims.retrieval = retrieval_dim;
        dims.ae_hidden = ae_hidden;
        return dims;
    }

    PipelineOptions pipeline_options() const {
        PipelineOptions opt;
        opt.dims = model_dims();
        opt.hardness = HardnessConfig{alpha1, alpha2, beta};
        opt.hardness_train = HardnessTrainOptions{hardness_epochs, hardness_lr, batch, dropout};
        opt.train = TrainConfig{epochs, lr,      dropout,      batch,        k,
                                seed,   no_hdir, no_hind,      fixed_k,      no_retrieval,
                                raw_retrieval_features};
        opt.pretrain_epochs = pretrain_epochs;
        opt.retrieval_epochs = retrieval_epochs;
        opt.retrieval_lr = retrieval_lr;
        opt.metrics = {parse_metric(metric_a), parse_metric(metric_t), parse_metric(metric_v)};
        return opt;
    }

    SynthSpec synth_spec() const {
        SynthSpec spec;
        spec.classes = classes;
        spec.train_n = train_n;
        spec.test_n = test_n;
        spec.dims = {d_a, d_t, d_v};
        spec.latent = latent;
        spec.rho = rho;
        spec.hard_frac = hard_frac;
        spec.noise = noise;
        spec.hard_noise = hard_noise;
        spec.seed = seed;
        return spec;
    }
};

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        return std::stoul(v);
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": invalid integer '" + v + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": invalid number '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("config key " + key + ": invalid flag '" + v + "' (use 0/1/true/false)");
}

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void Config::set(const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "d_a") d_a = parse_size(key, value);
    else if (key == "d_t") d_t = parse_size(key, value);
    else if (key == "d_v") d_v = parse_size(key, value);
    else if (key == "width") width = parse_size(key, value);
    else if (key == "tokens") tokens = parse_size(key, value);
    else if (key == "classes") classes = parse_size(key, value);
    else if (key == "retrieval_dim") retrieval_dim = parse_size(key, value);
    else if (key == "ae_hidden") ae_hidden = parse_size(key, value);
    else if (key == "k") k = parse_size(key, value);
    else if (key == "alpha1") alpha1 = parse_double(key, value);
    else if (key == "alpha2") alpha2 = parse_double(key, value);
    else if (key == "beta") beta = parse_double(key, value);
    else if (key == "epochs") epochs = parse_size(key, value);
    else if (key == "pretrain_epochs") pretrain_epochs = parse_size(key, value);
    else if (key == "hardness_epochs") hardness_epochs = parse_size(key, value);
    else if (key == "hardness_lr") hardness_lr = parse_double(key, value);
    else if (key == "retrieval_epochs") retrieval_epochs = parse_size(key, value);
    else if (key == "retrieval_lr") retrieval_lr = parse_double(key, value);
    else if (key == "lr") lr = parse_double(key, value);
    else if (key == "dropout") dropout = parse_double(key, value);
    else if (key == "batch") batch = parse_size(key, value);
    else if (key == "seed") seed = parse_size(key, value);
    else if (key == "metric_a") metric_a = (parse_metric(value), value);
    else if (key == "metric_t") metric_t = (parse_metric(value), value);
    else if (key == "metric_v") metric_v = (parse_metric(value), value);
    else if (key == "no_hdir") no_hdir = parse_bool(key, value);
    else if (key == "no_hind") no_hind = parse_bool(key, value);
    else if (key == "fixed_k") fixed_k = parse_bool(key, value);
    else if (key == "no_retrieval") no_retrieval = parse_bool(key, value);
    else if (key == "raw_retrieval_features") raw_retrieval_features = parse_bool(key, value);
    else if (key == "train_n") train_n = parse_size(key, value);
    else if (key == "test_n") test_n = parse_size(key, value);
    else if (key == "latent") latent = parse_size(key, value);
    else if (key == "rho") rho = parse_double(key, value);
    else if (key == "hard_frac") hard_frac = parse_double(key, value);
    else if (key == "noise") noise = parse_double(key, value);
    else if (key == "hard_noise") hard_noise = parse_double(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

inline std::map<std::string, std::string> Config::to_map() const {
    using namespace detail;
    std::map<std::string, std::string> m;
    m["d_a"] = std::to_string(d_a);
    m["d_t"] = std::to_string(d_t);
    m["d_v"] = std::to_string(d_v);
    m["width"] = std::to_string(width);
    m["tokens"] = std::to_string(tokens);
    m["classes"] = std::to_string(classes);
    m["retrieval_dim"] = std::to_string(retrieval_dim);
    m["ae_hidden"] = std::to_string(ae_hidden);
    m["k"] = std::to_string(k);
    m["alpha1"] = fmt_double(alpha1);
    m["alpha2"] = fmt_double(alpha2);
    m["beta"] = fmt_double(beta);
    m["epochs"] = std::to_string(epochs);
    m["pretrain_epochs"] = std::to_string(pretrain_epochs);
    m["hardness_epochs"] = std::to_string(hardness_epochs);
    m["hardness_lr"] = fmt_double(hardness_lr);
    m["retrieval_epochs"] = std::to_string(retrieval_epochs);
    m["retrieval_lr"] = fmt_double(retrieval_lr);
    m["lr"] = fmt_double(lr);
    m["dropout"] = fmt_double(dropout);
    m["batch"] = std::to_string(batch);
    m["seed"] = std::to_string(seed);
    m["metric_a"] = metric_a;
    m["metric_t"] = metric_t;
    m["metric_v"] = metric_v;
    m["no_hdir"] = no_hdir ? "1" : "0";
    m["no_hind"] = no_hind ? "1" : "0";
    m["fixed_k"] = fixed_k ? "1" : "0";
    m["no_retrieval"] = no_retrieval ? "1" : "0";
    m["raw_retrieval_features"] = raw_retrieval_features ? "1" : "0";
    m["train_n"] = std::to_string(train_n);
    m["test_n"] = std::to_string(test_n);
    m["latent"] = std::to_string(latent);
    m["rho"] = fmt_double(rho);
    m["hard_frac"] = fmt_double(hard_frac);
    m["noise"] = fmt_double(noise);
    m["hard_noise"] = fmt_double(hard_noise);
    return m;
}

inline Config load_config(const std::filesystem::path& path) {
    Config cfg;
    for (const auto& [k, v] : read_manifest(path)) cfg.set(k, v);
    return cfg;
}

// FNV-1a over the canonical key=value rendering; stable across runs.
inline std::string config_hash(const Config& cfg) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [k, v] : cfg.to_map()) {
        for (char c : k + "=" + v + "\n") {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace hardy
