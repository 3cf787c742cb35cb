#pragma once

#include <string>
#include <vector>

#include "hardy/curriculum.hpp"
#include "hardy/evalkit.hpp"
#include "hardy/featstore.hpp"
#include "hardy/hardness.hpp"
#include "hardy/trainer.hpp"

namespace hardy {

// Everything one end-to-end run needs. All randomness flows from
// train.seed through labeled splits, so flags that only matter in later
// stages leave earlier stages bit-identical.
struct PipelineOptions {
    ModelDims dims;
    HardnessConfig hardness;
    HardnessTrainOptions hardness_train{.epochs = 6, .lr = 1e-3, .batch = 32, .dropout = 0.0};
    TrainConfig train;
    std::size_t pretrain_epochs = 10;
    std::size_t retrieval_epochs = 3;
    double retrieval_lr = 1e-3;
    std::array<Metric, 3> metrics = default_metrics();
};

struct PipelineResult {
    HardnessModule hardness;
    RetrievalEncoders retrieval;
    FeatureStore store;
    std::vector<HardnessRecord> records;
    std::vector<Curriculum> curricula;
    Recognizer model;
    ReportTable report;
};

// Per-anchor training conditions, drawn uniformly from the six settings
// and fixed for the whole run.
inline std::vector<Condition> draw_conditions(std::size_t n, Rng& rng) {
    std::vector<Condition> out(n);
    for (auto& c : out) c = Condition::six()[rng.uniform_int(6)];
    return out;
}

// Hardness scoring weights after ablation flags.
inline HardnessConfig effective_hardness(const HardnessConfig& base, const TrainConfig& train) {
    HardnessConfig cfg = base;
    if (train.no_hdir) cfg.alpha1 = 0.0;
    if (train.no_hind) cfg.alpha2 = 0.0;
    return cfg;
}

inline PipelineResult run_pipeline(const Dataset& train_ds, const Dataset& test_ds,
                                   const PipelineOptions& opt) {
    opt.train.validate();
    PipelineResult out;
    Rng root(opt.train.seed);

    // hardness evaluator: stage 1 on complete samples, stage 2 with drawn
    // missing conditions, then frozen
    {
        Rng init = root.split("hardness");
        out.hardness = HardnessModule(opt.dims, init);
        Rng t = root.split("hardness-train");
        out.hardness.train_stage1(train_ds, opt.hardness_train, t);
        out.hardness.train_stage2(train_ds, opt.hardness_train, t);
    }

    // retrieval encoders and the frozen feature store over the train set
    if (opt.train.raw_retrieval_features) {
        out.retrieval.identity = true;
        out.retrieval.dims = opt.dims;
    } else {
        Rng t = root.split("retrieval");
        out.retrieval = train_retrieval_encoders(train_ds, opt.dims, opt.retrieval_epochs,
                                                 opt.retrieval_lr, opt.train.batch, t);
    }
    out.store = build_feature_store(train_ds, out.retrieval, opt.metrics, opt.train.seed);
    StoreIndices indices = build_store_indices(out.store);

    // score every anchor under its drawn condition
    Rng cond_rng = root.split("conditions");
    std::vector<Condition> conds = draw_conditions(train_ds.size(), cond_rng);
    const HardnessConfig hcfg = effective_hardness(opt.hardness, opt.train);
    out.records.reserve(train_ds.size());
    for (std::size_t i = 0; i < train_ds.size(); ++i)
        out.records.push_back(out.hardness.score(train_ds.samples[i], conds[i], hcfg));

    // curricula: fixed_k pins k' at k; no_retrieval keeps anchors only
    out.curricula.reserve(train_ds.size());
    for (const auto& rec : out.records) {
        if (opt.train.no_retrieval) {
            Curriculum c;
            c.anchor_id = rec.id;
            c.condition = rec.condition;
            c.h = rec.h;
            c.k_prime = 0;
            out.curricula.push_back(c);
            continue;
        }
        HardnessRecord eff = rec;
        if (opt.train.fixed_k) eff.h = kHardnessClampHi;
        out.curricula.push_back(curriculum_for_member(eff, out.store, indices, opt.train.k));
    }

    // recognition model: full-modality pretraining, then the curriculum
    {
        Rng init = root.split("recognizer");
        out.model = Recognizer(opt.dims, init);
        TrainConfig pre = opt.train;
        pre.epochs = opt.pretrain_epochs;
        Rng t = root.split("recognizer-train");
        out.model.pretrain(train_ds, pre, t);
        out.model.train_curriculum(train_ds, out.curricula, opt.train, t);
    }

    out.report = evaluate_conditions(out.model, test_ds);
    out.report.metadata["seed"] = std::to_string(opt.train.seed);
    return out;
}

// ---- ablation runner -----------------------------------------------------

inline const std::vector<std::string>& ablation_names() {
    static const std::vector<std::string> names{"full",    "no_hdir",      "no_hind",
                                                "fixed_k", "no_retrieval", "raw_retrieval_features"};
    return names;
}

inline TrainConfig apply_ablation(TrainConfig cfg, const std::string& name) {
    if (name == "no_hdir") cfg.no_hdir = true;
    else if (name == "no_hind") cfg.no_hind = true;
    else if (name == "fixed_k") cfg.fixed_k = true;
    else if (name == "no_retrieval") cfg.no_retrieval = true;
    else if (name == "raw_retrieval_features") cfg.raw_retrieval_features = true;
    else if (name != "full") throw ConfigError("unknown ablation '" + name + "'");
    return cfg;
}

struct AblationRun {
    std::string name;
    std::uint64_t seed = 0;
    ReportTable table;
};

struct AblationResults {
    std::vector<AblationRun> runs;

    const ReportTable& table_of(const std::string& name, std::uint64_t seed) const {
        for (const auto& r : runs)
            if (r.name == name && r.seed == seed) return r.table;
        throw LookupError("no ablation run " + name + " for seed " + std::to_string(seed));
    }

    // Delta vs. the full method at the same seed.
    ReportTable delta_of(const std::string& name, std::uint64_t seed) const {
        return table_delta(table_of("full", seed), table_of(name, seed));
    }
};

inline AblationResults run_ablations(const Dataset& train_ds, const Dataset& test_ds,
                                     const PipelineOptions& base,
                                     const std::vector<std::uint64_t>& seeds,
                                     const std::vector<std::string>& names = ablation_names()) {
    if (seeds.empty()) throw ContractError("run_ablations requires at least one seed");
    AblationResults out;
    for (std::uint64_t seed : seeds) {
        for (const auto& name : names) {
            PipelineOptions opt = base;
            opt.train = apply_ablation(opt.train, name);
            opt.train.seed = seed;
            AblationRun run;
            run.name = name;
            run.seed = seed;
            run.table = run_pipeline(train_ds, test_ds, opt).report;
            run.table.metadata["ablation"] = name;
            out.runs.push_back(std::move(run));
        }
    }
    return out;
}

}  // namespace hardy
