#pragma once

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hardy/config.hpp"
#include "hardy/pipeline.hpp"

namespace hardy {

namespace cli_detail {

struct StageArgs {
    std::string config_path;
    std::string data;
    std::string out;
    std::string seeds = "";
    std::map<std::string, std::string> overrides;
};

// Every config key doubles as a --key flag; flags override the file.
inline void wire_options(CLI::App* sub, StageArgs& args, bool needs_data) {
    sub->add_option("--config", args.config_path, "key=value config file");
    sub->add_option("--out", args.out, "artifact root directory")->required();
    if (needs_data) sub->add_option("--data", args.data, "dataset root directory")->required();
    static const std::map<std::string, std::string> defaults = Config{}.to_map();
    for (const auto& [key, unused] : defaults) {
        sub->add_option("--" + key, args.overrides[key]);
    }
}

inline Config resolve_config(const StageArgs& args) {
    Config cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    for (const auto& [key, value] : args.overrides)
        if (!value.empty()) cfg.set(key, value);
    return cfg;
}

inline void banner(const std::string& stage, const Config& cfg) {
    std::cout << "[hardy] stage=" << stage << " seed=" << cfg.seed
              << " config=" << config_hash(cfg) << "\n";
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& s, std::uint64_t fallback) {
    if (s.empty()) return {fallback};
    std::vector<std::uint64_t> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto comma = s.find(',', pos);
        out.push_back(std::stoull(s.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw ConfigError("empty seed list");
    return out;
}

inline std::map<std::string, std::string> report_metadata(const Config& cfg) {
    auto meta = cfg.to_map();
    meta["config_hash"] = config_hash(cfg);
    return meta;
}

namespace fs = std::filesystem;

inline void cmd_synth(const Config& cfg, const fs::path& out) {
    synth_data(cfg.synth_spec(), out);
}

inline void cmd_train_hardness(const Config& cfg, const fs::path& data, const fs::path& out) {
    Dataset train = load_dataset(data / "train");
    PipelineOptions opt = cfg.pipeline_options();
    Rng root(cfg.seed);
    Rng init = root.split("hardness");
    HardnessModule hm(opt.dims, init);
    Rng t = root.split("hardness-train");
    hm.train_stage1(train, opt.hardness_train, t);
    hm.train_stage2(train, opt.hardness_train, t);
    fs::create_directories(out);
    hm.save(out / "hardness.hmc1");
}

inline void cmd_score_hardness(const Config& cfg, const fs::path& data, const fs::path& out) {
    Dataset train = load_dataset(data / "train");
    HardnessModule hm = HardnessModule::load(out / "hardness.hmc1");
    PipelineOptions opt = cfg.pipeline_options();
    Rng root(cfg.seed);
    Rng cond_rng = root.split("conditions");
    std::vector<Condition> conds = draw_conditions(train.size(), cond_rng);
    const HardnessConfig hcfg = effective_hardness(opt.hardness, opt.train);
    std::vector<HardnessRecord> records;
    records.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i)
        records.push_back(hm.score(train.samples[i], conds[i], hcfg));
    write_hardness_csv(records, out / "hardness.csv");
}

inline void cmd_build_db(const Config& cfg, const fs::path& data, const fs::path& out) {
    Dataset train = load_dataset(data / "train");
    PipelineOptions opt = cfg.pipeline_options();
    RetrievalEncoders enc;
    if (opt.train.raw_retrieval_features) {
        enc.identity = true;
        enc.dims = opt.dims;
    } else {
        Rng root(cfg.seed);
        Rng t = root.split("retrieval");
        enc = train_retrieval_encoders(train, opt.dims, opt.retrieval_epochs, opt.retrieval_lr,
                                       opt.train.batch, t);
    }
    FeatureStore store = build_feature_store(train, enc, opt.metrics, cfg.seed);
    write_store(store, out / "store");
    // absent checkpoint marks the identity (raw-features) store
    if (!enc.identity) write_checkpoint(out / "store" / "retrieval.hmc1", enc.params);
}

inline void cmd_retrieve(const Config& cfg, const fs::path& out) {
    FeatureStore store = read_store(out / "store");
    StoreIndices indices = build_store_indices(store);
    std::vector<HardnessRecord> records = read_hardness_csv(out / "hardness.csv");
    PipelineOptions opt = cfg.pipeline_options();
    std::vector<Curriculum> curricula;
    curricula.reserve(records.size());
    for (const auto& rec : records) {
        if (opt.train.no_retrieval) {
            Curriculum c;
            c.anchor_id = rec.id;
            c.condition = rec.condition;
            c.h = rec.h;
            c.k_prime = 0;
            curricula.push_back(c);
            continue;
        }
        HardnessRecord eff = rec;
        if (opt.train.fixed_k) eff.h = kHardnessClampHi;
        curricula.push_back(curriculum_for_member(eff, store, indices, opt.train.k));
    }
    write_curricula_csv(curricula, out / "curricula.csv");
}

inline void cmd_train(const Config& cfg, const fs::path& data, const fs::path& out) {
    Dataset train = load_dataset(data / "train");
    std::vector<Curriculum> curricula = read_curricula_csv(out / "curricula.csv");
    PipelineOptions opt = cfg.pipeline_options();
    Rng root(cfg.seed);
    Rng init = root.split("recognizer");
    Recognizer model(opt.dims, init);
    TrainConfig pre = opt.train;
    pre.epochs = opt.pretrain_epochs;
    Rng t = root.split("recognizer-train");
    model.pretrain(train, pre, t);
    model.train_curriculum(train, curricula, opt.train, t);
    model.save(out / "bundle.hmc1");
}

inline void cmd_eval(const Config& cfg, const fs::path& data, const fs::path& out) {
    Recognizer model = Recognizer::load(out / "bundle.hmc1");
    if (model.stage() != Stage::Trained) throw ContractError("bundle not TRAINED");
    Dataset test = load_dataset(data / "test");
    ReportTable report = evaluate_conditions(model, test);
    report.metadata = report_metadata(cfg);
    write_report_csv(report, out / "report.csv");
}

inline void cmd_ablate(const Config& cfg, const fs::path& data, const fs::path& out,
                       const std::vector<std::uint64_t>& seeds) {
    Dataset train = load_dataset(data / "train");
    Dataset test = load_dataset(data / "test");
    PipelineOptions base = cfg.pipeline_options();
    AblationResults res = run_ablations(train, test, base, seeds);
    fs::create_directories(out);
    for (auto& run : res.runs) {
        Config echoed = cfg;
        echoed.seed = run.seed;
        run.table.metadata = report_metadata(echoed);
        run.table.metadata["ablation"] = run.name;
        write_report_csv(run.table,
                         out / ("report_" + run.name + "_" + std::to_string(run.seed) + ".csv"));
        if (run.name != "full") {
            ReportTable delta = res.delta_of(run.name, run.seed);
            delta.metadata["ablation"] = "full-minus-" + run.name;
            delta.metadata["seed"] = std::to_string(run.seed);
            write_report_csv(delta,
                            out / ("delta_" + run.name + "_" + std::to_string(run.seed) + ".csv"));
        }
    }
}

}  // namespace cli_detail

inline int cli_main(int argc, const char* const* argv) {
    using namespace cli_detail;
    CLI::App app{"hardness-aware dynamic curriculum pipeline for emotion recognition "
                 "with missing modalities"};
    app.require_subcommand(1);

    std::map<std::string, StageArgs> args;
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset");
    wire_options(synth, args["synth-data"], false);
    auto* th = app.add_subcommand("train-hardness", "train the two-stage hardness evaluator");
    wire_options(th, args["train-hardness"], true);
    auto* sh = app.add_subcommand("score-hardness", "score every training anchor");
    wire_options(sh, args["score-hardness"], true);
    auto* db = app.add_subcommand("build-db", "build the retrieval feature store");
    wire_options(db, args["build-db"], true);
    auto* rt = app.add_subcommand("retrieve", "assemble per-anchor curricula");
    wire_options(rt, args["retrieve"], false);
    auto* tr = app.add_subcommand("train", "train the recognition model");
    wire_options(tr, args["train"], true);
    auto* ev = app.add_subcommand("eval", "evaluate under the six missing-modality settings");
    wire_options(ev, args["eval"], true);
    auto* ab = app.add_subcommand("ablate", "run the ablation grid");
    wire_options(ab, args["ablate"], true);
    ab->add_option("--seeds", args["ablate"].seeds, "comma-separated seed list");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        const StageArgs& a = args.at(stage);
        Config cfg = resolve_config(a);
        banner(stage, cfg);
        const std::filesystem::path out = a.out, data = a.data;
        if (stage == "synth-data") cmd_synth(cfg, out);
        else if (stage == "train-hardness") cmd_train_hardness(cfg, data, out);
        else if (stage == "score-hardness") cmd_score_hardness(cfg, data, out);
        else if (stage == "build-db") cmd_build_db(cfg, data, out);
        else if (stage == "retrieve") cmd_retrieve(cfg, out);
        else if (stage == "train") cmd_train(cfg, data, out);
        else if (stage == "eval") cmd_eval(cfg, data, out);
        else if (stage == "ablate") cmd_ablate(cfg, data, out, parse_seeds(a.seeds, cfg.seed));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace hardy
