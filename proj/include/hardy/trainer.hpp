#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "hardy/adam.hpp"
#include "hardy/curriculum.hpp"
#include "hardy/data.hpp"
#include "hardy/encoders.hpp"
#include "hardy/io.hpp"

namespace hardy {

enum class Stage { Init = 0, Pretrained = 1, Trained = 2 };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Init: return "INIT";
        case Stage::Pretrained: return "PRETRAINED";
        default: return "TRAINED";
    }
}

struct TrainConfig {
    std::size_t epochs = 25;
    double lr = 1e-4;
    double dropout = 0.5;
    std::size_t batch = 32;
    std::size_t k = 5;
    std::uint64_t seed = 0;
    bool no_hdir = false;
    bool no_hind = false;
    bool fixed_k = false;
    bool no_retrieval = false;
    bool raw_retrieval_features = false;

    void validate() const {
        if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
        if (lr < 0.0) throw ConfigError("train: learning rate must be nonnegative");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("train: dropout must be in [0,1)");
        if (batch == 0) throw ConfigError("train: batch size must be >= 1");
        if (k == 0) throw ConfigError("train: k must be >= 1");
    }
};

// One element of the stage-2 training stream: a sample index masked with
// the anchor's condition, carrying its own label.
struct Instance {
    int sample_id = 0;
    Condition condition;
};

// Expands curricula into the ordered instance stream: anchor first, then
// its supports most-similar-first, all under the anchor's condition.
inline std::vector<Instance> curriculum_stream(const std::vector<Curriculum>& curricula,
                                               std::size_t store_size, bool no_retrieval) {
    std::vector<Instance> out;
    for (const auto& c : curricula) {
        out.push_back({c.anchor_id, c.condition});
        if (no_retrieval) continue;
        for (int id : c.support_ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= store_size)
                throw IntegrityError("curriculum for anchor " + std::to_string(c.anchor_id) +
                                     " references sample " + std::to_string(id) +
                                     " absent from the store");
            out.push_back({id, c.condition});
        }
    }
    return out;
}

// The recognition model: three semantic encoders, per-modality heads for
// pretraining, a joint head, and one reconstruction autoencoder per
// modality. Stage moves strictly INIT -> PRETRAINED -> TRAINED.
class Recognizer {
public:
    Recognizer() = default;

    Recognizer(const ModelDims& dims, Rng& rng) : dims_(dims) {
        Rng init = rng.split("recognizer-init");
        for (Modality m : kModalities) {
            const std::string tag = modality_tag(m);
            init_encoder(params_, "r.enc." + tag, dims.raw_dim(m), dims, init);
            init_affine(params_, "r.cls." + tag, dims.width, dims.classes, init);
            init_autoencoder(params_, "r.ae." + tag, 3 * dims.width, dims.ae_hidden,
                             dims.raw_dim(m), init);
        }
        init_affine(params_, "r.cls.joint", 3 * dims.width, dims.classes, init);
    }

    const ModelDims& dims() const { return dims_; }
    const ParamSet& params() const { return params_; }
    Stage stage() const { return stage_; }
    const std::vector<double>& pretrain_trace() const { return pretrain_trace_; }
    const std::vector<double>& train_trace() const { return train_trace_; }

    // Stage 1: per-modality heads on complete samples, loss sum_m CE.
    void pretrain(const Dataset& ds, const TrainConfig& cfg, Rng& rng) {
        cfg.validate();
        if (stage_ != Stage::Init) throw ContractError("pretrain requires an INIT bundle");
        if (ds.size() == 0) throw ContractError("pretrain requires a non-empty training set");
        for (const auto& s : ds.samples)
            if (!s.available.all())
                throw ContractError("pretraining requires complete samples (sample " +
                                    std::to_string(s.id) + " has condition " + s.available.str() + ")");
        Rng run = rng.split("recognizer-pretrain");
        Adam optim(AdamConfig{.lr = cfg.lr});
        pretrain_trace_.clear();
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            double epoch_loss = 0.0;
            for (std::size_t start = 0; start < ds.size(); start += cfg.batch) {
                const std::size_t end = std::min(ds.size(), start + cfg.batch);
                GradMap acc;
                for (std::size_t i = start; i < end; ++i) {
                    Graph g;
                    Forward f{g, params_, true, &run, cfg.dropout};
                    auto seqs = encode_all(f, ds.samples[i], Condition{true, true, true});
                    std::vector<Graph::NodeId> terms;
                    for (Modality m : kModalities) {
                        auto logits = classify(f, pool(f, seqs[static_cast<std::size_t>(m)]),
                                               std::string("r.cls.") + modality_tag(m));
                        terms.push_back(
                            g.cross_entropy(logits, static_cast<std::size_t>(ds.samples[i].label)));
                    }
                    auto loss = g.add(g.add(terms[0], terms[1]), terms[2]);
                    epoch_loss += g.value(loss).item();
                    accumulate(acc, g.backward(g.scale(loss, 1.0 / static_cast<double>(end - start))));
                }
                optim.step(params_, acc);
            }
            pretrain_trace_.push_back(epoch_loss / static_cast<double>(ds.size()));
        }
        stage_ = Stage::Pretrained;
    }

    // Differentiable stage-2 instance loss: joint CE plus reconstruction
    // MSE for exactly the modalities hidden by the instance's condition.
    Graph::NodeId instance_loss(Forward& f, const ModalitySample& s, const Condition& cond) const {
        auto seqs = encode_all(f, s, cond);
        Graph& g = f.g;
        auto joint = g.concat({pool(f, seqs[0]), pool(f, seqs[1]), pool(f, seqs[2])});
        auto loss = g.cross_entropy(classify(f, joint, "r.cls.joint"),
                                    static_cast<std::size_t>(s.label));
        for (Modality m : kModalities) {
            if (cond.available(m) && s.available.available(m)) continue;
            auto rec = autoencode(f, joint, std::string("r.ae.") + modality_tag(m));
            loss = g.add(loss, g.mse(g.input(s.raw_of(m)), rec));
        }
        return loss;
    }

    // Stage 2: the curriculum stream in order, sliced into mini-batches.
    void train_curriculum(const Dataset& ds, const std::vector<Curriculum>& curricula,
                          const TrainConfig& cfg, Rng& rng) {
        cfg.validate();
        if (stage_ != Stage::Pretrained)
            throw ContractError("curriculum training requires a PRETRAINED bundle");
        std::vector<Instance> stream = curriculum_stream(curricula, ds.size(), cfg.no_retrieval);
        if (stream.empty()) throw ContractError("curriculum training requires a non-empty stream");
        Rng run = rng.split("recognizer-train");
        Adam optim(AdamConfig{.lr = cfg.lr});
        train_trace_.clear();
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            double epoch_loss = 0.0;
            for (std::size_t start = 0; start < stream.size(); start += cfg.batch) {
                const std::size_t end = std::min(stream.size(), start + cfg.batch);
                GradMap acc;
                for (std::size_t i = start; i < end; ++i) {
                    Graph g;
                    Forward f{g, params_, true, &run, cfg.dropout};
                    const Instance& inst = stream[i];
                    auto loss = instance_loss(f, ds.samples[static_cast<std::size_t>(inst.sample_id)],
                                              inst.condition);
                    epoch_loss += g.value(loss).item();
                    accumulate(acc, g.backward(g.scale(loss, 1.0 / static_cast<double>(end - start))));
                }
                optim.step(params_, acc);
            }
            train_trace_.push_back(epoch_loss / static_cast<double>(stream.size()));
        }
        stage_ = Stage::Trained;
    }

    // Retrieval-free inference: argmax of the joint head, ties to the
    // lowest class id. Never mutates the bundle.
    int predict(const ModalitySample& s, const Condition& cond) const {
        if (stage_ != Stage::Trained) throw ContractError("predict requires a TRAINED bundle");
        Graph g;
        Forward f{g, params_};
        auto seqs = encode_all(f, s, cond);
        auto joint = g.concat({pool(f, seqs[0]), pool(f, seqs[1]), pool(f, seqs[2])});
        Tensor logits = g.value(classify(f, joint, "r.cls.joint"));
        int best = 0;
        for (std::size_t c = 1; c < logits.numel(); ++c)
            if (logits.data[c] > logits.data[best]) best = static_cast<int>(c);
        return best;
    }

    void save(const std::filesystem::path& path) const {
        ParamSet out = params_;
        out["__meta.stage"] = Tensor::scalar(static_cast<double>(stage_));
        out["__meta.dims"] = Tensor::vec({static_cast<double>(dims_.raw[0]),
                                          static_cast<double>(dims_.raw[1]),
                                          static_cast<double>(dims_.raw[2]),
                                          static_cast<double>(dims_.width),
                                          static_cast<double>(dims_.tokens),
                                          static_cast<double>(dims_.classes),
                                          static_cast<double>(dims_.ae_hidden)});
        write_checkpoint(path, out);
    }

    static Recognizer load(const std::filesystem::path& path) {
        ParamSet in = read_checkpoint(path);
        Recognizer r;
        const Tensor& d = in.at("__meta.dims");
        r.dims_.raw = {static_cast<std::size_t>(d.data[0]), static_cast<std::size_t>(d.data[1]),
                       static_cast<std::size_t>(d.data[2])};
        r.dims_.width = static_cast<std::size_t>(d.data[3]);
        r.dims_.tokens = static_cast<std::size_t>(d.data[4]);
        r.dims_.classes = static_cast<std::size_t>(d.data[5]);
        r.dims_.ae_hidden = static_cast<std::size_t>(d.data[6]);
        r.stage_ = static_cast<Stage>(static_cast<int>(in.at("__meta.stage").item()));
        in.erase("__meta.stage");
        in.erase("__meta.dims");
        r.params_ = std::move(in);
        return r;
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
            seqs[mi] = encode(f, f.g.input(s.masked(m, cond)),
                              "r.enc." + std::string(modality_tag(m)), dims_);
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

    ModelDims dims_;
    ParamSet params_;
    Stage stage_ = Stage::Init;
    std::vector<double> pretrain_trace_, train_trace_;
};

}  // namespace hardy
