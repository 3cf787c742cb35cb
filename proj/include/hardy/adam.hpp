#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "hardy/errors.hpp"
#include "hardy/graph.hpp"
#include "hardy/tensor.hpp"

namespace hardy {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a named parameter set. Moments are keyed by
// parameter name; a step only touches parameters that have a gradient.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamSet& params, const GradMap& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (const auto& [name, g] : grads) {
            auto it = params.find(name);
            if (it == params.end()) throw ShapeError("adam: gradient for unknown parameter " + name);
            Tensor& p = it->second;
            if (!p.same_shape(g)) {
                throw ShapeError("adam: parameter " + name + " shape " + p.shape_string() +
                                 " vs gradient " + g.shape_string());
            }
            Moments& mo = state_.try_emplace(name, Moments{Tensor::zeros(p.shape), Tensor::zeros(p.shape)}).first->second;
            for (std::size_t i = 0; i < p.numel(); ++i) {
                mo.m.data[i] = cfg_.beta1 * mo.m.data[i] + (1.0 - cfg_.beta1) * g.data[i];
                mo.v.data[i] = cfg_.beta2 * mo.v.data[i] + (1.0 - cfg_.beta2) * g.data[i] * g.data[i];
                const double mhat = mo.m.data[i] / bc1;
                const double vhat = mo.v.data[i] / bc2;
                p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    std::uint64_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        Tensor m, v;
    };
    AdamConfig cfg_;
    std::map<std::string, Moments> state_;
    std::uint64_t t_ = 0;
};

}  // namespace hardy
