#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hardy/errors.hpp"
#include "hardy/graph.hpp"
#include "hardy/rng.hpp"

namespace hardy {

// Central finite-difference check of an analytic gradient. Samples at
// least `min_coords` coordinates (all of them when fewer exist) and
// returns the worst relative error, with denominator
// max(|analytic|, |numeric|, 1e-8). The loss must be deterministic; two
// forwards at the base point are compared to detect violations.
inline double grad_check(const std::function<double(const ParamSet&)>& loss_fn,
                         const ParamSet& params, const GradMap& analytic, Rng& rng,
                         double eps = 1e-5, std::size_t min_coords = 50) {
    const double f0 = loss_fn(params);
    const double f0b = loss_fn(params);
    if (f0 != f0b) throw ContractError("grad_check: loss is not deterministic");

    std::vector<std::pair<std::string, std::size_t>> coords;
    for (const auto& [name, t] : params)
        for (std::size_t i = 0; i < t.numel(); ++i) coords.emplace_back(name, i);
    if (coords.size() > min_coords) {
        // Fisher-Yates prefix shuffle picks the subsample.
        for (std::size_t i = 0; i < min_coords; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(coords.size() - i));
            std::swap(coords[i], coords[j]);
        }
        coords.resize(min_coords);
    }

    double worst = 0.0;
    ParamSet work = params;
    for (const auto& [name, idx] : coords) {
        const double orig = work.at(name).data[idx];
        work.at(name).data[idx] = orig + eps;
        const double fp = loss_fn(work);
        work.at(name).data[idx] = orig - eps;
        const double fm = loss_fn(work);
        work.at(name).data[idx] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic.count(name) ? analytic.at(name).data[idx] : 0.0;
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
    return worst;
}

}  // namespace hardy
