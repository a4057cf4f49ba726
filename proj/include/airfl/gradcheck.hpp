#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "airfl/learner.hpp"

namespace airfl::gradcheck {

// Central finite differences over the loss value only; independent of the
// analytic backward path it is used to check.
inline Vec finite_difference_gradient(const learner::ModelParams& params,
                                      const datasets::ExampleStore& store,
                                      std::span<const std::size_t> indices,
                                      double step = 1e-5) {
    Vec grad(params.w.size());
    learner::ModelParams probe = params;
    for (std::size_t i = 0; i < probe.w.size(); ++i) {
        const double saved = probe.w[i];
        probe.w[i] = saved + step;
        const double plus = learner::loss_and_gradient(probe, store, indices).first.loss;
        probe.w[i] = saved - step;
        const double minus = learner::loss_and_gradient(probe, store, indices).first.loss;
        probe.w[i] = saved;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    return grad;
}

struct CheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

inline CheckResult compare_gradients(const Vec& analytic, const Vec& numeric,
                                     double floor = 1e-8) {
    check_same_size(analytic, numeric, "compare_gradients");
    CheckResult r;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double abs_err = std::abs(analytic[i] - numeric[i]);
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        r.max_abs_error = std::max(r.max_abs_error, abs_err);
        r.max_rel_error = std::max(r.max_rel_error, abs_err / scale);
    }
    return r;
}

}  // namespace airfl::gradcheck
