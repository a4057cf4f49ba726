#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "airfl/datasets.hpp"
#include "airfl/gradient.hpp"
#include "airfl/rng.hpp"

namespace airfl::learner {

// hidden_dim == 0 selects multinomial logistic regression, otherwise a
// one-hidden-layer ReLU perceptron.
struct Architecture {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    int num_classes = 0;
    double l2_reg = 1e-4;

    std::size_t param_count() const {
        const std::size_t c = std::size_t(num_classes);
        if (hidden_dim == 0) return c * input_dim + c;
        return hidden_dim * input_dim + hidden_dim + c * hidden_dim + c;
    }
};

struct ModelParams {
    Architecture arch;
    Vec w;  // flat, length arch.param_count()
};

struct LossReport {
    double loss = 0.0;
    double accuracy = 0.0;
};

inline ModelParams zero_params(const Architecture& arch) {
    return ModelParams{arch, Vec(arch.param_count(), 0.0)};
}

inline ModelParams random_params(const Architecture& arch, std::mt19937_64& eng,
                                 double stddev = 0.05) {
    ModelParams p = zero_params(arch);
    for (double& x : p.w) x = rng::normal(eng, 0.0, stddev);
    return p;
}

namespace detail {

inline void softmax_inplace(std::span<double> z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

// Forward pass writing class probabilities into `probs`; for the MLP the
// hidden activations are written into `hidden` for reuse by backprop.
inline int predict_probs(const ModelParams& p, std::span<const double> x,
                         std::vector<double>& hidden, std::vector<double>& probs) {
    const auto& a = p.arch;
    const std::size_t c = std::size_t(a.num_classes);
    probs.assign(c, 0.0);
    if (a.hidden_dim == 0) {
        const double* W = p.w.data();
        const double* b = W + c * a.input_dim;
        for (std::size_t k = 0; k < c; ++k) {
            double z = b[k];
            const double* row = W + k * a.input_dim;
            for (std::size_t j = 0; j < a.input_dim; ++j) z += row[j] * x[j];
            probs[k] = z;
        }
    } else {
        const std::size_t h = a.hidden_dim;
        const double* W1 = p.w.data();
        const double* b1 = W1 + h * a.input_dim;
        const double* W2 = b1 + h;
        const double* b2 = W2 + c * h;
        hidden.assign(h, 0.0);
        for (std::size_t k = 0; k < h; ++k) {
            double z = b1[k];
            const double* row = W1 + k * a.input_dim;
            for (std::size_t j = 0; j < a.input_dim; ++j) z += row[j] * x[j];
            hidden[k] = z > 0.0 ? z : 0.0;
        }
        for (std::size_t k = 0; k < c; ++k) {
            double z = b2[k];
            const double* row = W2 + k * h;
            for (std::size_t j = 0; j < h; ++j) z += row[j] * hidden[j];
            probs[k] = z;
        }
    }
    const int argmax = int(std::max_element(probs.begin(), probs.end()) - probs.begin());
    softmax_inplace(probs);
    return argmax;
}

}  // namespace detail

// Mean cross-entropy (plus L2 ridge term) and its exact analytic gradient
// over the given examples.
inline std::pair<LossReport, Vec> loss_and_gradient(
    const ModelParams& params, const datasets::ExampleStore& store,
    std::span<const std::size_t> indices) {
    if (indices.empty())
        throw std::invalid_argument("loss_and_gradient: empty example set");
    const auto& a = params.arch;
    if (store.feature_dim != a.input_dim)
        throw std::invalid_argument("loss_and_gradient: feature dim mismatch");
    if (params.w.size() != a.param_count())
        throw std::invalid_argument("loss_and_gradient: parameter length mismatch");

    const std::size_t c = std::size_t(a.num_classes);
    const double inv_n = 1.0 / double(indices.size());
    Vec grad(params.w.size(), 0.0);
    std::vector<double> probs, hidden;
    double loss = 0.0;
    std::size_t correct = 0;

    for (std::size_t i : indices) {
        const auto x = store.features_of(i);
        const int y = store.labels[i];
        if (y < 0 || y >= a.num_classes)
            throw std::invalid_argument("loss_and_gradient: label out of range");
        const int pred = detail::predict_probs(params, x, hidden, probs);
        if (pred == y) ++correct;
        loss -= std::log(std::max(probs[std::size_t(y)], 1e-300));

        if (a.hidden_dim == 0) {
            double* gW = grad.data();
            double* gb = gW + c * a.input_dim;
            for (std::size_t k = 0; k < c; ++k) {
                const double d = (probs[k] - (int(k) == y ? 1.0 : 0.0)) * inv_n;
                gb[k] += d;
                double* row = gW + k * a.input_dim;
                for (std::size_t j = 0; j < a.input_dim; ++j) row[j] += d * x[j];
            }
        } else {
            const std::size_t h = a.hidden_dim;
            const double* W2 = params.w.data() + h * a.input_dim + h;
            double* gW1 = grad.data();
            double* gb1 = gW1 + h * a.input_dim;
            double* gW2 = gb1 + h;
            double* gb2 = gW2 + c * h;
            std::vector<double> dhidden(h, 0.0);
            for (std::size_t k = 0; k < c; ++k) {
                const double d = (probs[k] - (int(k) == y ? 1.0 : 0.0)) * inv_n;
                gb2[k] += d;
                double* row = gW2 + k * h;
                for (std::size_t j = 0; j < h; ++j) {
                    row[j] += d * hidden[j];
                    dhidden[j] += d * W2[k * h + j];
                }
            }
            for (std::size_t k = 0; k < h; ++k) {
                if (hidden[k] <= 0.0) continue;  // ReLU gate
                gb1[k] += dhidden[k];
                double* row = gW1 + k * a.input_dim;
                for (std::size_t j = 0; j < a.input_dim; ++j)
                    row[j] += dhidden[k] * x[j];
            }
        }
    }

    loss *= inv_n;
    if (a.l2_reg > 0.0) {
        loss += 0.5 * a.l2_reg * squared_norm(params.w);
        axpy(a.l2_reg, params.w, grad);
    }
    if (!std::isfinite(loss) || !all_finite(grad))
        throw std::runtime_error("loss_and_gradient: non-finite result");

    LossReport report{loss, double(correct) / double(indices.size())};
    return {report, std::move(grad)};
}

inline std::pair<LossReport, Vec> loss_and_gradient(
    const ModelParams& params, const datasets::ExampleStore& store) {
    std::vector<std::size_t> all(store.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return loss_and_gradient(params, store, all);
}

inline LossReport evaluate(const ModelParams& params,
                           const datasets::ExampleStore& store) {
    if (store.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    if (store.feature_dim != params.arch.input_dim)
        throw std::invalid_argument("evaluate: feature dim mismatch");
    std::vector<double> probs, hidden;
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < store.size(); ++i) {
        const int pred = detail::predict_probs(params, store.features_of(i), hidden, probs);
        const int y = store.labels[i];
        if (pred == y) ++correct;
        loss -= std::log(std::max(probs[std::size_t(y)], 1e-300));
    }
    return {loss / double(store.size()), double(correct) / double(store.size())};
}

// Runs `epochs` passes of mini-batch SGD with momentum from the received
// global model and returns the effective update direction
// (w_received - w_final) / lr. Each epoch shuffles the partition with the
// device's own stream and steps through floor(|D|/batch) batches. With one
// epoch, a full-partition batch and zero momentum this is exactly the mean
// mini-batch gradient.
inline Vec local_update(const ModelParams& params,
                        const datasets::ExampleStore& store,
                        const datasets::DevicePartition& partition,
                        std::size_t batch_size, int epochs, double lr,
                        double momentum, std::mt19937_64& device_rng) {
    if (lr <= 0.0) throw std::invalid_argument("local_update: lr must be positive");
    if (epochs < 1) throw std::invalid_argument("local_update: epochs must be >= 1");
    if (batch_size == 0 || batch_size > partition.indices.size())
        throw std::invalid_argument("local_update: batch_size exceeds partition");

    ModelParams local = params;
    Vec velocity(params.w.size(), 0.0);  // reset each round
    std::vector<std::size_t> order = partition.indices;
    const std::size_t steps = order.size() / batch_size;

    for (int e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), device_rng);
        for (std::size_t s = 0; s < steps; ++s) {
            std::span<const std::size_t> batch(order.data() + s * batch_size, batch_size);
            auto [report, grad] = loss_and_gradient(local, store, batch);
            for (std::size_t i = 0; i < velocity.size(); ++i) {
                velocity[i] = momentum * velocity[i] + grad[i];
                local.w[i] -= lr * velocity[i];
            }
        }
    }

    Vec g(params.w.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = (params.w[i] - local.w[i]) / lr;
    return g;
}

// w <- w - lr * aggregate
inline void apply_global_update(ModelParams& params, const Vec& aggregate, double lr) {
    check_same_size(params.w, aggregate, "apply_global_update");
    axpy(-lr, aggregate, params.w);
}

// Secant surrogate for local curvature along the segment x -> y:
// (grad(y)-grad(x)) . (y-x) / ||y-x||^2. Exact for quadratics.
inline double secant_curvature(const Vec& gx, const Vec& gy, const Vec& x, const Vec& y) {
    check_same_size(gx, gy, "secant_curvature");
    check_same_size(x, y, "secant_curvature");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dw = y[i] - x[i];
        num += (gy[i] - gx[i]) * dw;
        den += dw * dw;
    }
    if (den == 0.0) throw std::invalid_argument("secant_curvature: zero segment");
    return num / den;
}

struct Constants {
    double G2 = 0.0;        // max across-device gradient variance
    double delta2 = 0.0;    // entry variance of the averaged update
    double mean = 0.0;      // entry mean of the averaged update
    double L_est = 0.0;     // smoothness surrogate
    double mu_est = 0.0;    // strong-convexity surrogate
    double f_star_est = 0.0;
};

// Probe phase: walk a short centralized full-batch trajectory, measure the
// across-device spread of local gradients and the entry statistics of the
// averaged update, bracket curvature via secants, then descend long enough
// to estimate the optimal loss.
inline Constants estimate_constants(
    const datasets::ExampleStore& store,
    const std::vector<datasets::DevicePartition>& partitions,
    const Architecture& arch, int probe_rounds, std::uint64_t seed) {
    if (probe_rounds < 1)
        throw std::invalid_argument("estimate_constants: probe_rounds must be >= 1");
    if (partitions.empty())
        throw std::invalid_argument("estimate_constants: no partitions");

    auto eng = rng::engine(seed, rng::Stream::Probe);
    ModelParams params = random_params(arch, eng);
    const double probe_lr = 0.05;
    const std::size_t n_dev = partitions.size();

    Constants out;
    out.L_est = 0.0;
    out.mu_est = std::numeric_limits<double>::infinity();

    std::vector<double> entries;  // entries of averaged updates across probes
    Vec prev_w, prev_grad;
    for (int r = 0; r < probe_rounds; ++r) {
        std::vector<Vec> grads(n_dev);
        for (std::size_t d = 0; d < n_dev; ++d)
            grads[d] = loss_and_gradient(params, store, partitions[d].indices).second;

        Vec mean_grad(params.w.size(), 0.0);
        for (const Vec& g : grads) axpy(1.0, g, mean_grad);
        scale(mean_grad, 1.0 / double(n_dev));

        double var = 0.0;
        for (const Vec& g : grads) {
            Vec diff = g;
            axpy(-1.0, mean_grad, diff);
            var += squared_norm(diff);
        }
        var /= double(n_dev);
        out.G2 = std::max(out.G2, var);

        entries.insert(entries.end(), mean_grad.begin(), mean_grad.end());

        if (!prev_w.empty()) {
            const double curv = secant_curvature(prev_grad, mean_grad, prev_w, params.w);
            out.L_est = std::max(out.L_est, curv);
            out.mu_est = std::min(out.mu_est, curv);
        }
        prev_w = params.w;
        prev_grad = mean_grad;
        axpy(-probe_lr, mean_grad, params.w);
    }

    double sum = 0.0;
    for (double e : entries) sum += e;
    out.mean = sum / double(entries.size());
    double var = 0.0;
    for (double e : entries) var += (e - out.mean) * (e - out.mean);
    out.delta2 = var / double(entries.size());

    if (!std::isfinite(out.mu_est)) out.mu_est = arch.l2_reg;
    out.mu_est = std::max(out.mu_est, arch.l2_reg);
    out.L_est = std::max(out.L_est, out.mu_est);

    // Long centralized run for the optimal-loss surrogate.
    for (int i = 0; i < 400; ++i) {
        auto [report, grad] = loss_and_gradient(params, store);
        axpy(-0.1, grad, params.w);
        out.f_star_est = report.loss;
    }
    return out;
}

}  // namespace airfl::learner
