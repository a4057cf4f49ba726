#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "airfl/rng.hpp"

namespace airfl::scheduler {

struct DeviceReport {
    double v_dsi = 0.0;   // normalized update significance, in [0,1]
    double v_csi = 0.0;   // normalized channel quality, in [0,1]
    double energy = 0.0;  // E_{n,t} under channel inversion
};

struct QualityWeights {
    double rho1 = 0.5;      // DSI weight; rho2 = 1 - rho1
    double rho2 = 0.5;
    double lambda_v = 0.5;  // value weight; lambda_e = 1 - lambda_v
    double lambda_e = 0.5;
    double alpha = 5e3;     // Lyapunov factor

    void validate() const {
        if (std::abs(rho1 + rho2 - 1.0) > 1e-12 ||
            std::abs(lambda_v + lambda_e - 1.0) > 1e-12)
            throw std::invalid_argument("QualityWeights: weights must lie on the simplex");
        if (alpha < 0.0)
            throw std::invalid_argument("QualityWeights: alpha must be >= 0");
    }
};

struct ScheduleDecision {
    std::vector<std::uint8_t> selected;  // a_{n,t}
    int k_star = 0;
    std::vector<double> penalty;  // p_t(k), k = 1..N (empty for baselines)
    std::vector<double> quality;  // I_{n,t} per device (empty for some baselines)
    bool noiseless_override = false;  // benchmark aggregates without noise

    std::size_t selected_count() const {
        return std::size_t(std::count(selected.begin(), selected.end(), std::uint8_t{1}));
    }
    std::vector<int> selected_ids() const {
        std::vector<int> ids;
        for (std::size_t n = 0; n < selected.size(); ++n)
            if (selected[n]) ids.push_back(int(n));
        return ids;
    }
};

// V = rho1 * v_DSI + rho2 * v_CSI
inline double device_value(const DeviceReport& report, const QualityWeights& w) {
    return w.rho1 * report.v_dsi + w.rho2 * report.v_csi;
}

// I = lambda_V * V - lambda_E * E
inline double device_quality(const DeviceReport& report, const QualityWeights& w) {
    return w.lambda_v * device_value(report, w) - w.lambda_e * report.energy;
}

// Per-round normalization: each indicator is the raw value divided by the
// round's maximum across devices, so the best device scores 1. All-zero raw
// values yield all-zero indicators (flagged by returning false). The floors
// let a caller substitute running maxima for the per-round horizon.
inline bool normalize_reports(const std::vector<double>& gnorm_sq,
                              const std::vector<double>& magnitudes,
                              const std::vector<double>& energies,
                              std::vector<DeviceReport>& out,
                              double g_max_floor = 0.0, double h_max_floor = 0.0) {
    if (gnorm_sq.empty() || gnorm_sq.size() != magnitudes.size() ||
        gnorm_sq.size() != energies.size())
        throw std::invalid_argument("normalize_reports: size mismatch");
    const double g_max = std::max(
        *std::max_element(gnorm_sq.begin(), gnorm_sq.end()), g_max_floor);
    const double h_max = std::max(
        *std::max_element(magnitudes.begin(), magnitudes.end()), h_max_floor);
    out.resize(gnorm_sq.size());
    for (std::size_t n = 0; n < out.size(); ++n) {
        out[n].v_dsi = g_max > 0.0 ? gnorm_sq[n] / g_max : 0.0;
        out[n].v_csi = h_max > 0.0 ? magnitudes[n] / h_max : 0.0;
        out[n].energy = energies[n];
    }
    return g_max > 0.0 && h_max > 0.0;
}

// U_t(k) = delta^2 / (gamma_thr k^2) + G^2 / (k |D^m|), strictly decreasing in k.
inline double penalty_term(int k, double delta2, double gamma_thr, double G2,
                           std::size_t batch_size) {
    if (k <= 0) throw std::invalid_argument("penalty_term: k must be positive");
    if (gamma_thr <= 0.0 || batch_size == 0)
        throw std::invalid_argument("penalty_term: invalid parameters");
    const double kk = double(k);
    return delta2 / (gamma_thr * kk * kk) + G2 / (kk * double(batch_size));
}

// Drift-plus-penalty selection: sort I descending (ties by device id),
// evaluate p_t(k) = alpha * U_t(k) - sum of the top-k I, pick the smallest
// k attaining the minimum, select exactly those top-k devices.
inline ScheduleDecision select_from_quality(std::vector<double> quality,
                                            double alpha, double delta2,
                                            double gamma_thr, double G2,
                                            std::size_t batch_size) {
    if (quality.empty()) throw std::invalid_argument("select_from_quality: no devices");
    const std::size_t n = quality.size();

    ScheduleDecision d;
    d.quality = std::move(quality);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return d.quality[a] > d.quality[b];
    });

    d.penalty.resize(n);
    double prefix = 0.0;
    int best_k = 1;
    for (std::size_t k = 1; k <= n; ++k) {
        prefix += d.quality[order[k - 1]];
        d.penalty[k - 1] =
            alpha * penalty_term(int(k), delta2, gamma_thr, G2, batch_size) - prefix;
        if (d.penalty[k - 1] < d.penalty[best_k - 1]) best_k = int(k);
    }

    d.k_star = best_k;
    d.selected.assign(n, 0);
    for (int i = 0; i < best_k; ++i) d.selected[order[std::size_t(i)]] = 1;
    return d;
}

// `feasible`, when given, removes devices from candidacy before the sort
// (hard energy-budget mode). No feasible device yields an empty decision
// with k* = 0; the engine skips aggregation for such rounds.
inline ScheduleDecision select_lyapunov(const std::vector<DeviceReport>& reports,
                                        const QualityWeights& weights,
                                        double delta2, double gamma_thr,
                                        double G2, std::size_t batch_size,
                                        const std::vector<std::uint8_t>* feasible = nullptr) {
    if (reports.empty()) throw std::invalid_argument("select_lyapunov: no reports");
    weights.validate();
    std::vector<double> quality(reports.size());
    for (std::size_t i = 0; i < quality.size(); ++i)
        quality[i] = device_quality(reports[i], weights);
    if (!feasible)
        return select_from_quality(std::move(quality), weights.alpha, delta2,
                                   gamma_thr, G2, batch_size);

    if (feasible->size() != reports.size())
        throw std::invalid_argument("select_lyapunov: feasible mask size mismatch");
    std::vector<std::size_t> ids;
    std::vector<double> sub;
    for (std::size_t i = 0; i < quality.size(); ++i)
        if ((*feasible)[i]) {
            ids.push_back(i);
            sub.push_back(quality[i]);
        }
    ScheduleDecision d;
    if (ids.empty()) {
        d.selected.assign(reports.size(), 0);
        d.quality = std::move(quality);
        return d;
    }
    const ScheduleDecision inner = select_from_quality(
        std::move(sub), weights.alpha, delta2, gamma_thr, G2, batch_size);
    d.selected.assign(reports.size(), 0);
    for (std::size_t j = 0; j < ids.size(); ++j)
        if (inner.selected[j]) d.selected[ids[j]] = 1;
    d.k_star = inner.k_star;
    d.penalty = inner.penalty;  // indexed over feasible devices only
    d.quality = std::move(quality);
    return d;
}

enum class Policy {
    Proposed,
    Benchmark,
    Random,            // baseline 1
    ChannelThreshold,  // baseline 2
    TwoStage,          // baseline 3
    PowerGate,         // baseline 4
};

inline Policy parse_policy(const std::string& name) {
    if (name == "proposed") return Policy::Proposed;
    if (name == "benchmark") return Policy::Benchmark;
    if (name == "baseline1" || name == "random") return Policy::Random;
    if (name == "baseline2" || name == "channel_threshold") return Policy::ChannelThreshold;
    if (name == "baseline3" || name == "two_stage") return Policy::TwoStage;
    if (name == "baseline4" || name == "power_gate") return Policy::PowerGate;
    throw std::invalid_argument("unknown policy: " + name);
}

inline std::string policy_name(Policy p) {
    switch (p) {
        case Policy::Proposed: return "proposed";
        case Policy::Benchmark: return "benchmark";
        case Policy::Random: return "baseline1";
        case Policy::ChannelThreshold: return "baseline2";
        case Policy::TwoStage: return "baseline3";
        case Policy::PowerGate: return "baseline4";
    }
    return "?";
}

struct BaselineParams {
    int random_k = 30;          // baseline 1
    double h_threshold = 1.0;   // baseline 2
    int top_channels = 50;      // baseline 3, k_c
    int top_gradients = 20;     // baseline 3, k
    double gate_cost = 1.0;     // baseline 4, c
    double gate_power = 4.0;    // baseline 4, P_on
    bool gate_probabilistic = false;  // baseline 4 probability reading
};

inline ScheduleDecision select_baseline(Policy policy, const BaselineParams& params,
                                        const std::vector<double>& gnorm_sq,
                                        const std::vector<double>& magnitudes,
                                        std::mt19937_64& policy_rng) {
    const std::size_t n = gnorm_sq.size();
    if (n == 0 || magnitudes.size() != n)
        throw std::invalid_argument("select_baseline: bad inputs");
    ScheduleDecision d;
    d.selected.assign(n, 0);

    switch (policy) {
        case Policy::Benchmark: {
            std::fill(d.selected.begin(), d.selected.end(), std::uint8_t{1});
            d.noiseless_override = true;
            break;
        }
        case Policy::Random: {
            if (params.random_k <= 0 || std::size_t(params.random_k) > n)
                throw std::invalid_argument("select_baseline: random_k out of range");
            std::vector<std::size_t> ids(n);
            std::iota(ids.begin(), ids.end(), std::size_t{0});
            std::shuffle(ids.begin(), ids.end(), policy_rng);
            for (int i = 0; i < params.random_k; ++i) d.selected[ids[std::size_t(i)]] = 1;
            break;
        }
        case Policy::ChannelThreshold: {
            for (std::size_t i = 0; i < n; ++i)
                if (magnitudes[i] >= params.h_threshold) d.selected[i] = 1;
            break;
        }
        case Policy::TwoStage: {
            const std::size_t kc = std::min<std::size_t>(std::size_t(params.top_channels), n);
            const std::size_t k = std::min<std::size_t>(std::size_t(params.top_gradients), kc);
            std::vector<std::size_t> ids(n);
            std::iota(ids.begin(), ids.end(), std::size_t{0});
            std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
                return magnitudes[a] > magnitudes[b];
            });
            ids.resize(kc);
            std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
                return gnorm_sq[a] > gnorm_sq[b];
            });
            for (std::size_t i = 0; i < k; ++i) d.selected[ids[i]] = 1;
            break;
        }
        case Policy::PowerGate: {
            const double c = params.gate_cost;
            for (std::size_t i = 0; i < n; ++i) {
                const double h2 = magnitudes[i] * magnitudes[i];
                const bool gate = gnorm_sq[i] * h2 / (h2 + c) >= c * params.gate_power;
                if (!gate) continue;
                if (params.gate_probabilistic) {
                    const double p = magnitudes[i] / (c + h2);
                    if (rng::uniform(policy_rng) < p * p) d.selected[i] = 1;
                } else {
                    d.selected[i] = 1;
                }
            }
            break;
        }
        case Policy::Proposed:
            throw std::invalid_argument("select_baseline: use select_lyapunov for proposed");
    }

    d.k_star = int(d.selected_count());
    return d;
}

struct LedgerUpdate {
    std::vector<double> average_energy;   // cumulative / rounds
    std::vector<std::uint8_t> violated;   // average exceeds budget
};

class EnergyLedger {
  public:
    EnergyLedger(std::size_t num_devices, double budget)
        : budget_(budget), cumulative_(num_devices, 0.0) {}

    double budget() const { return budget_; }
    int rounds() const { return rounds_; }
    double cumulative(std::size_t device) const { return cumulative_.at(device); }

    // Devices whose running average would stay within budget if selected
    // this round. Used by the optional hard-budget scheduler mode.
    std::vector<std::uint8_t> feasible_mask(const std::vector<double>& energies) const {
        if (energies.size() != cumulative_.size())
            throw std::invalid_argument("EnergyLedger::feasible_mask: size mismatch");
        std::vector<std::uint8_t> mask(cumulative_.size());
        for (std::size_t n = 0; n < mask.size(); ++n)
            mask[n] = (cumulative_[n] + energies[n]) / double(rounds_ + 1) <= budget_
                          ? 1
                          : 0;
        return mask;
    }

    // cumulative += a * E; the violation flag compares the running average
    // against the per-device budget.
    LedgerUpdate update(const ScheduleDecision& decision,
                        const std::vector<double>& energies) {
        if (decision.selected.size() != cumulative_.size() ||
            energies.size() != cumulative_.size())
            throw std::invalid_argument("EnergyLedger::update: size mismatch");
        ++rounds_;
        LedgerUpdate out;
        out.average_energy.resize(cumulative_.size());
        out.violated.resize(cumulative_.size());
        for (std::size_t n = 0; n < cumulative_.size(); ++n) {
            if (decision.selected[n]) cumulative_[n] += energies[n];
            out.average_energy[n] = cumulative_[n] / double(rounds_);
            out.violated[n] = out.average_energy[n] > budget_ ? 1 : 0;
        }
        return out;
    }

  private:
    double budget_;
    int rounds_ = 0;
    std::vector<double> cumulative_;
};

}  // namespace airfl::scheduler
