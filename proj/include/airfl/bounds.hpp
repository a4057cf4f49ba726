#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace airfl::bounds {

struct RoundInputs {
    double L = 1.0;          // smoothness surrogate
    double mu = 1.0;         // strong-convexity surrogate
    double lr = 0.01;        // zeta_t
    double G2 = 0.0;
    double delta2 = 0.0;
    double mean = 0.0;       // m
    double unselected_prob = 0.0;  // Pr_t
    std::size_t selected = 1;      // |S_t|
    std::size_t batch_size = 10;   // |D^m|
    double gamma_thr = 1.0;
    double g_norm_sq = 0.0;        // ||g_t||^2

    void validate() const {
        if (unselected_prob < 0.0 || unselected_prob >= 1.0)
            throw std::invalid_argument("RoundInputs: Pr_t must be in [0,1)");
        if (selected < 1 || batch_size < 1 || gamma_thr <= 0.0)
            throw std::invalid_argument("RoundInputs: invalid parameters");
    }
};

// Pr (G^2 + ||g||^2) / (1 - Pr)
inline double lemma1_bound(double unselected_prob, double G2, double g_norm_sq) {
    if (unselected_prob < 0.0 || unselected_prob >= 1.0)
        throw std::invalid_argument("lemma1_bound: Pr_t must be in [0,1)");
    return unselected_prob * (G2 + g_norm_sq) / (1.0 - unselected_prob);
}

// One-round convergence bound.
inline double lemma2_bound(const RoundInputs& in) {
    in.validate();
    const double z = in.lr;
    const double lz2 = in.L * z * z;
    const double s = double(in.selected);
    return 0.5 * lz2 * in.g_norm_sq + 0.5 * (lz2 + z) * in.mean * in.mean +
           0.5 * (lz2 + z) * lemma1_bound(in.unselected_prob, in.G2, in.g_norm_sq) +
           0.5 * lz2 * (in.delta2 / (in.gamma_thr * s * s) +
                        in.G2 / (s * double(in.batch_size)));
}

// Additive constant of the T-round drift recursion. Unlike the one-round
// bound, the gradient-norm dependence has been folded into C_t here, so the
// residual term keeps only G^2.
inline double theorem1_B(const RoundInputs& in) {
    in.validate();
    const double z = in.lr;
    const double lz2 = in.L * z * z;
    const double s = double(in.selected);
    return 0.5 * (lz2 + z) * in.mean * in.mean +
           0.5 * (lz2 + z) * in.unselected_prob * in.G2 / (1.0 - in.unselected_prob) +
           0.5 * lz2 * (in.delta2 / (in.gamma_thr * s * s) +
                        in.G2 / (s * double(in.batch_size)));
}

// Multiplicative constant: 1 + 2 mu (L z^2 / 2 + (L z^2 + z) Pr / (2 (1 - Pr))).
inline double theorem1_C(const RoundInputs& in) {
    in.validate();
    const double z = in.lr;
    const double lz2 = in.L * z * z;
    return 1.0 + 2.0 * in.mu * (0.5 * lz2 + 0.5 * (lz2 + z) * in.unselected_prob /
                                                 (1.0 - in.unselected_prob));
}

struct BoundTrace {
    std::vector<double> B;
    std::vector<double> C;
    std::vector<double> running;  // running drift bound after t rounds
    double total = 0.0;           // bound on Delta_T
};

// Delta_T <= (prod C_i - 1)(f(w_0) - f*) + sum_{i<T} B_i prod_{j>i} C_j + B_T,
// computed as the unrolled recursion e_t = C_t e_{t-1} + B_t on the initial
// gap, with the running partials emitted per round.
inline BoundTrace theorem1_bound(const std::vector<RoundInputs>& rounds,
                                 double initial_gap) {
    if (rounds.empty()) throw std::invalid_argument("theorem1_bound: empty input");
    BoundTrace out;
    out.B.reserve(rounds.size());
    out.C.reserve(rounds.size());
    out.running.reserve(rounds.size());
    double gap = initial_gap;  // bound on E[f(w_t)] - f*
    for (const RoundInputs& in : rounds) {
        const double B = theorem1_B(in);
        const double C = theorem1_C(in);
        out.B.push_back(B);
        out.C.push_back(C);
        gap = C * gap + B;
        out.running.push_back(gap - initial_gap);
    }
    out.total = gap - initial_gap;
    return out;
}

struct RoundObservation {
    int round = 0;
    std::size_t selected = 0;
    std::size_t num_devices = 1;
    double g_norm_sq = 0.0;
    double mean_residual_norm_sq = 0.0;
    double train_loss = 0.0;  // f(w_t) on the training set
};

struct ComparisonInputs {
    double L = 1.0;
    double mu = 1.0;
    double lr = 0.01;
    double G2 = 0.0;
    double delta2 = 0.0;
    double mean = 0.0;
    std::size_t batch_size = 10;
    double gamma_thr = 1.0;
    double f_star_est = 0.0;
    double initial_loss = 0.0;  // f(w_0)
};

// Bound-versus-trace diagnostics. Violations are reported, not asserted:
// L, mu and f* are probe-phase surrogates, not ground truth.
inline nlohmann::json empirical_comparison(
    const std::vector<RoundObservation>& trace, const ComparisonInputs& c) {
    if (trace.empty()) throw std::invalid_argument("empirical_comparison: empty trace");

    nlohmann::json rounds = nlohmann::json::array();
    std::vector<RoundInputs> inputs;
    double prev_loss = c.initial_loss;
    for (const auto& obs : trace) {
        if (obs.num_devices == 0 || obs.selected > obs.num_devices)
            throw std::runtime_error("empirical_comparison: inconsistent trace record");
        RoundInputs in;
        in.L = c.L;
        in.mu = c.mu;
        in.lr = c.lr;
        in.G2 = c.G2;
        in.delta2 = c.delta2;
        in.mean = c.mean;
        in.batch_size = c.batch_size;
        in.gamma_thr = c.gamma_thr;
        in.g_norm_sq = obs.g_norm_sq;
        in.selected = std::max<std::size_t>(obs.selected, 1);
        // Empirical unselection fraction; clamped below 1 so the bound stays finite.
        in.unselected_prob = std::min(
            1.0 - double(obs.selected) / double(obs.num_devices), 1.0 - 1e-9);

        const double l1 = lemma1_bound(in.unselected_prob, in.G2, in.g_norm_sq);
        const double l2 = lemma2_bound(in);
        const double decrease = obs.train_loss - prev_loss;

        nlohmann::json rec;
        rec["round"] = obs.round;
        rec["unselected_prob"] = in.unselected_prob;
        rec["lemma1_bound"] = l1;
        rec["mean_residual_norm_sq"] = obs.mean_residual_norm_sq;
        rec["lemma1_satisfied"] = obs.mean_residual_norm_sq <= l1 + 1e-12;
        rec["lemma2_bound"] = l2;
        rec["loss_decrease"] = decrease;
        rec["lemma2_satisfied"] = decrease <= l2 + 1e-12;
        rounds.push_back(rec);

        inputs.push_back(in);
        prev_loss = obs.train_loss;
    }

    const double initial_gap = c.initial_loss - c.f_star_est;
    const BoundTrace t1 = theorem1_bound(inputs, initial_gap);
    const double empirical_drift = trace.back().train_loss - c.initial_loss;

    nlohmann::json out;
    out["rounds"] = rounds;
    out["theorem1_bound"] = t1.total;
    out["theorem1_running"] = t1.running;
    out["empirical_drift"] = empirical_drift;
    out["theorem1_satisfied"] = empirical_drift <= t1.total + 1e-12;
    out["note"] = "L, mu and f_star are probe-phase estimates; violations are diagnostics";
    return out;
}

}  // namespace airfl::bounds
