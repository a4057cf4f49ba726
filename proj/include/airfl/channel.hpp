#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "airfl/gradient.hpp"
#include "airfl/rng.hpp"

namespace airfl::channel {

// Channel inversion explodes as |h| -> 0; magnitudes below this floor are
// clamped and the device flagged energy-infeasible.
inline constexpr double kMagnitudeFloor = 1e-3;

struct ChannelRealization {
    std::vector<std::complex<double>> gains;
    std::vector<double> magnitudes;

    std::size_t size() const { return gains.size(); }
};

struct PowerPolicy {
    double noise_variance = 1.0;   // sigma_0^2
    double snr_threshold = 1.0;    // gamma_thr, linear

    PowerPolicy() = default;
    PowerPolicy(double sigma0_sq, double gamma_thr_linear)
        : noise_variance(sigma0_sq), snr_threshold(gamma_thr_linear) {
        if (noise_variance <= 0.0 || snr_threshold <= 0.0)
            throw std::invalid_argument("PowerPolicy: parameters must be positive");
    }

    // sigma_t^2 = gamma_thr * sigma_0^2
    double power_scaling() const { return snr_threshold * noise_variance; }
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

// i.i.d. CN(0,1): real and imaginary parts independent N(0, 1/2).
inline ChannelRealization draw_channels(std::size_t num_devices,
                                        std::mt19937_64& eng) {
    ChannelRealization r;
    r.gains.reserve(num_devices);
    r.magnitudes.reserve(num_devices);
    const double comp_std = std::sqrt(0.5);
    for (std::size_t n = 0; n < num_devices; ++n) {
        const double re = rng::normal(eng, 0.0, comp_std);
        const double im = rng::normal(eng, 0.0, comp_std);
        r.gains.emplace_back(re, im);
        r.magnitudes.push_back(std::abs(r.gains.back()));
    }
    return r;
}

struct TransmitEnergy {
    double energy = 0.0;
    bool clamped = false;  // magnitude hit the inversion floor
};

// E = sigma_t^2 / |h|^2 under channel inversion.
inline TransmitEnergy transmit_energy(const PowerPolicy& policy, double magnitude) {
    if (magnitude <= 0.0)
        throw std::invalid_argument("transmit_energy: magnitude must be positive");
    TransmitEnergy out;
    double m = magnitude;
    if (m < kMagnitudeFloor) {
        m = kMagnitudeFloor;
        out.clamped = true;
    }
    out.energy = policy.power_scaling() / (m * m);
    return out;
}

// Received SNR at the server; channel inversion with sigma_t^2 from the
// policy makes it exactly gamma_thr, independent of sigma_0^2.
inline double received_snr(const PowerPolicy& policy) {
    return policy.snr_threshold;
}

struct AggregateResult {
    Vec aggregate;
    double noise_std = 0.0;  // effective per-element std actually applied
};

// Effective-noise model of the AirComp sum: channel inversion makes the
// received aggregate the plain mean of the transmitted updates, plus
// post-processed Gaussian noise with per-element std
// nu * sigma_0 / (sigma_t * |S|) = nu / (sqrt(gamma_thr) * |S|).
inline AggregateResult aircomp_aggregate(const std::vector<const Vec*>& updates,
                                         const PowerPolicy& policy,
                                         double norm_scale,
                                         std::mt19937_64& noise_eng,
                                         bool noiseless = false) {
    if (updates.empty())
        throw std::invalid_argument("aircomp_aggregate: empty selection");
    AggregateResult out;
    out.aggregate = mean_of(updates);
    if (noiseless) return out;
    out.noise_std = norm_scale /
                    (std::sqrt(policy.snr_threshold) * double(updates.size()));
    for (double& x : out.aggregate)
        x += rng::normal(noise_eng, 0.0, out.noise_std);
    return out;
}

}  // namespace airfl::channel
