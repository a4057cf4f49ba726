#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "airfl/gradient.hpp"

namespace airfl::residual {

// Literal keeps only the previous round's gradient for an unselected device
// (r <- xi * g); AccumulateFull carries the whole untransmitted history
// (r <- xi * g_tilde).
enum class Mode { Literal, AccumulateFull };

class ResidualStore {
  public:
    ResidualStore(std::size_t num_devices, std::size_t length, double xi = 1.0,
                  Mode mode = Mode::Literal)
        : xi_(xi), mode_(mode),
          residuals_(num_devices, Vec(length, 0.0)) {
        if (xi < 0.0 || xi > 1.0)
            throw std::invalid_argument("ResidualStore: xi must be in [0,1]");
    }

    std::size_t num_devices() const { return residuals_.size(); }
    double xi() const { return xi_; }
    Mode mode() const { return mode_; }
    const Vec& residual(std::size_t device) const { return residuals_.at(device); }
    double residual_norm_sq(std::size_t device) const {
        return squared_norm(residuals_.at(device));
    }

    // g_tilde = g + r
    Vec combine(std::size_t device, const Vec& g_current) const {
        const Vec& r = residuals_.at(device);
        check_same_size(g_current, r, "ResidualStore::combine");
        Vec out = g_current;
        axpy(1.0, r, out);
        return out;
    }

    // End-of-round barrier: selected devices drop to zero residual,
    // unselected devices retain xi times their gradient (Literal) or their
    // combined update (AccumulateFull).
    void update_after_round(const std::vector<std::uint8_t>& selected,
                            const std::vector<Vec>& gradients,
                            const std::vector<Vec>& combined) {
        if (selected.size() != residuals_.size() ||
            gradients.size() != residuals_.size() ||
            combined.size() != residuals_.size())
            throw std::invalid_argument("ResidualStore::update_after_round: size mismatch");
        for (std::size_t n = 0; n < residuals_.size(); ++n) {
            Vec& r = residuals_[n];
            if (selected[n]) {
                std::fill(r.begin(), r.end(), 0.0);
            } else {
                const Vec& src = mode_ == Mode::Literal ? gradients[n] : combined[n];
                check_same_size(src, r, "ResidualStore::update_after_round");
                for (std::size_t i = 0; i < r.size(); ++i) r[i] = xi_ * src[i];
            }
        }
    }

  private:
    double xi_;
    Mode mode_;
    std::vector<Vec> residuals_;
};

}  // namespace airfl::residual
