#include <catch2/catch_amalgamated.hpp>

#include "airfl/residual.hpp"
#include "airfl/rng.hpp"

using namespace airfl;

namespace {

// Scalar gradients per device per round for the hand-unrolled traces.
const double kG[3][6] = {
    {1.0, 2.0, -1.0, 0.5, 0.0, 3.0},    // device 0
    {-2.0, 1.0, 1.5, -0.5, 2.0, 1.0},   // device 1
    {0.5, -1.0, 2.0, 1.0, -3.0, 0.5},   // device 2
};
// Selection pattern: device 0 every round; device 1 on even rounds (t=2,4,6);
// device 2 only on round 6.
bool selected_at(std::size_t dev, int t) {
    if (dev == 0) return true;
    if (dev == 1) return t % 2 == 0;
    return t == 6;
}

}  // namespace

TEST_CASE("hand-unrolled six-round trace, literal mode") {
    residual::ResidualStore store(3, 1, 1.0, residual::Mode::Literal);
    // Literal mode: r_{t+1} = xi * g_t for unselected devices, so the
    // combined update is g_t + xi * g_{t-1} after a single missed round.
    double expect_r[3] = {0.0, 0.0, 0.0};
    for (int t = 1; t <= 6; ++t) {
        std::vector<Vec> grads(3), combined(3);
        std::vector<std::uint8_t> sel(3);
        for (std::size_t d = 0; d < 3; ++d) {
            grads[d] = {kG[d][t - 1]};
            REQUIRE(store.residual(d)[0] == Catch::Approx(expect_r[d]).margin(1e-15));
            combined[d] = store.combine(d, grads[d]);
            REQUIRE(combined[d][0] ==
                    Catch::Approx(kG[d][t - 1] + expect_r[d]).margin(1e-15));
            sel[d] = selected_at(d, t) ? 1 : 0;
        }
        store.update_after_round(sel, grads, combined);
        for (std::size_t d = 0; d < 3; ++d)
            expect_r[d] = sel[d] ? 0.0 : kG[d][t - 1];
    }
    // Device 2 transmitted in round 6; everyone ends with zero residual
    // except those skipped in round 6 (none here for devices 0 and 1).
    for (std::size_t d = 0; d < 3; ++d) REQUIRE(store.residual_norm_sq(d) == 0.0);
}

TEST_CASE("hand-unrolled six-round trace, accumulate mode") {
    residual::ResidualStore store(3, 1, 1.0, residual::Mode::AccumulateFull);
    // Accumulate mode: r_{t+1} = xi * (g_t + r_t) for unselected devices,
    // so device 2 carries the full sum of its first five gradients.
    double expect_r[3] = {0.0, 0.0, 0.0};
    for (int t = 1; t <= 6; ++t) {
        std::vector<Vec> grads(3), combined(3);
        std::vector<std::uint8_t> sel(3);
        for (std::size_t d = 0; d < 3; ++d) {
            grads[d] = {kG[d][t - 1]};
            combined[d] = store.combine(d, grads[d]);
            sel[d] = selected_at(d, t) ? 1 : 0;
        }
        if (t == 6) {
            // device 2 accumulated g_1..g_5 while unselected with xi = 1
            double sum = 0.0;
            for (int i = 0; i < 5; ++i) sum += kG[2][i];
            REQUIRE(store.residual(2)[0] == Catch::Approx(sum).margin(1e-15));
            REQUIRE(combined[2][0] == Catch::Approx(sum + kG[2][5]).margin(1e-15));
        }
        store.update_after_round(sel, grads, combined);
        for (std::size_t d = 0; d < 3; ++d)
            expect_r[d] = sel[d] ? 0.0 : combined[d][0];
        for (std::size_t d = 0; d < 3; ++d)
            REQUIRE(store.residual(d)[0] == Catch::Approx(expect_r[d]).margin(1e-15));
    }
}

TEST_CASE("accumulate mode with xi = 1 telescopes: combined sums equal gradient sums") {
    // If a device is finally selected at round T, its transmitted combined
    // update equals the sum of all its gradients since its last transmission.
    residual::ResidualStore store(1, 2, 1.0, residual::Mode::AccumulateFull);
    Vec total(2, 0.0);
    Vec last_combined;
    for (int t = 1; t <= 5; ++t) {
        Vec g{0.1 * t, -0.2 * t};
        axpy(1.0, g, total);
        last_combined = store.combine(0, g);
        std::vector<std::uint8_t> sel{t == 5 ? std::uint8_t{1} : std::uint8_t{0}};
        store.update_after_round(sel, {g}, {last_combined});
    }
    REQUIRE(last_combined[0] == Catch::Approx(total[0]).margin(1e-15));
    REQUIRE(last_combined[1] == Catch::Approx(total[1]).margin(1e-15));
    REQUIRE(store.residual_norm_sq(0) == 0.0);
}

TEST_CASE("xi scales the retained residual and xi = 0 disables carryover") {
    residual::ResidualStore store(1, 1, 0.5, residual::Mode::Literal);
    Vec g{4.0};
    store.update_after_round({0}, {g}, {g});
    REQUIRE(store.residual(0)[0] == 2.0);
    REQUIRE(store.residual_norm_sq(0) == 4.0);

    residual::ResidualStore off(1, 1, 0.0, residual::Mode::AccumulateFull);
    off.update_after_round({0}, {g}, {g});
    REQUIRE(off.residual_norm_sq(0) == 0.0);
}

TEST_CASE("decaying accumulate residual stays bounded for bounded gradients") {
    // xi < 1 gives a geometric series: |r| <= xi * gmax / (1 - xi).
    const double xi = 0.8, gmax = 2.0;
    residual::ResidualStore store(1, 1, xi, residual::Mode::AccumulateFull);
    auto eng = rng::engine(77, rng::Stream::Probe);
    for (int t = 0; t < 500; ++t) {
        Vec g{rng::uniform(eng, -gmax, gmax)};
        const Vec combined = store.combine(0, g);
        store.update_after_round({0}, {g}, {combined});
        REQUIRE(std::abs(store.residual(0)[0]) <= xi * gmax / (1.0 - xi) + 1e-12);
    }
}

TEST_CASE("residual store validates construction and round inputs") {
    REQUIRE_THROWS_AS(residual::ResidualStore(2, 3, -0.1), std::invalid_argument);
    REQUIRE_THROWS_AS(residual::ResidualStore(2, 3, 1.5), std::invalid_argument);

    residual::ResidualStore store(2, 3);
    REQUIRE(store.num_devices() == 2);
    Vec wrong(2, 0.0);
    REQUIRE_THROWS_AS(store.combine(0, wrong), std::invalid_argument);
    std::vector<Vec> grads(1, Vec(3, 0.0));
    REQUIRE_THROWS_AS(store.update_after_round({1}, grads, grads),
                      std::invalid_argument);
}
