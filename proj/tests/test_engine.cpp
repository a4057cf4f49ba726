#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "airfl/engine.hpp"
#include "airfl/io.hpp"

using namespace airfl;

namespace {

engine::SimulationConfig small_config() {
    engine::SimulationConfig cfg;
    cfg.num_devices = 5;
    cfg.rounds = 3;
    cfg.seed = 11;
    cfg.num_examples = 100;
    cfg.num_test_examples = 50;
    cfg.feature_dim = 6;
    cfg.num_classes = 3;
    cfg.batch_size = 5;
    cfg.baseline1_k = 2;
    return cfg;
}

std::string trace_string(const engine::RunResult& r) {
    std::string s;
    for (const auto& m : r.metrics) s += io::metrics_row(m) + "\n";
    return s;
}

}  // namespace

TEST_CASE("noiseless benchmark equals a centralized mean-gradient loop") {
    auto cfg = small_config();
    cfg.policy = "benchmark";
    cfg.noiseless = true;
    cfg.epochs = 1;
    cfg.momentum = 0.0;
    const auto problem = engine::prepare_problem(cfg);
    cfg.batch_size = problem.partitions[0].indices.size();  // full batch
    const auto result = engine::run_on(cfg, problem);

    // Oracle: same init, step with the mean of per-device full-batch
    // gradients computed directly from the loss, no engine machinery.
    auto init_eng = rng::engine(cfg.seed, rng::Stream::Init);
    auto model = learner::random_params(problem.arch, init_eng);
    for (int t = 1; t <= cfg.rounds; ++t) {
        Vec mean(model.w.size(), 0.0);
        for (const auto& part : problem.partitions) {
            const auto g =
                learner::loss_and_gradient(model, problem.train, part.indices).second;
            axpy(1.0, g, mean);
        }
        scale(mean, 1.0 / double(cfg.num_devices));
        axpy(-cfg.lr, mean, model.w);
    }
    double max_dev = 0.0;
    for (std::size_t i = 0; i < model.w.size(); ++i)
        max_dev = std::max(max_dev, std::abs(model.w[i] - result.model.w[i]));
    REQUIRE(max_dev <= 1e-12);
}

TEST_CASE("zero rounds produce an empty trace and the initial model") {
    auto cfg = small_config();
    cfg.rounds = 0;
    const auto problem = engine::prepare_problem(cfg);
    const auto result = engine::run_on(cfg, problem);
    REQUIRE(result.metrics.empty());
    REQUIRE(result.decisions.empty());
    auto init_eng = rng::engine(cfg.seed, rng::Stream::Init);
    REQUIRE(result.model.w == learner::random_params(problem.arch, init_eng).w);
}

TEST_CASE("trace is identical across thread counts") {
    for (const char* policy : {"proposed", "baseline1"}) {
        auto cfg = small_config();
        cfg.policy = policy;
        cfg.rounds = 4;
        cfg.threads = 1;
        const auto a = engine::run(cfg);
        cfg.threads = 4;
        const auto b = engine::run(cfg);
        cfg.threads = 7;  // more workers than devices
        const auto c = engine::run(cfg);
        REQUIRE(trace_string(a) == trace_string(b));
        REQUIRE(trace_string(a) == trace_string(c));
        REQUIRE(a.model.w == b.model.w);
    }
}

TEST_CASE("empty-selection rounds leave the model bitwise unchanged") {
    auto cfg = small_config();
    cfg.policy = "baseline2";
    cfg.baseline2_h_threshold = 1e9;  // nobody passes
    const auto problem = engine::prepare_problem(cfg);
    const auto result = engine::run_on(cfg, problem);
    auto init_eng = rng::engine(cfg.seed, rng::Stream::Init);
    const auto initial = learner::random_params(problem.arch, init_eng);
    REQUIRE(result.model.w == initial.w);
    for (const auto& m : result.metrics) {
        REQUIRE(m.num_selected == 0);
        REQUIRE(m.noise_std == 0.0);
    }
    // unselected devices accumulate residuals meanwhile
    REQUIRE(result.metrics.back().mean_residual_norm_sq > 0.0);
}

TEST_CASE("benchmark keeps residuals at zero and aggregates noiselessly") {
    auto cfg = small_config();
    cfg.policy = "benchmark";
    cfg.rounds = 5;
    const auto result = engine::run(cfg);
    for (const auto& m : result.metrics) {
        REQUIRE(m.num_selected == cfg.num_devices);
        REQUIRE(m.noise_std == 0.0);
        REQUIRE(m.mean_residual_norm_sq == 0.0);
    }
}

TEST_CASE("noiseless benchmark loss is essentially non-increasing") {
    auto cfg = small_config();
    cfg.policy = "benchmark";
    cfg.rounds = 30;
    const auto result = engine::run(cfg);
    int decreasing = 0;
    double prev = result.initial_train_loss;
    for (const auto& m : result.metrics) {
        decreasing += m.train_loss <= prev + 1e-12;
        prev = m.train_loss;
    }
    REQUIRE(double(decreasing) / cfg.rounds >= 0.95);
}

TEST_CASE("energy totals in the trace are self-consistent") {
    auto cfg = small_config();
    cfg.rounds = 6;
    const auto result = engine::run(cfg);
    double total = 0.0;
    for (const auto& m : result.metrics) {
        total += m.sum_selected_energy;
        // cumulative mean energy at round t = total so far / (N * t)
        REQUIRE(m.cumulative_mean_energy ==
                Catch::Approx(total / (cfg.num_devices * m.round)).margin(1e-12));
        if (m.num_selected > 0)
            REQUIRE(m.mean_selected_energy ==
                    Catch::Approx(m.sum_selected_energy / m.num_selected).margin(1e-12));
    }
}

TEST_CASE("per-round decisions mirror the metrics") {
    auto cfg = small_config();
    cfg.rounds = 4;
    const auto result = engine::run(cfg);
    REQUIRE(result.decisions.size() == result.metrics.size());
    for (std::size_t t = 0; t < result.metrics.size(); ++t) {
        REQUIRE(result.decisions[t].round == result.metrics[t].round);
        REQUIRE(result.decisions[t].selected_ids == result.metrics[t].selected_ids);
        REQUIRE(int(result.metrics[t].selected_ids.size()) ==
                result.metrics[t].num_selected);
        REQUIRE(result.decisions[t].k_star == result.metrics[t].num_selected);
    }
}

TEST_CASE("hard budget mode never exceeds the average energy budget") {
    auto cfg = small_config();
    cfg.rounds = 12;
    cfg.hard_energy_budget = true;
    cfg.energy_budget = 1.0;
    const auto result = engine::run(cfg);
    for (const auto& m : result.metrics) REQUIRE(m.budget_violations == 0);

    // Literal mode can violate on bad channels; same instance, no gate.
    cfg.hard_energy_budget = false;
    const auto loose = engine::run(cfg);
    int total_violations = 0;
    for (const auto& m : loose.metrics) total_violations += m.budget_violations;
    REQUIRE(total_violations > 0);
}

TEST_CASE("running normalization horizon changes reports but stays valid") {
    auto cfg = small_config();
    cfg.rounds = 6;
    cfg.norm_horizon = "running";
    const auto result = engine::run(cfg);
    REQUIRE(result.metrics.size() == 6);
    for (const auto& m : result.metrics) REQUIRE(m.num_selected >= 1);
    cfg.norm_horizon = "sideways";
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("evaluate counts argmax matches") {
    // Test-set store of 10 examples, 7 of class 0; a model biased toward
    // class 0 scores exactly 0.7.
    datasets::ExampleStore store;
    store.feature_dim = 1;
    store.num_classes = 2;
    for (int i = 0; i < 10; ++i) {
        store.features.push_back(0.0);
        store.labels.push_back(i < 7 ? 0 : 1);
    }
    learner::Architecture arch{1, 0, 2, 0.0};
    auto model = learner::zero_params(arch);
    model.w[2] = 1.0;  // class-0 bias
    REQUIRE(engine::evaluate(model, store).accuracy == Catch::Approx(0.7));
}

TEST_CASE("single-point sweep equals a direct run") {
    auto cfg = small_config();
    const auto points = engine::sweep(cfg, {{{"alpha", "500"}}});
    REQUIRE(points.size() == 1);
    auto direct = cfg;
    direct.alpha = 500.0;
    const auto r = engine::run(direct);
    REQUIRE(points[0].final_accuracy == r.metrics.back().test_accuracy);
    REQUIRE(points[0].final_train_loss == r.metrics.back().train_loss);
    REQUIRE(points[0].overrides.at("alpha") == "500");
    REQUIRE_THROWS_AS(engine::sweep(cfg, {}), std::invalid_argument);
}

TEST_CASE("config setter round-trips through the echo map") {
    engine::SimulationConfig cfg;
    cfg.set("N", "17");
    cfg.set("T", "9");
    cfg.set("nu", "2.5");
    cfg.set("lambda_e", "0.7");
    cfg.set("residual_mode", "accumulate");
    REQUIRE(cfg.num_devices == 17);
    REQUIRE(cfg.rounds == 9);
    REQUIRE(cfg.norm_scale == 2.5);
    const auto m = cfg.to_map();
    REQUIRE(m.at("num_devices") == "17");
    REQUIRE(m.at("lambda_e") == "0.69999999999999996");  // %.17g round-trip
    REQUIRE(m.at("residual_mode") == "accumulate");
    REQUIRE_THROWS_AS(cfg.set("no_such_key", "1"), std::invalid_argument);
    REQUIRE_THROWS_AS(cfg.set("rounds", "abc"), std::invalid_argument);
}

TEST_CASE("config validation rejects bad parameters") {
    engine::SimulationConfig cfg;
    cfg.lr = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.num_devices = 0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.rho1 = 1.5;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.sigma0_sq = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("idx-backed problems train end to end") {
    const std::string dir = std::string(AIRFL_SOURCE_DIR) + "/data/digits";
    engine::SimulationConfig cfg;
    cfg.dataset = "mnist";
    cfg.data_dir = dir;
    cfg.mnist_subset = 400;
    cfg.num_devices = 8;
    cfg.rounds = 2;
    cfg.batch_size = 10;
    const auto problem = engine::prepare_problem(cfg);
    REQUIRE(problem.train.size() == 400);
    REQUIRE(problem.train.feature_dim == 64);
    REQUIRE(problem.train.num_classes == 10);
    REQUIRE(problem.test.size() == 297);
    const auto result = engine::run_on(cfg, problem);
    REQUIRE(result.metrics.size() == 2);
    REQUIRE(result.metrics.back().test_accuracy > 0.05);
}

TEST_CASE("failed rounds surface the partial trace") {
    auto cfg = small_config();
    cfg.rounds = 3;
    cfg.policy = "baseline1";
    cfg.baseline1_k = 99;  // invalid for N=5, fails in round 1
    try {
        engine::run(cfg);
        FAIL("expected RunError");
    } catch (const engine::RunError& e) {
        REQUIRE(std::string(e.what()).find("round 1") != std::string::npos);
        REQUIRE(e.partial().metrics.empty());
    }
}
