// Command-line front end for the AirComp federated-learning simulator:
// single runs, parameter sweeps, policy comparisons, gradient checks,
// bound reports and the exhaustive scheduler oracle.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "airfl/airfl.hpp"

namespace fs = std::filesystem;
using namespace airfl;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
};

void add_common(CLI::App* app, CommonArgs& args) {
    app->add_option("--config", args.config_path, "configuration file (key = value)");
    app->add_option("--set", args.overrides, "override, KEY=VALUE (repeatable)");
    const char* env_out = std::getenv("AIRFL_OUT");
    args.out_dir = env_out ? env_out : ".";
    app->add_option("--out", args.out_dir, "output directory");
}

// Any configuration problem (unreadable file, unknown key, bad value) is a
// usage error: exit code 2.
engine::SimulationConfig build_config(const CommonArgs& args) {
    try {
        engine::SimulationConfig cfg;
        if (!args.config_path.empty()) io::load_config_file(args.config_path, cfg);
        for (const auto& kv : args.overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("--set expects KEY=VALUE, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        cfg.validate();
        return cfg;
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception& e) {
        throw std::invalid_argument(e.what());
    }
}

nlohmann::json bounds_report(const engine::SimulationConfig& cfg,
                             const engine::Problem& problem,
                             const engine::RunResult& result) {
    const auto constants =
        learner::estimate_constants(problem.train, problem.partitions, problem.arch,
                                    /*probe_rounds=*/5, cfg.seed);
    bounds::ComparisonInputs in;
    in.L = constants.L_est;
    in.mu = constants.mu_est;
    in.lr = cfg.lr;
    in.G2 = constants.G2;
    in.delta2 = constants.delta2;
    in.mean = constants.mean;
    in.batch_size = cfg.batch_size;
    in.gamma_thr = cfg.gamma_thr_linear();
    in.f_star_est = constants.f_star_est;
    in.initial_loss = result.initial_train_loss;
    auto report = bounds::empirical_comparison(result.observations, in);
    report["constants"] = {{"G2", constants.G2},       {"delta2", constants.delta2},
                           {"mean", constants.mean},   {"L_est", constants.L_est},
                           {"mu_est", constants.mu_est},
                           {"f_star_est", constants.f_star_est}};
    return report;
}

int cmd_run(const CommonArgs& args) {
    const auto cfg = build_config(args);
    fs::create_directories(args.out_dir);
    const auto problem = engine::prepare_problem(cfg);
    engine::RunResult result;
    try {
        result = engine::run_on(cfg, problem);
    } catch (const engine::RunError& e) {
        io::write_metrics_csv(args.out_dir + "/metrics.csv", e.partial().metrics);
        std::cerr << "error: " << e.what() << " (partial trace flushed)\n";
        return 1;
    }

    io::write_metrics_csv(args.out_dir + "/metrics.csv", result.metrics);
    io::write_decisions_jsonl(args.out_dir + "/decisions.jsonl", result.decisions);
    io::write_checkpoint(args.out_dir + "/checkpoint.bin", result.model.w);
    io::write_config_echo(args.out_dir + "/config_echo.cfg", cfg);
    if (cfg.rounds > 0) {
        std::ofstream out(args.out_dir + "/bounds.json", std::ios::binary);
        out << bounds_report(cfg, problem, result).dump(2) << '\n';
    }
    std::cout << "wrote " << args.out_dir << "/metrics.csv (" << result.metrics.size()
              << " rounds)\n";
    return 0;
}

int cmd_compare(const CommonArgs& args, const std::string& policies_csv) {
    auto cfg = build_config(args);
    std::vector<std::string> policies;
    std::stringstream ss(policies_csv);
    std::string p;
    while (std::getline(ss, p, ',')) if (!p.empty()) policies.push_back(p);
    if (policies.size() < 2)
        throw std::invalid_argument("compare: need at least two policies");
    for (const auto& name : policies) scheduler::parse_policy(name);  // usage check

    fs::create_directories(args.out_dir);
    std::ofstream out(args.out_dir + "/compare.csv", std::ios::binary);
    out << "policy," << io::kMetricsHeader << '\n';
    // Data, channel and noise streams are keyed by purpose, so every policy
    // sees identical draws; only policy-specific randomness differs.
    for (const auto& name : policies) {
        engine::SimulationConfig run_cfg = cfg;
        run_cfg.policy = name;
        const auto result = engine::run(run_cfg);
        for (const auto& m : result.metrics)
            out << name << ',' << io::metrics_row(m) << '\n';
    }
    std::cout << "wrote " << args.out_dir << "/compare.csv\n";
    return 0;
}

int cmd_sweep(const CommonArgs& args, const std::vector<std::string>& params,
              int seeds) {
    const auto base = build_config(args);
    if (params.empty()) throw std::invalid_argument("sweep: need at least one --param");
    if (seeds < 1) throw std::invalid_argument("sweep: --seeds must be >= 1");

    std::vector<std::pair<std::string, std::vector<std::string>>> axes;
    for (const auto& spec : params) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--param expects KEY=V1,V2,..., got '" + spec + "'");
        std::vector<std::string> values;
        std::stringstream ss(spec.substr(eq + 1));
        std::string v;
        while (std::getline(ss, v, ',')) if (!v.empty()) values.push_back(v);
        if (values.empty()) throw std::invalid_argument("sweep: empty value list in '" + spec + "'");
        axes.emplace_back(spec.substr(0, eq), values);
    }

    std::vector<std::map<std::string, std::string>> grid{{}};
    for (const auto& [key, values] : axes) {
        std::vector<std::map<std::string, std::string>> next;
        for (const auto& point : grid)
            for (const auto& v : values) {
                auto p = point;
                p[key] = v;
                next.push_back(p);
            }
        grid = next;
    }
    std::vector<std::map<std::string, std::string>> seeded;
    for (int s = 0; s < seeds; ++s)
        for (auto point : grid) {
            point["seed"] = std::to_string(base.seed + std::uint64_t(s));
            seeded.push_back(point);
        }

    const auto points = engine::sweep(base, seeded);
    fs::create_directories(args.out_dir);
    std::ofstream out(args.out_dir + "/sweep.csv", std::ios::binary);
    out << "seed";
    for (const auto& [key, values] : axes) out << ',' << key;
    out << ",final_accuracy,final_train_loss,mean_selected,mean_round_energy,"
           "mean_per_selected_energy\n";
    for (const auto& pt : points) {
        out << pt.overrides.at("seed");
        for (const auto& [key, values] : axes) out << ',' << pt.overrides.at(key);
        out << ',' << io::fmt(pt.final_accuracy) << ',' << io::fmt(pt.final_train_loss)
            << ',' << io::fmt(pt.mean_selected) << ',' << io::fmt(pt.mean_round_energy)
            << ',' << io::fmt(pt.mean_per_selected_energy) << '\n';
    }
    std::cout << "wrote " << args.out_dir << "/sweep.csv (" << points.size()
              << " points)\n";
    return 0;
}

int cmd_gradcheck(const CommonArgs& args, int probes) {
    const auto cfg = build_config(args);
    auto store = datasets::make_synthetic(64, 6, 3, 0.0, cfg.seed);
    double worst = 0.0;
    for (int arch_id = 0; arch_id < 2; ++arch_id) {
        learner::Architecture arch;
        arch.input_dim = store.feature_dim;
        arch.num_classes = store.num_classes;
        arch.hidden_dim = arch_id == 0 ? 0 : 8;
        arch.l2_reg = arch_id == 0 ? 1e-4 : 0.0;
        auto eng = rng::engine(cfg.seed, rng::Stream::Probe, std::uint64_t(arch_id));
        for (int p = 0; p < probes; ++p) {
            const auto params = learner::random_params(arch, eng, 0.3);
            std::vector<std::size_t> batch(8);
            for (auto& i : batch) i = eng() % store.size();
            const auto analytic = learner::loss_and_gradient(params, store, batch).second;
            const auto numeric =
                gradcheck::finite_difference_gradient(params, store, batch);
            worst = std::max(worst,
                             gradcheck::compare_gradients(analytic, numeric).max_rel_error);
        }
    }
    std::cout << "gradcheck: max relative error " << worst << " over " << probes
              << " probes per architecture\n";
    return worst <= 1e-4 ? 0 : 1;
}

int cmd_bounds(const CommonArgs& args, const std::string& trace_path) {
    const auto cfg = build_config(args);
    fs::create_directories(args.out_dir);
    if (!trace_path.empty()) {
        const auto obs = io::read_observations_csv(trace_path, std::size_t(cfg.num_devices));
        bounds::ComparisonInputs in;
        in.lr = cfg.lr;
        in.G2 = cfg.g2;
        in.delta2 = cfg.delta2;
        in.batch_size = cfg.batch_size;
        in.gamma_thr = cfg.gamma_thr_linear();
        in.initial_loss = obs.front().train_loss;
        in.f_star_est = 0.0;
        std::ofstream out(args.out_dir + "/bounds.json", std::ios::binary);
        out << bounds::empirical_comparison(obs, in).dump(2) << '\n';
    } else {
        const auto problem = engine::prepare_problem(cfg);
        const auto result = engine::run_on(cfg, problem);
        std::ofstream out(args.out_dir + "/bounds.json", std::ios::binary);
        out << bounds_report(cfg, problem, result).dump(2) << '\n';
    }
    std::cout << "wrote " << args.out_dir << "/bounds.json\n";
    return 0;
}

int cmd_oracle(const CommonArgs& args, int instances) {
    const auto cfg = build_config(args);
    if (cfg.num_devices > 12) {
        std::cerr << "oracle: N must be <= 12 (exhaustive enumeration guard)\n";
        return 2;
    }
    const std::size_t n = std::size_t(cfg.num_devices);
    auto eng = rng::engine(cfg.seed, rng::Stream::Probe);
    int agree = 0;
    for (int r = 0; r < instances; ++r) {
        std::vector<double> quality(n);
        for (double& q : quality) q = rng::uniform(eng, -1.0, 1.0);
        const double alpha = std::vector<double>{0.0, 1.0, 5e3}[eng() % 3];
        const double delta2 = double(eng() % 2);
        const double G2 = double(eng() % 2);
        const auto d = scheduler::select_from_quality(quality, alpha, delta2,
                                                      cfg.gamma_thr_linear(), G2,
                                                      cfg.batch_size);
        const double attained = d.penalty[std::size_t(d.k_star) - 1];
        double best = std::numeric_limits<double>::infinity();
        for (std::uint64_t mask = 1; mask < (1ull << n); ++mask) {
            double sum = 0.0;
            int k = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (mask & (1ull << i)) {
                    sum += quality[i];
                    ++k;
                }
            best = std::min(best, alpha * scheduler::penalty_term(k, delta2,
                                                                  cfg.gamma_thr_linear(),
                                                                  G2, cfg.batch_size) -
                                      sum);
        }
        if (std::abs(attained - best) <= 1e-9 * std::max(1.0, std::abs(best))) ++agree;
    }
    std::cout << "oracle: " << agree << "/" << instances << " instances agree\n";
    return agree == instances ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AirComp federated edge learning simulator"};
    app.require_subcommand(1);

    CommonArgs run_args, compare_args, sweep_args, grad_args, bounds_args, oracle_args;
    std::string policies = "proposed,benchmark";
    std::vector<std::string> sweep_params;
    int sweep_seeds = 1, probes = 100, oracle_instances = 1000;
    std::string trace_path;

    auto* run = app.add_subcommand("run", "run one simulation");
    add_common(run, run_args);
    auto* compare = app.add_subcommand("compare", "run several policies on shared draws");
    add_common(compare, compare_args);
    compare->add_option("--policies", policies, "comma-separated policy list");
    auto* sweep = app.add_subcommand("sweep", "grid sweep over config keys");
    add_common(sweep, sweep_args);
    sweep->add_option("--param", sweep_params, "KEY=V1,V2,... (repeatable)");
    sweep->add_option("--seeds", sweep_seeds, "replicate runs over consecutive seeds");
    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(grad, grad_args);
    grad->add_option("--probes", probes, "random probes per architecture");
    auto* bnds = app.add_subcommand("bounds", "evaluate convergence bounds");
    add_common(bnds, bounds_args);
    bnds->add_option("--trace", trace_path, "existing metrics.csv to evaluate");
    auto* oracle = app.add_subcommand("oracle", "exhaustive scheduler verification");
    add_common(oracle, oracle_args);
    oracle->add_option("--instances", oracle_instances, "random instances to check");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (compare->parsed()) return cmd_compare(compare_args, policies);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_params, sweep_seeds);
        if (grad->parsed()) return cmd_gradcheck(grad_args, probes);
        if (bnds->parsed()) return cmd_bounds(bounds_args, trace_path);
        if (oracle->parsed()) return cmd_oracle(oracle_args, oracle_instances);
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
