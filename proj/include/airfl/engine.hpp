#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "airfl/bounds.hpp"
#include "airfl/channel.hpp"
#include "airfl/datasets.hpp"
#include "airfl/gradient.hpp"
#include "airfl/learner.hpp"
#include "airfl/residual.hpp"
#include "airfl/rng.hpp"
#include "airfl/scheduler.hpp"

namespace airfl::engine {

struct SimulationConfig {
    // population and schedule
    int num_devices = 100;
    int rounds = 50;
    std::uint64_t seed = 1;
    int threads = 1;

    // local training
    std::size_t batch_size = 10;
    int epochs = 2;
    double lr = 0.01;
    double momentum = 0.5;

    // model
    std::string model = "logistic";  // logistic | mlp
    std::size_t hidden_dim = 32;
    double l2_reg = 1e-4;

    // data
    std::string dataset = "synthetic";  // synthetic | mnist | idx
    std::string data_dir;
    std::string train_images, train_labels, test_images, test_labels;  // dataset=idx
    std::size_t mnist_subset = 0;  // 0 = full training set
    std::size_t num_examples = 2000;   // synthetic train size
    std::size_t num_test_examples = 1000;
    std::size_t feature_dim = 20;
    int num_classes = 5;
    double label_flip = 0.02;
    std::string partition = "iid";  // iid | noniid
    int shards_per_device = 2;

    // channel and power control
    double sigma0_sq = 1.0;
    double gamma_thr_db = 0.0;
    bool noiseless = false;
    double norm_scale = 1.0;  // nu, post-processing scale of the noise

    // scheduler
    std::string policy = "proposed";
    std::string norm_horizon = "round";  // round | running
    bool hard_energy_budget = false;
    double alpha = 5e3;
    double lambda_e = 0.5;
    double rho1 = 0.5;
    double energy_budget = 1.5;
    double g2 = 1.0;      // G^2 fed to the penalty term
    double delta2 = 1.0;  // delta^2 fed to the penalty term
    int baseline1_k = 30;
    double baseline2_h_threshold = 1.0;
    int baseline3_kc = 50;
    int baseline3_k = 20;
    double baseline4_c = 1.0;
    double baseline4_pon = 4.0;
    bool baseline4_probabilistic = false;

    // residual feedback
    double xi = 1.0;
    std::string residual_mode = "literal";  // literal | accumulate
    bool residual_enabled = true;

    void validate() const {
        if (num_devices < 1 || rounds < 0) throw std::invalid_argument("config: bad N or T");
        if (lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
        if (rho1 < 0.0 || rho1 > 1.0 || lambda_e < 0.0 || lambda_e > 1.0)
            throw std::invalid_argument("config: weights must be in [0,1]");
        if (sigma0_sq <= 0.0) throw std::invalid_argument("config: sigma0_sq must be positive");
        if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
        if (norm_horizon != "round" && norm_horizon != "running")
            throw std::invalid_argument("config: norm_horizon must be round or running");
    }

    double gamma_thr_linear() const { return channel::db_to_linear(gamma_thr_db); }

    scheduler::QualityWeights weights() const {
        scheduler::QualityWeights w;
        w.rho1 = rho1;
        w.rho2 = 1.0 - rho1;
        w.lambda_e = lambda_e;
        w.lambda_v = 1.0 - lambda_e;
        w.alpha = alpha;
        return w;
    }

    scheduler::BaselineParams baseline_params() const {
        scheduler::BaselineParams p;
        p.random_k = baseline1_k;
        p.h_threshold = baseline2_h_threshold;
        p.top_channels = baseline3_kc;
        p.top_gradients = baseline3_k;
        p.gate_cost = baseline4_c;
        p.gate_power = baseline4_pon;
        p.gate_probabilistic = baseline4_probabilistic;
        return p;
    }

    void set(const std::string& key, const std::string& value);
    std::map<std::string, std::string> to_map() const;
};

namespace detail {

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean value '" + v + "'");
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void SimulationConfig::set(const std::string& key, const std::string& value) {
    try {
        if (key == "num_devices" || key == "N") num_devices = std::stoi(value);
        else if (key == "rounds" || key == "T") rounds = std::stoi(value);
        else if (key == "seed") seed = std::stoull(value);
        else if (key == "threads") threads = std::stoi(value);
        else if (key == "batch_size") batch_size = std::stoul(value);
        else if (key == "epochs") epochs = std::stoi(value);
        else if (key == "lr") lr = std::stod(value);
        else if (key == "momentum") momentum = std::stod(value);
        else if (key == "model") model = value;
        else if (key == "hidden_dim") hidden_dim = std::stoul(value);
        else if (key == "l2_reg") l2_reg = std::stod(value);
        else if (key == "dataset") dataset = value;
        else if (key == "data_dir") data_dir = value;
        else if (key == "train_images") train_images = value;
        else if (key == "train_labels") train_labels = value;
        else if (key == "test_images") test_images = value;
        else if (key == "test_labels") test_labels = value;
        else if (key == "mnist_subset") mnist_subset = std::stoul(value);
        else if (key == "num_examples") num_examples = std::stoul(value);
        else if (key == "num_test_examples") num_test_examples = std::stoul(value);
        else if (key == "feature_dim") feature_dim = std::stoul(value);
        else if (key == "num_classes") num_classes = std::stoi(value);
        else if (key == "label_flip") label_flip = std::stod(value);
        else if (key == "partition") partition = value;
        else if (key == "shards_per_device") shards_per_device = std::stoi(value);
        else if (key == "sigma0_sq") sigma0_sq = std::stod(value);
        else if (key == "gamma_thr_db") gamma_thr_db = std::stod(value);
        else if (key == "noiseless") noiseless = detail::parse_bool(value);
        else if (key == "norm_scale" || key == "nu") norm_scale = std::stod(value);
        else if (key == "policy") policy = value;
        else if (key == "norm_horizon") norm_horizon = value;
        else if (key == "hard_energy_budget") hard_energy_budget = detail::parse_bool(value);
        else if (key == "alpha") alpha = std::stod(value);
        else if (key == "lambda_e") lambda_e = std::stod(value);
        else if (key == "rho1") rho1 = std::stod(value);
        else if (key == "energy_budget") energy_budget = std::stod(value);
        else if (key == "g2") g2 = std::stod(value);
        else if (key == "delta2") delta2 = std::stod(value);
        else if (key == "baseline1_k") baseline1_k = std::stoi(value);
        else if (key == "baseline2_h_threshold") baseline2_h_threshold = std::stod(value);
        else if (key == "baseline3_kc") baseline3_kc = std::stoi(value);
        else if (key == "baseline3_k") baseline3_k = std::stoi(value);
        else if (key == "baseline4_c") baseline4_c = std::stod(value);
        else if (key == "baseline4_pon") baseline4_pon = std::stod(value);
        else if (key == "baseline4_probabilistic") baseline4_probabilistic = detail::parse_bool(value);
        else if (key == "xi") xi = std::stod(value);
        else if (key == "residual_mode") residual_mode = value;
        else if (key == "residual_enabled") residual_enabled = detail::parse_bool(value);
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad value '" + value + "' for key '" + key + "'");
    }
}

inline std::map<std::string, std::string> SimulationConfig::to_map() const {
    using detail::format_double;
    std::map<std::string, std::string> m;
    m["num_devices"] = std::to_string(num_devices);
    m["rounds"] = std::to_string(rounds);
    m["seed"] = std::to_string(seed);
    m["threads"] = std::to_string(threads);
    m["batch_size"] = std::to_string(batch_size);
    m["epochs"] = std::to_string(epochs);
    m["lr"] = format_double(lr);
    m["momentum"] = format_double(momentum);
    m["model"] = model;
    m["hidden_dim"] = std::to_string(hidden_dim);
    m["l2_reg"] = format_double(l2_reg);
    m["dataset"] = dataset;
    m["data_dir"] = data_dir;
    m["train_images"] = train_images;
    m["train_labels"] = train_labels;
    m["test_images"] = test_images;
    m["test_labels"] = test_labels;
    m["mnist_subset"] = std::to_string(mnist_subset);
    m["num_examples"] = std::to_string(num_examples);
    m["num_test_examples"] = std::to_string(num_test_examples);
    m["feature_dim"] = std::to_string(feature_dim);
    m["num_classes"] = std::to_string(num_classes);
    m["label_flip"] = format_double(label_flip);
    m["partition"] = partition;
    m["shards_per_device"] = std::to_string(shards_per_device);
    m["sigma0_sq"] = format_double(sigma0_sq);
    m["gamma_thr_db"] = format_double(gamma_thr_db);
    m["noiseless"] = noiseless ? "true" : "false";
    m["norm_scale"] = format_double(norm_scale);
    m["policy"] = policy;
    m["norm_horizon"] = norm_horizon;
    m["hard_energy_budget"] = hard_energy_budget ? "true" : "false";
    m["alpha"] = format_double(alpha);
    m["lambda_e"] = format_double(lambda_e);
    m["rho1"] = format_double(rho1);
    m["energy_budget"] = format_double(energy_budget);
    m["g2"] = format_double(g2);
    m["delta2"] = format_double(delta2);
    m["baseline1_k"] = std::to_string(baseline1_k);
    m["baseline2_h_threshold"] = format_double(baseline2_h_threshold);
    m["baseline3_kc"] = std::to_string(baseline3_kc);
    m["baseline3_k"] = std::to_string(baseline3_k);
    m["baseline4_c"] = format_double(baseline4_c);
    m["baseline4_pon"] = format_double(baseline4_pon);
    m["baseline4_probabilistic"] = baseline4_probabilistic ? "true" : "false";
    m["xi"] = format_double(xi);
    m["residual_mode"] = residual_mode;
    m["residual_enabled"] = residual_enabled ? "true" : "false";
    return m;
}

struct RoundMetrics {
    int round = 0;
    double test_accuracy = 0.0;
    double test_loss = 0.0;
    double train_loss = 0.0;
    int num_selected = 0;
    std::vector<int> selected_ids;
    double mean_selected_energy = 0.0;
    double sum_selected_energy = 0.0;
    double cumulative_mean_energy = 0.0;  // mean over devices of ledger average
    double mean_residual_norm_sq = 0.0;   // entering the next round
    double g_norm_sq = 0.0;               // ||mean of all device gradients||^2
    double penalty_at_kstar = 0.0;
    double noise_std = 0.0;
    int budget_violations = 0;
};

struct DecisionRecord {
    int round = 0;
    int k_star = 0;
    std::vector<double> penalty;
    std::vector<int> selected_ids;
};

struct RunResult {
    std::vector<RoundMetrics> metrics;
    std::vector<DecisionRecord> decisions;
    learner::ModelParams model;
    std::vector<bounds::RoundObservation> observations;
    double initial_train_loss = 0.0;  // f(w_0) on the training set
};

struct Problem {
    datasets::ExampleStore train;
    datasets::ExampleStore test;
    std::vector<datasets::DevicePartition> partitions;
    learner::Architecture arch;
};

// Thrown when a round aborts mid-run; carries whatever trace completed so
// callers can flush it before reporting the failure.
class RunError : public std::runtime_error {
  public:
    RunError(const std::string& what, RunResult partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const RunResult& partial() const { return partial_; }

  private:
    RunResult partial_;
};

namespace detail {

inline datasets::ExampleStore slice(const datasets::ExampleStore& store,
                                    std::size_t begin, std::size_t end) {
    datasets::ExampleStore out;
    out.feature_dim = store.feature_dim;
    out.num_classes = store.num_classes;
    out.features.assign(store.features.begin() + begin * store.feature_dim,
                        store.features.begin() + end * store.feature_dim);
    out.labels.assign(store.labels.begin() + begin, store.labels.begin() + end);
    return out;
}

}  // namespace detail

// Builds train/test stores, device partitions and the model architecture
// from the configuration.
inline Problem prepare_problem(const SimulationConfig& cfg) {
    cfg.validate();
    Problem p;
    if (cfg.dataset == "synthetic") {
        auto all = datasets::make_synthetic(cfg.num_examples + cfg.num_test_examples,
                                            cfg.feature_dim, cfg.num_classes,
                                            cfg.label_flip, cfg.seed);
        p.train = detail::slice(all, 0, cfg.num_examples);
        p.test = detail::slice(all, cfg.num_examples, all.size());
        p.train.num_classes = p.test.num_classes = cfg.num_classes;
    } else if (cfg.dataset == "mnist" || cfg.dataset == "idx") {
        std::string ti = cfg.train_images, tl = cfg.train_labels;
        std::string vi = cfg.test_images, vl = cfg.test_labels;
        if (cfg.dataset == "mnist") {
            ti = cfg.data_dir + "/train-images-idx3-ubyte";
            tl = cfg.data_dir + "/train-labels-idx1-ubyte";
            vi = cfg.data_dir + "/t10k-images-idx3-ubyte";
            vl = cfg.data_dir + "/t10k-labels-idx1-ubyte";
        }
        p.train = datasets::load_idx(ti, tl);
        p.test = datasets::load_idx(vi, vl);
        p.test.num_classes = p.train.num_classes =
            std::max(p.train.num_classes, p.test.num_classes);
        if (cfg.mnist_subset > 0 && cfg.mnist_subset < p.train.size())
            p.train = detail::slice(p.train, 0, cfg.mnist_subset);
    } else {
        throw std::invalid_argument("config: unknown dataset '" + cfg.dataset + "'");
    }

    if (cfg.partition == "iid") {
        p.partitions = datasets::partition_iid(p.train, cfg.num_devices, cfg.seed);
    } else if (cfg.partition == "noniid") {
        p.partitions = datasets::partition_noniid_shards(p.train, cfg.num_devices,
                                                         cfg.shards_per_device, cfg.seed);
    } else {
        throw std::invalid_argument("config: unknown partition '" + cfg.partition + "'");
    }

    p.arch.input_dim = p.train.feature_dim;
    p.arch.num_classes = p.train.num_classes;
    p.arch.l2_reg = cfg.l2_reg;
    if (cfg.model == "logistic") p.arch.hidden_dim = 0;
    else if (cfg.model == "mlp") p.arch.hidden_dim = cfg.hidden_dim;
    else throw std::invalid_argument("config: unknown model '" + cfg.model + "'");
    return p;
}

inline learner::LossReport evaluate(const learner::ModelParams& model,
                                    const datasets::ExampleStore& test) {
    return learner::evaluate(model, test);
}

// Executes the four-step round protocol: broadcast, local update on every
// device, channel draw + reports + selection, AirComp aggregation and global
// update, then the residual/ledger barrier. Deterministic for a fixed
// config regardless of thread count.
inline RunResult run_on(const SimulationConfig& cfg, const Problem& problem) {
    cfg.validate();
    const std::size_t n_dev = std::size_t(cfg.num_devices);
    const scheduler::Policy policy = scheduler::parse_policy(cfg.policy);
    const channel::PowerPolicy power(cfg.sigma0_sq, cfg.gamma_thr_linear());

    RunResult result;
    auto init_eng = rng::engine(cfg.seed, rng::Stream::Init);
    result.model = learner::random_params(problem.arch, init_eng);
    const std::size_t dim = result.model.w.size();
    result.initial_train_loss =
        learner::loss_and_gradient(result.model, problem.train).first.loss;

    const double xi = cfg.residual_enabled ? cfg.xi : 0.0;
    residual::ResidualStore residuals(
        n_dev, dim, xi,
        cfg.residual_mode == "accumulate" ? residual::Mode::AccumulateFull
                                          : residual::Mode::Literal);
    scheduler::EnergyLedger ledger(n_dev, cfg.energy_budget);

    std::vector<Vec> gradients(n_dev), combined(n_dev);
    std::vector<double> gnorm_sq(n_dev), energies(n_dev);
    double run_g_max = 0.0, run_h_max = 0.0;  // only used with norm_horizon=running

    for (int t = 1; t <= cfg.rounds; ++t) try {
        // Steps 1-2: broadcast the snapshot, every device trains locally.
        auto device_work = [&](std::size_t lo, std::size_t hi) {
            for (std::size_t d = lo; d < hi; ++d) {
                auto dev_eng = rng::engine(cfg.seed, rng::Stream::Batch, d, std::uint64_t(t));
                gradients[d] = learner::local_update(
                    result.model, problem.train, problem.partitions[d], cfg.batch_size,
                    cfg.epochs, cfg.lr, cfg.momentum, dev_eng);
                combined[d] = cfg.residual_enabled ? residuals.combine(d, gradients[d])
                                                   : gradients[d];
                gnorm_sq[d] = squared_norm(combined[d]);
            }
        };
        if (cfg.threads <= 1 || n_dev < 2) {
            device_work(0, n_dev);
        } else {
            const std::size_t workers = std::min<std::size_t>(std::size_t(cfg.threads), n_dev);
            std::vector<std::thread> pool;
            const std::size_t chunk = (n_dev + workers - 1) / workers;
            for (std::size_t w = 0; w < workers; ++w) {
                const std::size_t lo = w * chunk;
                const std::size_t hi = std::min(n_dev, lo + chunk);
                if (lo < hi) pool.emplace_back(device_work, lo, hi);
            }
            for (auto& th : pool) th.join();
        }

        // Step 3: channel realization, status reports, selection.
        auto ch_eng = rng::engine(cfg.seed, rng::Stream::Channel, std::uint64_t(t));
        const auto ch = channel::draw_channels(n_dev, ch_eng);
        for (std::size_t d = 0; d < n_dev; ++d)
            energies[d] = channel::transmit_energy(power, ch.magnitudes[d]).energy;

        scheduler::ScheduleDecision decision;
        if (policy == scheduler::Policy::Proposed) {
            if (cfg.norm_horizon == "running") {
                run_g_max = std::max(run_g_max,
                                     *std::max_element(gnorm_sq.begin(), gnorm_sq.end()));
                run_h_max = std::max(
                    run_h_max,
                    *std::max_element(ch.magnitudes.begin(), ch.magnitudes.end()));
            }
            std::vector<scheduler::DeviceReport> reports;
            scheduler::normalize_reports(gnorm_sq, ch.magnitudes, energies, reports,
                                         run_g_max, run_h_max);
            std::vector<std::uint8_t> mask;
            if (cfg.hard_energy_budget) mask = ledger.feasible_mask(energies);
            decision = scheduler::select_lyapunov(
                reports, cfg.weights(), cfg.delta2, cfg.gamma_thr_linear(), cfg.g2,
                cfg.batch_size, cfg.hard_energy_budget ? &mask : nullptr);
        } else {
            auto pol_eng = rng::engine(cfg.seed, rng::Stream::Policy, std::uint64_t(t));
            decision = scheduler::select_baseline(policy, cfg.baseline_params(), gnorm_sq,
                                                  ch.magnitudes, pol_eng);
        }

        // Step 4: AirComp aggregation and global update; empty selections
        // leave the model unchanged.
        RoundMetrics m;
        m.round = t;
        m.num_selected = int(decision.selected_count());
        m.selected_ids = decision.selected_ids();
        if (m.num_selected > 0) {
            std::vector<const Vec*> updates;
            updates.reserve(std::size_t(m.num_selected));
            for (std::size_t d = 0; d < n_dev; ++d)
                if (decision.selected[d]) updates.push_back(&combined[d]);
            auto noise_eng = rng::engine(cfg.seed, rng::Stream::Noise, std::uint64_t(t));
            const auto agg = channel::aircomp_aggregate(
                updates, power, cfg.norm_scale, noise_eng,
                cfg.noiseless || decision.noiseless_override);
            learner::apply_global_update(result.model, agg.aggregate, cfg.lr);
            m.noise_std = agg.noise_std;
        }

        // Residual and ledger barrier.
        residuals.update_after_round(decision.selected, gradients, combined);
        const auto ledger_out = ledger.update(decision, energies);

        // Metrics.
        double sum_e = 0.0;
        for (std::size_t d = 0; d < n_dev; ++d)
            if (decision.selected[d]) sum_e += energies[d];
        m.sum_selected_energy = sum_e;
        m.mean_selected_energy = m.num_selected > 0 ? sum_e / m.num_selected : 0.0;
        double cum = 0.0;
        int violations = 0;
        for (std::size_t d = 0; d < n_dev; ++d) {
            cum += ledger_out.average_energy[d];
            violations += ledger_out.violated[d];
        }
        m.cumulative_mean_energy = cum / double(n_dev);
        m.budget_violations = violations;

        double res_norm = 0.0;
        for (std::size_t d = 0; d < n_dev; ++d) res_norm += residuals.residual_norm_sq(d);
        m.mean_residual_norm_sq = res_norm / double(n_dev);

        {
            std::vector<const Vec*> all;
            all.reserve(n_dev);
            for (const Vec& g : gradients) all.push_back(&g);
            m.g_norm_sq = squared_norm(mean_of(all));
        }
        if (policy == scheduler::Policy::Proposed && decision.k_star > 0)
            m.penalty_at_kstar = decision.penalty[std::size_t(decision.k_star) - 1];

        const auto test_report = learner::evaluate(result.model, problem.test);
        m.test_accuracy = test_report.accuracy;
        m.test_loss = test_report.loss;
        m.train_loss = learner::loss_and_gradient(result.model, problem.train).first.loss;

        result.metrics.push_back(m);
        result.decisions.push_back(
            {t, decision.k_star, decision.penalty, m.selected_ids});

        bounds::RoundObservation obs;
        obs.round = t;
        obs.selected = std::size_t(m.num_selected);
        obs.num_devices = n_dev;
        obs.g_norm_sq = m.g_norm_sq;
        obs.mean_residual_norm_sq = m.mean_residual_norm_sq;
        obs.train_loss = m.train_loss;
        result.observations.push_back(obs);
    } catch (const std::exception& e) {
        throw RunError("round " + std::to_string(t) + ": " + e.what(),
                       std::move(result));
    }
    return result;
}

inline RunResult run(const SimulationConfig& cfg) {
    return run_on(cfg, prepare_problem(cfg));
}

struct SweepPoint {
    std::map<std::string, std::string> overrides;
    SimulationConfig config;
    double final_accuracy = 0.0;
    double final_train_loss = 0.0;
    double mean_selected = 0.0;
    double mean_round_energy = 0.0;           // mean over rounds of summed selected energy
    double mean_per_selected_energy = 0.0;
};

inline SweepPoint summarize(const SimulationConfig& cfg, const RunResult& r,
                            std::map<std::string, std::string> overrides = {}) {
    SweepPoint p;
    p.overrides = std::move(overrides);
    p.config = cfg;
    if (r.metrics.empty()) return p;
    double sel = 0.0, sum_e = 0.0, per_sel = 0.0;
    int per_sel_rounds = 0;
    for (const auto& m : r.metrics) {
        sel += m.num_selected;
        sum_e += m.sum_selected_energy;
        if (m.num_selected > 0) {
            per_sel += m.mean_selected_energy;
            ++per_sel_rounds;
        }
    }
    p.final_accuracy = r.metrics.back().test_accuracy;
    p.final_train_loss = r.metrics.back().train_loss;
    p.mean_selected = sel / double(r.metrics.size());
    p.mean_round_energy = sum_e / double(r.metrics.size());
    p.mean_per_selected_energy = per_sel_rounds > 0 ? per_sel / per_sel_rounds : 0.0;
    return p;
}

// One simulation per grid point; each point gets the template config with
// its overrides applied and a seed derived from the base seed.
inline std::vector<SweepPoint> sweep(
    const SimulationConfig& base,
    const std::vector<std::map<std::string, std::string>>& grid) {
    if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
    std::vector<SweepPoint> out;
    out.reserve(grid.size());
    for (const auto& overrides : grid) {
        SimulationConfig cfg = base;
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        out.push_back(summarize(cfg, run(cfg), overrides));
    }
    return out;
}

}  // namespace airfl::engine
