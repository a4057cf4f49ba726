#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "airfl/bounds.hpp"
#include "airfl/engine.hpp"

namespace airfl::io {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline const char* kMetricsHeader =
    "round,test_accuracy,test_loss,train_loss,num_selected,selected_ids,"
    "mean_selected_energy,sum_selected_energy,cumulative_mean_energy,"
    "mean_residual_norm_sq,g_norm_sq,penalty_at_kstar,noise_std,budget_violations";

inline std::string metrics_row(const engine::RoundMetrics& m) {
    std::ostringstream out;
    out << m.round << ',' << fmt(m.test_accuracy) << ',' << fmt(m.test_loss) << ','
        << fmt(m.train_loss) << ',' << m.num_selected << ',';
    for (std::size_t i = 0; i < m.selected_ids.size(); ++i) {
        if (i) out << ';';
        out << m.selected_ids[i];
    }
    out << ',' << fmt(m.mean_selected_energy) << ',' << fmt(m.sum_selected_energy)
        << ',' << fmt(m.cumulative_mean_energy) << ',' << fmt(m.mean_residual_norm_sq)
        << ',' << fmt(m.g_norm_sq) << ',' << fmt(m.penalty_at_kstar) << ','
        << fmt(m.noise_std) << ',' << m.budget_violations;
    return out.str();
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<engine::RoundMetrics>& metrics) {
    std::ofstream out(path, std::ios::binary);  // binary keeps rows byte-stable
    if (!out) throw std::runtime_error("cannot write " + path);
    out << kMetricsHeader << '\n';
    for (const auto& m : metrics) out << metrics_row(m) << '\n';
}

inline std::vector<bounds::RoundObservation> read_observations_csv(
    const std::string& path, std::size_t num_devices) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("round,", 0) != 0)
        throw std::runtime_error("metrics csv: missing header in " + path);
    std::vector<bounds::RoundObservation> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        if (cols.size() < 14) throw std::runtime_error("metrics csv: short row in " + path);
        bounds::RoundObservation obs;
        obs.round = std::stoi(cols[0]);
        obs.train_loss = std::stod(cols[3]);
        obs.selected = std::stoul(cols[4]);
        obs.num_devices = num_devices;
        obs.mean_residual_norm_sq = std::stod(cols[9]);
        obs.g_norm_sq = std::stod(cols[10]);
        out.push_back(obs);
    }
    return out;
}

inline void write_decisions_jsonl(const std::string& path,
                                  const std::vector<engine::DecisionRecord>& decisions) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& d : decisions) {
        nlohmann::json rec;
        rec["round"] = d.round;
        rec["k_star"] = d.k_star;
        rec["penalty"] = d.penalty;
        rec["selected_ids"] = d.selected_ids;
        out << rec.dump() << '\n';
    }
}

// Flat binary checkpoint: little-endian u64 length prefix, then that many
// little-endian 64-bit reals.
inline void write_checkpoint(const std::string& path, const Vec& w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    const std::uint64_t n = w.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(w.data()),
              std::streamsize(n * sizeof(double)));
}

inline Vec read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    Vec w(n);
    in.read(reinterpret_cast<char*>(w.data()), std::streamsize(n * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint truncated: " + path);
    return w;
}

// Flat key = value configuration file; '#' starts a comment.
inline void load_config_file(const std::string& path, engine::SimulationConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                                  ": empty key");
        cfg.set(key, value);
    }
}

inline void write_config_echo(const std::string& path,
                              const engine::SimulationConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& [k, v] : cfg.to_map()) out << k << " = " << v << '\n';
}

}  // namespace airfl::io
