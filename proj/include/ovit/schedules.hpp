#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ovit {

/// Cyclic linear learning rate: decays linearly from max toward min over
/// each period of T steps, then restarts at max.
struct LrSchedule {
    double max = 5e-4;
    double min = 1e-5;
    std::uint64_t period = 20;

    void validate() const {
        if (!(min > 0.0) || !(max > min) || !std::isfinite(max))
            throw std::invalid_argument("lr schedule needs 0 < min < max");
        if (period < 1) throw std::invalid_argument("lr schedule period must be >= 1");
    }
};

inline double lr_at(const LrSchedule& s, std::uint64_t t) {
    const auto phase = static_cast<double>(t % s.period) / static_cast<double>(s.period);
    return s.max - (s.max - s.min) * phase;
}

struct SweepEvent {
    std::uint64_t step = 0;
    double sparsity = 0.0;
    std::uint64_t checkpoint_step = 0;  // end of the recovery window that follows the prune
};

struct SweepPlan {
    std::vector<double> targets;
    std::uint64_t interval = 20;
    std::vector<SweepEvent> events;

    double initial_target() const { return targets.front(); }
    std::uint64_t total_steps() const { return interval * targets.size(); }
};

inline SweepPlan plan_sweep(std::vector<double> targets, std::uint64_t interval) {
    if (targets.empty()) throw std::invalid_argument("sweep needs at least one target sparsity");
    if (interval < 1) throw std::invalid_argument("sweep interval must be >= 1");
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (!(targets[i] > 0.0 && targets[i] < 1.0))
            throw std::invalid_argument("sweep targets must lie in (0, 1)");
        if (i > 0 && !(targets[i] > targets[i - 1]))
            throw std::invalid_argument("sweep targets must be strictly increasing");
    }
    SweepPlan plan;
    plan.targets = std::move(targets);
    plan.interval = interval;
    for (std::size_t i = 0; i < plan.targets.size(); ++i)
        plan.events.push_back({i * interval, plan.targets[i], (i + 1) * interval});
    return plan;
}

inline std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) throw std::invalid_argument("empty entry in list '" + text + "'");
        item = item.substr(b, e - b + 1);
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw std::invalid_argument("not a number: '" + item + "'");
        out.push_back(v);
    }
    return out;
}

struct ScheduleConfig {
    std::optional<double> lr_max, lr_min;
    std::optional<std::uint64_t> lr_period;
    std::optional<std::vector<double>> sweep_targets;
    std::optional<std::uint64_t> sweep_interval;
};

/// Parses "key = value" lines; '#' starts a comment. Keys: lr.max, lr.min,
/// lr.period, sweep.targets (comma list), sweep.interval.
inline ScheduleConfig parse_schedule_config(const std::string& text) {
    ScheduleConfig cfg;
    std::stringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        try {
            if (key == "lr.max") cfg.lr_max = std::stod(value);
            else if (key == "lr.min") cfg.lr_min = std::stod(value);
            else if (key == "lr.period") cfg.lr_period = std::stoull(value);
            else if (key == "sweep.targets") cfg.sweep_targets = parse_double_list(value);
            else if (key == "sweep.interval") cfg.sweep_interval = std::stoull(value);
            else throw std::invalid_argument("unknown key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

}  // namespace ovit
