#pragma once

// End-to-end drivers on a toy model: one-shot prune, one-shot prune plus
// mask-frozen recovery, and gradual sparsity sweeps with the cyclic schedule.

#include "ovit/pruners.hpp"
#include "ovit/schedules.hpp"
#include "ovit/tensorstore.hpp"
#include "ovit/toy.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ovit {

struct PipelineOptions {
    std::size_t num_grads = 0;          // 0: every sample (still capped by the Fisher config)
    double extra_recovery_ratio = 0.0;  // extra fine-tuning per checkpoint, as a fraction of the run's budget
};

struct EventRecord {
    std::uint64_t step = 0;
    double target = 0.0;
    double sparsity = 0.0;  // achieved, over prunable weights
    double loss_before = 0.0;
    double loss_after = 0.0;
    double predicted_increase = 0.0;
    double loss_recovered = 0.0;
    std::optional<double> loss_extra;
    std::size_t clamp_warnings = 0;

    double true_increase() const { return loss_after - loss_before; }
};

struct Checkpoint {
    double sparsity = 0.0;
    std::uint64_t step = 0;
    TensorContainer container;
};

struct RunReport {
    std::string method;
    std::vector<EventRecord> events;
    std::vector<Checkpoint> checkpoints;
    std::vector<std::string> layer_ids;
    std::vector<std::vector<std::uint8_t>> final_masks;
    double final_loss = 0.0;
};

namespace detail {

inline double achieved_sparsity(const ToyModel& m) {
    std::size_t zeros = 0, total = 0;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        const auto p = m.prunable(l);
        const auto& mask = m.mask(l);
        for (std::size_t i = 0; i < m.layer_size(l); ++i) {
            if (!p.empty() && !p[i]) continue;
            ++total;
            if (!mask.empty() && !mask[i]) ++zeros;
        }
    }
    return total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
}

inline GradientProvider model_gradients(const ToyModel& model, std::size_t count) {
    return [&model, count](const std::vector<LayerState>& layers) {
        ToyModel probe = model;
        probe.load(layers);
        return probe.sample_gradients(count);
    };
}

inline void recover(ToyModel& model, std::uint64_t steps, const LrSchedule& lr, std::uint64_t t0) {
    for (std::uint64_t t = 0; t < steps; ++t) {
        model.descend(lr_at(lr, t0 + t));
        if (!model.finite())
            throw NumericalError("recovery diverged at step " + std::to_string(t0 + t));
    }
}

inline void finalize(RunReport& r, const ToyModel& m) {
    r.layer_ids.clear();
    r.final_masks.clear();
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        r.layer_ids.push_back(ToyModel::layer_id(l));
        r.final_masks.push_back(m.mask(l).empty() ? std::vector<std::uint8_t>(m.layer_size(l), 1) : m.mask(l));
    }
    r.final_loss = m.loss();
}

inline std::size_t gradient_count(const ToyModel& m, const PrunerSpec& spec, const PipelineOptions& opt) {
    std::size_t n = opt.num_grads ? opt.num_grads : m.num_samples();
    return std::min({n, m.num_samples(), spec.fisher.num_grads});
}

}  // namespace detail

/// Prunes the model once (with spec.recomputations sub-steps) and records true vs predicted loss change.
inline RunReport run_oneshot(ToyModel& model, const PrunerSpec& spec, double sparsity, const PipelineOptions& opt = {}) {
    RunReport report;
    report.method = method_name(spec.method);
    EventRecord ev;
    ev.target = spec.nm ? spec.nm->sparsity() : sparsity;
    ev.loss_before = model.loss();
    const auto provider = detail::model_gradients(model, detail::gradient_count(model, spec, opt));
    const auto result = prune_with_recompute(model.layer_states(), provider, sparsity, spec.recomputations, spec);
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        model.set_mask(l, result.layers[l].mask);
        model.set_flat(l, result.layers[l].weights);
    }
    ev.loss_after = model.loss();
    ev.loss_recovered = ev.loss_after;
    ev.predicted_increase = result.predicted_loss_increase;
    ev.clamp_warnings = result.clamp_warnings;
    ev.sparsity = detail::achieved_sparsity(model);
    report.events.push_back(ev);
    detail::finalize(report, model);
    return report;
}

/// run_oneshot followed by `recovery_steps` of mask-frozen descent under `lr`.
inline RunReport run_oneshot_finetune(ToyModel& model, const PrunerSpec& spec, double sparsity,
                                      std::uint64_t recovery_steps, const LrSchedule& lr,
                                      const PipelineOptions& opt = {}) {
    lr.validate();
    auto report = run_oneshot(model, spec, sparsity, opt);
    detail::recover(model, recovery_steps, lr, 0);
    report.events.back().loss_recovered = model.loss();
    report.checkpoints.push_back({report.events.back().sparsity, recovery_steps, model.to_container()});
    detail::finalize(report, model);
    return report;
}

/// Gradual pruning: at each planned event the Fisher is rebuilt from fresh
/// gradients, the model is pruned to the event's target, and it then recovers
/// with frozen masks until the next event. One checkpoint per target.
inline RunReport run_gradual(ToyModel& model, const PrunerSpec& spec, const SweepPlan& plan, const LrSchedule& lr,
                             const PipelineOptions& opt = {}) {
    lr.validate();
    if (spec.nm) throw std::invalid_argument("gradual sweeps use sparsity targets, not an N:M pattern");
    RunReport report;
    report.method = method_name(spec.method);
    const auto extra_steps = static_cast<std::uint64_t>(
        std::llround(opt.extra_recovery_ratio * static_cast<double>(plan.total_steps())));
    for (const auto& event : plan.events) {
        EventRecord ev;
        ev.step = event.step;
        ev.target = event.sparsity;
        ev.loss_before = model.loss();
        const auto provider = detail::model_gradients(model, detail::gradient_count(model, spec, opt));
        const auto result = prune_with_recompute(model.layer_states(), provider, event.sparsity, spec.recomputations, spec);
        for (std::size_t l = 0; l < model.num_layers(); ++l) {
            model.set_mask(l, result.layers[l].mask);
            model.set_flat(l, result.layers[l].weights);
        }
        ev.loss_after = model.loss();
        ev.predicted_increase = result.predicted_loss_increase;
        ev.clamp_warnings = result.clamp_warnings;
        ev.sparsity = detail::achieved_sparsity(model);

        detail::recover(model, event.checkpoint_step - event.step, lr, event.step);
        ev.loss_recovered = model.loss();
        if (extra_steps > 0) {
            ToyModel extra = model;
            detail::recover(extra, extra_steps, LrSchedule{lr.max, lr.min, extra_steps}, 0);
            ev.loss_extra = extra.loss();
        }
        report.events.push_back(ev);
        report.checkpoints.push_back({ev.sparsity, event.checkpoint_step, model.to_container()});
    }
    detail::finalize(report, model);
    return report;
}

namespace detail {
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}
}  // namespace detail

/// Line-delimited records "record <step> <field> <value>", then a summary table.
inline void write_report(const RunReport& r, std::ostream& out) {
    using detail::fmt;
    for (const auto& e : r.events) {
        auto rec = [&](const char* field, double v) { out << "record\t" << e.step << '\t' << field << '\t' << fmt(v) << '\n'; };
        rec("target", e.target);
        rec("sparsity", e.sparsity);
        rec("loss_before", e.loss_before);
        rec("loss_after", e.loss_after);
        rec("predicted_increase", e.predicted_increase);
        rec("true_increase", e.true_increase());
        rec("loss_recovered", e.loss_recovered);
        if (e.loss_extra) rec("loss_extra", *e.loss_extra);
        if (e.clamp_warnings) rec("clamp_warnings", static_cast<double>(e.clamp_warnings));
    }
    out << "# summary method=" << r.method << '\n';
    out << "# step\ttarget\tsparsity\tloss_before\tloss_after\tpredicted\ttrue_delta\trecovered\n";
    for (const auto& e : r.events)
        out << e.step << '\t' << fmt(e.target) << '\t' << fmt(e.sparsity) << '\t' << fmt(e.loss_before) << '\t'
            << fmt(e.loss_after) << '\t' << fmt(e.predicted_increase) << '\t' << fmt(e.true_increase()) << '\t'
            << fmt(e.loss_recovered) << '\n';
    for (std::size_t l = 0; l < r.layer_ids.size(); ++l) {
        std::size_t zeros = 0;
        for (auto m : r.final_masks[l]) zeros += m ? 0 : 1;
        out << "# mask layer." << r.layer_ids[l] << "\t" << zeros << "/" << r.final_masks[l].size() << '\n';
    }
    out << "# final_loss\t" << fmt(r.final_loss) << '\n';
}

inline void write_report_csv(const RunReport& r, std::ostream& out) {
    using detail::fmt;
    out << "step,target,sparsity,loss_before,loss_after,predicted_increase,true_increase,loss_recovered\n";
    for (const auto& e : r.events)
        out << e.step << ',' << fmt(e.target) << ',' << fmt(e.sparsity) << ',' << fmt(e.loss_before) << ','
            << fmt(e.loss_after) << ',' << fmt(e.predicted_increase) << ',' << fmt(e.true_increase()) << ','
            << fmt(e.loss_recovered) << '\n';
}

}  // namespace ovit
