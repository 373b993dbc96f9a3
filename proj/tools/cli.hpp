#pragma once

// Command-line front end: prune, sweep, eval and toy, plus two hidden helpers
// (oracle, fixture). run() is separate from main() so tests can drive it.
//
// Exit codes: 0 ok, 1 compliance failure, 2 usage, 3 numerical or runtime error.

#include "ovit/ovit.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace ovit::cli {

enum Exit : int { kOk = 0, kCompliance = 1, kUsage = 2, kRuntime = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ComplianceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline std::string g9(double v) { return fmt("%.9g", v); }

struct PrunerFlags {
    std::string method = "ovit";
    std::optional<double> sparsity;
    std::string nm;
    std::size_t block_size = 64;
    std::optional<double> damp;
    std::size_t num_grads = 4096;
    std::size_t recompute = 1;
    bool per_layer = false;
    std::size_t threads = 1;

    void add_to(CLI::App& app, bool with_sparsity = true) {
        app.add_option("--method", method, "Pruner: gm, wf or ovit")->capture_default_str();
        if (with_sparsity) {
            auto* s = app.add_option("--sparsity", sparsity, "Target fraction of prunable weights set to zero");
            auto* p = app.add_option("--nm", nm, "Semi-structured pattern N:M (N nonzeros per group of M)");
            s->excludes(p);
        }
        app.add_option("--block-size", block_size,
                       "Fisher block size B (desk-scale default 64; the reference ViT setup uses 192)")
            ->capture_default_str();
        app.add_option("--damp", damp, "Fisher dampening lambda (default 1e-8 for ovit/gm, 1e-6 for wf)");
        app.add_option("--num-grads", num_grads, "Maximum gradient samples per layer")->capture_default_str();
        app.add_option("--recompute", recompute, "Fisher recomputations per prune step")->capture_default_str();
        app.add_flag("--per-layer", per_layer, "Uniform sparsity per layer instead of a global pool");
        app.add_option("--threads", threads, "Worker threads for block solves")->capture_default_str();
    }

    PrunerSpec spec() const {
        PrunerSpec s;
        try {
            s = PrunerSpec::for_method(parse_method(method));
            if (!nm.empty()) s.nm = parse_nm(nm);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        s.fisher.block_size = block_size;
        if (damp) s.fisher.dampening = *damp;
        s.fisher.num_grads = num_grads;
        s.recomputations = recompute;
        s.per_layer = per_layer;
        s.threads = threads;
        try {
            s.fisher.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        if (recompute < 1) throw UsageError("--recompute must be >= 1");
        if (threads < 1) throw UsageError("--threads must be >= 1");
        if (sparsity && !(*sparsity >= 0.0 && *sparsity <= 1.0)) throw UsageError("--sparsity must lie in [0, 1]");
        if (s.nm && recompute > 1) throw UsageError("--recompute cannot be combined with --nm");
        return s;
    }
};

struct ToyFlags {
    std::uint64_t seed = 1;
    std::string dims = "16,32,4";
    std::size_t samples = 0;
    std::size_t steps = 1000;
    std::optional<double> train_lr;
    bool keep_last_dense = false;
    std::string targets;
    std::uint64_t interval = 20;
    double lr_max = 0.05;
    double lr_min = 1e-3;
    std::optional<std::uint64_t> period;
    bool acyclic = false;
    double extra_recovery = 0.0;
    std::string config;
    std::string csv;

    void add_to(CLI::App& app) {
        app.add_option("--seed", seed, "Seed for data, teacher and initialization")->capture_default_str();
        app.add_option("--dims", dims, "IN,OUT (linear least squares) or IN,HIDDEN,OUT (tanh MLP)")->capture_default_str();
        app.add_option("--samples", samples, "Dataset size (0: automatic)")->capture_default_str();
        app.add_option("--steps", steps, "Dense training steps before pruning")->capture_default_str();
        app.add_option("--train-lr", train_lr, "Dense training step size (default: 1/L linear, 0.05 MLP)");
        app.add_flag("--keep-last-dense", keep_last_dense, "Mark the output layer non-prunable");
        app.add_option("--targets", targets, "Comma-separated increasing sparsities for a gradual sweep");
        app.add_option("--interval", interval, "Recovery steps after each prune event")->capture_default_str();
        app.add_option("--lr-max", lr_max,
                       "Recovery schedule peak (toy default; the reference ViT schedule uses 5e-4)")
            ->capture_default_str();
        app.add_option("--lr-min", lr_min, "Recovery schedule floor (reference ViT schedule: 1e-5)")->capture_default_str();
        app.add_option("--period", period, "Schedule period T (default: --interval)");
        app.add_flag("--acyclic", acyclic, "One linear decay over the whole recovery budget");
        app.add_option("--extra-recovery", extra_recovery,
                       "Extra fine-tuning per checkpoint as a fraction of the run budget (e.g. 0.333)")
            ->capture_default_str();
        app.add_option("--config", config, "Key-value file: lr.max, lr.min, lr.period, sweep.targets, sweep.interval");
        app.add_option("--csv", csv, "Also write per-event records as CSV");
    }

    ToySpec toy_spec() const {
        ToySpec s;
        s.seed = seed;
        s.samples = samples;
        s.keep_last_dense = keep_last_dense;
        s.dims.clear();
        try {
            for (double d : parse_double_list(dims)) {
                if (d < 1 || d != static_cast<double>(static_cast<std::size_t>(d))) throw std::invalid_argument("bad dim");
                s.dims.push_back(static_cast<std::size_t>(d));
            }
            s.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(std::string("--dims: ") + e.what());
        }
        return s;
    }

    /// Applies --config values for keys not given on the command line.
    void apply_config(const CLI::App& app) {
        if (config.empty()) return;
        std::ifstream in(config);
        if (!in) throw UsageError("cannot read config file '" + config + "'");
        std::stringstream text;
        text << in.rdbuf();
        ScheduleConfig cfg;
        try {
            cfg = parse_schedule_config(text.str());
        } catch (const std::invalid_argument& e) {
            throw UsageError(config + ": " + e.what());
        }
        if (cfg.lr_max && app.count("--lr-max") == 0) lr_max = *cfg.lr_max;
        if (cfg.lr_min && app.count("--lr-min") == 0) lr_min = *cfg.lr_min;
        if (cfg.lr_period && app.count("--period") == 0) period = *cfg.lr_period;
        if (cfg.sweep_interval && app.count("--interval") == 0) interval = *cfg.sweep_interval;
        if (cfg.sweep_targets && app.count("--targets") == 0) {
            std::string joined;
            for (double t : *cfg.sweep_targets) joined += (joined.empty() ? "" : ",") + g9(t);
            targets = joined;
        }
    }

    std::vector<double> target_list() const {
        try {
            return parse_double_list(targets);
        } catch (const std::invalid_argument& e) {
            throw UsageError(std::string("--targets: ") + e.what());
        }
    }

    LrSchedule schedule(std::uint64_t budget) const {
        LrSchedule s{lr_max, lr_min, acyclic ? budget : period.value_or(interval)};
        try {
            s.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return s;
    }
};

/// Layers read from a weights container and an optional gradients container.
inline std::vector<LayerState> load_layers(const TensorContainer& weights, const TensorContainer* grads) {
    std::vector<LayerState> layers;
    for (const auto& id : layer_ids(weights)) {
        LayerState l;
        l.name = "layer." + id;
        l.weights = weights.at(weight_key(id)).to_vector();
        auto as_mask = [&](const std::string& key) -> std::vector<std::uint8_t> {
            const auto* t = weights.find(key);
            if (!t) return {};
            if (t->dtype() != DType::u8_mask || t->size() != l.size())
                throw std::invalid_argument(key + " must be a mask with one entry per weight");
            return t->values<std::uint8_t>();
        };
        l.mask = as_mask(mask_key(id));
        l.prunable = as_mask(prunable_key(id));
        if (!l.mask.empty())
            for (std::size_t i = 0; i < l.size(); ++i)
                if (!l.mask[i]) l.weights(static_cast<Eigen::Index>(i)) = 0.0;
        if (grads) {
            const auto* g = grads->find(grads_key(id));
            if (!g) throw std::invalid_argument(l.name + ": no gradients (" + grads_key(id) + ") in the gradients file");
            l.grads = GradientSet::from_tensor(l.name, *g).samples;
            if (static_cast<std::size_t>(l.grads.cols()) != l.size())
                throw std::invalid_argument(l.name + ": gradient width " + std::to_string(l.grads.cols()) +
                                            " does not match " + std::to_string(l.size()) + " weights");
        }
        layers.push_back(std::move(l));
    }
    if (layers.empty()) throw std::invalid_argument("no layer.<id>.weight tensors found");
    return layers;
}

inline std::vector<std::uint64_t> mask_dims(const TensorContainer& c, const std::string& id) {
    return c.at(weight_key(id)).dims();
}

/// Copy of `base` with pruned weights and masks written back.
inline TensorContainer store_result(const TensorContainer& base, const PruneResult& r) {
    TensorContainer out = base;
    for (const auto& lp : r.layers) {
        const auto id = lp.name.substr(std::string("layer.").size());
        out.set(weight_key(id), base.at(weight_key(id)).with_values(lp.weights));
        const auto mt = Tensor::mask(mask_dims(base, id), lp.mask);
        if (out.contains(mask_key(id))) out.set(mask_key(id), mt);
        else out.insert(mask_key(id), mt);
    }
    return out;
}

inline int cmd_prune(const PrunerFlags& f, const std::string& weights_path, const std::string& grads_path,
                     const std::string& out_path, std::ostream& out) {
    if (!f.sparsity && f.nm.empty()) throw UsageError("prune needs exactly one of --sparsity or --nm");
    const auto spec = f.spec();
    if (spec.method != Method::gm && grads_path.empty()) throw UsageError("--grads is required for wf and ovit");
    const auto weights = read_container(weights_path);
    std::optional<TensorContainer> grads;
    if (!grads_path.empty()) grads = grads_path == weights_path ? weights : read_container(grads_path);
    const auto layers = load_layers(weights, grads ? &*grads : nullptr);

    const auto r = prune_with_recompute(layers, nullptr, f.sparsity.value_or(0.0), spec.recomputations, spec);
    std::size_t zeros = 0, prunable = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& lp = r.layers[l];
        out << lp.name << "\tsparsity\t" << fmt("%.6f", lp.sparsity()) << "\tpredicted\t" << g9(lp.predicted_loss_increase)
            << '\n';
        for (std::size_t i = 0; i < lp.mask.size(); ++i) {
            if (!layers[l].is_prunable(i)) continue;
            ++prunable;
            zeros += lp.mask[i] ? 0 : 1;
        }
    }
    out << "total\tsparsity\t" << fmt("%.6f", prunable ? static_cast<double>(zeros) / static_cast<double>(prunable) : 0.0)
        << "\tpredicted\t" << g9(r.predicted_loss_increase) << '\n';
    if (r.clamp_warnings) out << "# clamped pivots\t" << r.clamp_warnings << '\n';
    if (!out_path.empty()) write_container(out_path, store_result(weights, r));
    return kOk;
}

inline int cmd_eval(const std::string& before_path, const std::string& after_path, const std::string& grads_path,
                    double damp, std::size_t num_grads, const std::string& nm, std::ostream& out) {
    std::optional<NmPattern> pattern;
    if (!nm.empty()) {
        try {
            pattern = parse_nm(nm);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    if (!(damp >= 0.0)) throw UsageError("--damp must be non-negative");
    const auto before_c = read_container(before_path);
    const auto after_c = read_container(after_path);
    const auto grads_c = read_container(grads_path);
    const auto before = load_layers(before_c, nullptr);
    const auto after = load_layers(after_c, &grads_c);
    if (before.size() != after.size()) throw std::invalid_argument("before and after hold different layer sets");

    double total = 0.0;
    std::size_t violations = 0, zeros = 0, count = 0;
    for (std::size_t l = 0; l < after.size(); ++l) {
        const auto& a = after[l];
        if (before[l].name != a.name) throw std::invalid_argument("layer order differs: " + before[l].name + " vs " + a.name);
        if (before[l].size() != a.size()) throw std::invalid_argument(a.name + ": weight count differs between files");
        const auto n = std::min<Eigen::Index>(a.grads.rows(), static_cast<Eigen::Index>(num_grads));
        const double q = loss_increase(before[l].weights, a.weights, a.grads.topRows(n), damp);
        total += q;
        std::vector<std::uint8_t> mask = a.mask;
        if (mask.empty()) {
            mask.resize(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) mask[i] = a.weights(static_cast<Eigen::Index>(i)) != 0.0;
        }
        std::size_t z = 0;
        for (auto m : mask) z += m ? 0 : 1;
        zeros += z;
        count += mask.size();
        out << a.name << "\tquadratic\t" << g9(q) << "\tsparsity\t" << fmt("%.6f", static_cast<double>(z) / static_cast<double>(mask.size()));
        if (pattern) {
            const auto v = count_nm_violations(mask, a.prunable, *pattern);
            violations += v;
            out << "\tnm_violations\t" << v;
        }
        out << '\n';
    }
    out << "total\tquadratic\t" << g9(total) << "\tsparsity\t" << fmt("%.6f", static_cast<double>(zeros) / static_cast<double>(count));
    if (pattern) out << "\tnm_violations\t" << violations;
    out << '\n';
    if (violations) throw ComplianceError(std::to_string(violations) + " group(s) violate the " + nm + " pattern");
    return kOk;
}

struct ToyRun {
    TrainResult trained;
    RunReport report;
};

inline void write_toy_header(const ToyFlags& t, const ToySpec& spec, const TrainResult& trained, std::ostream& out) {
    out << "# toy seed=" << spec.seed << " dims=" << t.dims << " samples=" << trained.model.num_samples()
        << " train_steps=" << t.steps << " train_loss=" << g9(trained.loss) << " grad_norm=" << g9(trained.grad_norm) << '\n';
}

inline RunReport toy_run(const PrunerFlags& f, const ToyFlags& t, bool gradual, std::ostream& out, ToyModel** model_out,
                         std::unique_ptr<ToyModel>& holder) {
    const auto spec = t.toy_spec();
    const auto pruner = f.spec();
    const double lr = t.train_lr.value_or(suggested_lr(spec));
    if (!(lr > 0.0)) throw UsageError("--train-lr must be positive");
    auto trained = toy_train(spec, t.steps, lr);
    write_toy_header(t, spec, trained, out);
    holder = std::make_unique<ToyModel>(trained.model);
    *model_out = holder.get();
    PipelineOptions opt;
    opt.num_grads = f.num_grads;
    opt.extra_recovery_ratio = t.extra_recovery;
    if (t.extra_recovery < 0) throw UsageError("--extra-recovery must be non-negative");
    if (gradual) {
        if (pruner.nm) throw UsageError("--nm cannot be combined with --targets");
        SweepPlan plan;
        try {
            plan = plan_sweep(t.target_list(), t.interval);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return run_gradual(*holder, pruner, plan, t.schedule(plan.total_steps()), opt);
    }
    if (!f.sparsity && f.nm.empty()) throw UsageError("toy needs --sparsity, --nm or --targets");
    if (t.interval < 1) throw UsageError("--interval must be >= 1");
    return run_oneshot_finetune(*holder, pruner, f.sparsity.value_or(0.0), t.interval, t.schedule(t.interval), opt);
}

inline void emit_report(const RunReport& r, const ToyFlags& t, std::ostream& out) {
    write_report(r, out);
    if (!t.csv.empty()) {
        std::ofstream csv(t.csv);
        if (!csv) throw std::runtime_error("cannot write CSV to '" + t.csv + "'");
        write_report_csv(r, csv);
    }
}

inline std::string checkpoint_path(const std::string& prefix, double sparsity) { return prefix + "." + fmt("%g", sparsity) + ".ovpt"; }

/// Random correlated instance for the hidden oracle command.
inline int cmd_oracle(std::uint64_t seed, std::size_t dim, std::size_t samples, std::size_t k, double damp, std::ostream& out) {
    if (dim < 1 || dim > kOracleMaxDim) throw UsageError("--dim must be in [1, " + std::to_string(kOracleMaxDim) + "]");
    if (k > dim) throw UsageError("--k must not exceed --dim");
    if (samples < 1) throw UsageError("--samples must be >= 1");
    if (!(damp > 0.0)) throw UsageError("--damp must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd g(static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(dim));
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng) + (j ? 0.7 * g(i, j - 1) : 0.0);
    Eigen::VectorXd w(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = normal(rng);

    FisherConfig cfg;
    cfg.block_size = dim;
    cfg.dampening = damp;
    const auto inv = build_fisher_inverse(g, cfg);
    const Eigen::MatrixXd fisher = damp * Eigen::MatrixXd::Identity(w.size(), w.size()) +
                                   g.transpose() * g / static_cast<double>(samples);
    const auto subset = exhaustive_best_subset(w, fisher, k);
    const auto regression = sparse_regression_min(g, w, k, damp);
    const auto greedy = solve_global(w, inv, k);
    auto list = [](const std::vector<std::size_t>& v) {
        std::string s;
        for (auto i : v) s += (s.empty() ? "" : ",") + std::to_string(i);
        return s.empty() ? std::string("-") : s;
    };
    std::vector<std::size_t> greedy_q;
    for (const auto& rec : greedy.selected) greedy_q.push_back(rec.global_index);
    std::sort(greedy_q.begin(), greedy_q.end());
    out << "subset\t" << list(subset.zeros) << "\t" << g9(subset.value) << '\n';
    out << "regression\t" << list(regression.zeros) << "\t" << g9(regression.error) << '\n';
    out << "greedy\t" << list(greedy_q) << "\t" << g9(greedy.predicted_loss_increase) << '\n';
    const bool agree = subset.zeros == regression.zeros;
    out << "agree\t" << (agree ? "yes" : "no") << '\n';
    if (!agree) throw ComplianceError("subset and regression optima differ");
    return kOk;
}

/// Bundled fixtures: "toy" (trained MLP with gradients) and "correlated"
/// (paired coordinates with strongly correlated gradients and opposite-sign weights).
inline int cmd_fixture(const std::string& kind, const std::string& path, std::ostream& out) {
    TensorContainer c;
    if (kind == "toy") {
        ToySpec spec;
        c = toy_train(spec, 1000, suggested_lr(spec)).model.to_container(ToyModel(spec).num_samples());
    } else if (kind == "correlated") {
        const Eigen::Index d = 64, n = 256;
        std::mt19937_64 rng(2024);
        std::normal_distribution<double> normal;
        Eigen::MatrixXd g(n, d);
        Eigen::VectorXd w(d);
        for (Eigen::Index p = 0; p < d; p += 2) {
            const double scale = 0.5 + 0.02 * static_cast<double>(p);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double shared = normal(rng);
                g(i, p) = scale * (shared + 0.3 * normal(rng));
                g(i, p + 1) = scale * (shared + 0.3 * normal(rng));
            }
            const double mag = 0.5 + std::abs(normal(rng));
            w(p) = mag;
            w(p + 1) = -mag * (0.8 + 0.4 * std::uniform_real_distribution<double>(0, 1)(rng));
        }
        c.insert(weight_key("0"), Tensor::f64({8, 8}, std::vector<double>(w.data(), w.data() + d)));
        c.insert(grads_key("0"), GradientSet{"0", g}.to_tensor());
    } else {
        throw UsageError("--kind must be toy or correlated");
    }
    write_container(path, c);
    out << "wrote " << path << '\n';
    return kOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Second-order weight pruning with block empirical-Fisher inverses"};
    app.name("ovit");
    app.require_subcommand(1);

    PrunerFlags prune_f, sweep_f, toy_f;
    ToyFlags sweep_t, toy_t;
    std::string weights_path, grads_path, out_path, sweep_out;
    std::string before_path, after_path, eval_grads, eval_nm;
    double eval_damp = 1e-8;
    std::size_t eval_num_grads = 4096;

    auto* prune = app.add_subcommand("prune", "Prune a weights container");
    prune->add_option("--weights", weights_path, "OVPT file with layer.<id>.weight tensors")->required();
    prune->add_option("--grads", grads_path, "OVPT file with layer.<id>.grads [N, d] (not needed for gm)");
    prune->add_option("--out", out_path, "Write the pruned container (weights + masks) here");
    prune_f.add_to(*prune);

    auto* sweep = app.add_subcommand("sweep", "Gradual sparsity sweep on the toy model, one checkpoint per target");
    sweep->add_option("--out", sweep_out, "Checkpoint prefix; files are <out>.<sparsity>.ovpt")->required();
    sweep_f.add_to(*sweep, false);
    sweep_t.add_to(*sweep);

    auto* eval = app.add_subcommand("eval", "Quadratic loss change between two weight containers");
    eval->add_option("--weights-before", before_path, "Dense reference weights")->required();
    eval->add_option("--weights-after", after_path, "Pruned weights (masks read if present)")->required();
    eval->add_option("--grads", eval_grads, "Per-sample gradients at the reference weights")->required();
    eval->add_option("--damp", eval_damp, "Dampening lambda")->capture_default_str();
    eval->add_option("--num-grads", eval_num_grads, "Maximum gradient samples per layer")->capture_default_str();
    eval->add_option("--nm", eval_nm, "Check N:M compliance; violations exit with status 1");

    auto* toy = app.add_subcommand("toy", "Train, prune and recover the built-in toy model");
    toy_f.add_to(*toy);
    toy_t.add_to(*toy);

    std::uint64_t oracle_seed = 1;
    std::size_t oracle_dim = 8, oracle_samples = 16, oracle_k = 2;
    double oracle_damp = 1e-2;
    auto* oracle = app.add_subcommand("oracle", "Brute-force subset and sparse-regression optima on a random instance");
    oracle->group("");
    oracle->add_option("--seed", oracle_seed);
    oracle->add_option("--dim", oracle_dim);
    oracle->add_option("--samples", oracle_samples);
    oracle->add_option("--k", oracle_k);
    oracle->add_option("--damp", oracle_damp);

    std::string fixture_kind, fixture_out;
    auto* fixture = app.add_subcommand("fixture", "Write a bundled fixture");
    fixture->group("");
    fixture->add_option("--kind", fixture_kind)->required();
    fixture->add_option("--out", fixture_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*prune) return cmd_prune(prune_f, weights_path, grads_path, out_path, out);
        if (*eval) return cmd_eval(before_path, after_path, eval_grads, eval_damp, eval_num_grads, eval_nm, out);
        if (*toy) {
            toy_t.apply_config(*toy);
            std::unique_ptr<ToyModel> holder;
            ToyModel* model = nullptr;
            const auto report = toy_run(toy_f, toy_t, !toy_t.targets.empty(), out, &model, holder);
            emit_report(report, toy_t, out);
            return kOk;
        }
        if (*sweep) {
            sweep_t.apply_config(*sweep);
            if (sweep_t.targets.empty()) throw UsageError("sweep needs --targets (or sweep.targets in --config)");
            std::unique_ptr<ToyModel> holder;
            ToyModel* model = nullptr;
            const auto report = toy_run(sweep_f, sweep_t, true, out, &model, holder);
            emit_report(report, sweep_t, out);
            for (const auto& cp : report.checkpoints) {
                const auto path = checkpoint_path(sweep_out, cp.sparsity);
                write_container(path, cp.container);
                out << "checkpoint\t" << path << '\n';
            }
            return kOk;
        }
        if (*oracle) return cmd_oracle(oracle_seed, oracle_dim, oracle_samples, oracle_k, oracle_damp, out);
        if (*fixture) return cmd_fixture(fixture_kind, fixture_out, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ComplianceError& e) {
        err << "compliance: " << e.what() << '\n';
        return kCompliance;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kUsage;
}

}  // namespace ovit::cli
