#pragma once

// Pruner front-ends: Global Magnitude (gm), correlation-ignoring WoodFisher
// style OBS (wf) and the greedy correlation-aware solver (ovit), over a set of
// layers with prunability and existing masks.
//
// Only coordinates that are prunable and still alive take part in a prune:
// they are gathered into a compact problem, so frozen weights are never
// zeroed or compensated and already-pruned weights stay exactly zero.

#include "ovit/fisher.hpp"
#include "ovit/obs.hpp"
#include "ovit/solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ovit {

enum class Method { gm, wf, ovit };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::gm: return "gm";
        case Method::wf: return "wf";
        case Method::ovit: return "ovit";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "gm") return Method::gm;
    if (s == "wf") return Method::wf;
    if (s == "ovit") return Method::ovit;
    throw std::invalid_argument("unknown pruning method '" + s + "' (expected gm, wf or ovit)");
}

/// Tuned dampening per method: 1e-8 for ovit, 1e-6 for wf.
inline double default_dampening(Method m) { return m == Method::wf ? 1e-6 : 1e-8; }

struct NmPattern {
    std::size_t n = 2;
    std::size_t m = 4;

    double sparsity() const { return static_cast<double>(m - n) / static_cast<double>(m); }
};

inline NmPattern parse_nm(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("N:M pattern must look like 2:4, got '" + s + "'");
    try {
        std::size_t used = 0;
        NmPattern p;
        p.n = std::stoul(s.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("bad N");
        const auto rest = s.substr(colon + 1);
        p.m = std::stoul(rest, &used);
        if (used != rest.size()) throw std::invalid_argument("bad M");
        if (p.m == 0 || p.n >= p.m) throw std::invalid_argument("need N < M");
        return p;
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid N:M pattern '" + s + "'");
    }
}

struct PrunerSpec {
    Method method = Method::ovit;
    FisherConfig fisher;
    std::optional<NmPattern> nm;
    std::size_t recomputations = 1;
    bool per_layer = false;
    std::size_t threads = 1;

    static PrunerSpec for_method(Method m) {
        PrunerSpec s;
        s.method = m;
        s.fisher.dampening = default_dampening(m);
        return s;
    }
};

struct LayerState {
    std::string name;
    Eigen::VectorXd weights;
    Eigen::MatrixXd grads;                 // N x d; may be empty for gm
    std::vector<std::uint8_t> prunable;    // empty = all prunable
    std::vector<std::uint8_t> mask;        // current keep-mask; empty = all kept

    std::size_t size() const { return static_cast<std::size_t>(weights.size()); }
    bool is_prunable(std::size_t i) const { return prunable.empty() || prunable[i]; }
    bool is_alive(std::size_t i) const { return mask.empty() || mask[i]; }
};

namespace detail {

struct Compact {
    std::vector<std::size_t> active;  // layer coordinates that may still be pruned
    std::size_t pruned_already = 0;   // prunable coordinates already masked
};

inline Compact compact_layer(const LayerState& l) {
    if (!l.prunable.empty() && l.prunable.size() != l.size())
        throw std::invalid_argument(l.name + ": prunable mask length mismatch");
    if (!l.mask.empty() && l.mask.size() != l.size()) throw std::invalid_argument(l.name + ": mask length mismatch");
    Compact c;
    for (std::size_t i = 0; i < l.size(); ++i) {
        if (!l.is_prunable(i)) continue;
        if (l.is_alive(i)) c.active.push_back(i);
        else ++c.pruned_already;
    }
    return c;
}

inline Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<std::size_t>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) out(static_cast<Eigen::Index>(a)) = v(static_cast<Eigen::Index>(idx[a]));
    return out;
}

inline Eigen::MatrixXd gather_columns(const LayerState& l, const std::vector<std::size_t>& idx) {
    if (l.grads.rows() == 0) throw std::invalid_argument(l.name + ": gradients required by this pruner");
    if (static_cast<std::size_t>(l.grads.cols()) != l.size())
        throw std::invalid_argument(l.name + ": gradient width " + std::to_string(l.grads.cols()) +
                                    " does not match weight count " + std::to_string(l.size()));
    Eigen::MatrixXd out(l.grads.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a)
        out.col(static_cast<Eigen::Index>(a)) = l.grads.col(static_cast<Eigen::Index>(idx[a]));
    return out;
}

/// Result skeleton carrying the current weights and masks of every layer.
inline PruneResult start_result(std::span<const LayerState> layers) {
    PruneResult r;
    for (const auto& l : layers) {
        LayerPrune lp;
        lp.name = l.name;
        lp.weights = l.weights;
        lp.mask = l.mask.empty() ? std::vector<std::uint8_t>(l.size(), 1) : l.mask;
        for (std::size_t i = 0; i < l.size(); ++i)
            if (!lp.mask[i]) lp.weights(static_cast<Eigen::Index>(i)) = 0.0;
        r.layers.push_back(std::move(lp));
    }
    return r;
}

inline void finish_result(PruneResult& r) {
    r.predicted_loss_increase = 0.0;
    for (auto& lp : r.layers) {
        lp.zeros = static_cast<std::size_t>(std::count(lp.mask.begin(), lp.mask.end(), 0));
        r.predicted_loss_increase += lp.predicted_loss_increase;
    }
}

inline std::size_t new_zeros(std::size_t k, std::size_t already) {
    if (k < already)
        throw std::invalid_argument("target of " + std::to_string(k) + " zeros is below the " + std::to_string(already) +
                                    " weights already pruned");
    return k - already;
}

struct Candidate {
    std::size_t layer;
    std::size_t index;   // layer coordinate
    std::size_t global;  // concatenated coordinate, for tie-breaking
    double score;
};

inline void sort_candidates(std::vector<Candidate>& c) {
    std::sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.global < b.global;
    });
}

}  // namespace detail

/// Number of prunable weights across layers.
inline std::size_t prunable_count(std::span<const LayerState> layers) {
    std::size_t n = 0;
    for (const auto& l : layers)
        for (std::size_t i = 0; i < l.size(); ++i) n += l.is_prunable(i) ? 1 : 0;
    return n;
}

/// Zero count among prunable weights that realizes `sparsity`.
inline std::size_t target_zeros(std::span<const LayerState> layers, double sparsity) {
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw std::invalid_argument("sparsity must lie in [0, 1]");
    return static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(prunable_count(layers))));
}

/// Fills in gm's predicted increase as the exact quadratic of its (uncompensated) change, when gradients exist.
inline void attach_quadratic_prediction(std::span<const LayerState> layers, PruneResult& r, const PrunerSpec& spec) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& g = layers[l].grads;
        if (g.rows() == 0) continue;
        const auto n = std::min<Eigen::Index>(g.rows(), static_cast<Eigen::Index>(spec.fisher.num_grads));
        r.layers[l].predicted_loss_increase =
            loss_increase(layers[l].weights, r.layers[l].weights, g.topRows(n), spec.fisher.dampening);
    }
    detail::finish_result(r);
}

/// Global magnitude: zero the k prunable weights of smallest |w| (ties by index); no compensation.
inline PruneResult prune_gm(std::span<const LayerState> layers, std::size_t k, const PrunerSpec& spec = {}) {
    auto r = detail::start_result(layers);
    std::vector<detail::Candidate> pool;
    std::size_t already = 0, offset = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto c = detail::compact_layer(layers[l]);
        already += c.pruned_already;
        for (auto i : c.active) pool.push_back({l, i, offset + i, std::abs(layers[l].weights(static_cast<Eigen::Index>(i)))});
        offset += layers[l].size();
    }
    const auto fresh = detail::new_zeros(k, already);
    if (fresh > pool.size()) throw std::invalid_argument("prune_gm: target exceeds the prunable weight count");
    detail::sort_candidates(pool);
    for (std::size_t s = 0; s < fresh; ++s) {
        auto& lp = r.layers[pool[s].layer];
        lp.mask[pool[s].index] = 0;
        lp.weights(static_cast<Eigen::Index>(pool[s].index)) = 0.0;
        r.selected.push_back({pool[s].global, pool[s].score, 0, s});
    }
    attach_quadratic_prediction(layers, r, spec);
    return r;
}

/// Correlation-ignoring OBS: saliencies and compensations all come from the
/// initial inverse; compensations of the selected weights are summed, then
/// the selected coordinates are set to zero. The predicted increase is the
/// sum of the independent saliencies.
inline PruneResult prune_wf(std::span<const LayerState> layers, std::size_t k, const PrunerSpec& spec) {
    auto r = detail::start_result(layers);
    std::vector<detail::Compact> compacts;
    std::vector<FisherBlockInverse> inverses;
    std::vector<detail::Candidate> pool;
    std::size_t already = 0, offset = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        compacts.push_back(detail::compact_layer(layers[l]));
        const auto& c = compacts.back();
        already += c.pruned_already;
        if (c.active.empty()) {
            inverses.emplace_back();
        } else {
            inverses.push_back(build_fisher_inverse(GradientSet{layers[l].name, detail::gather_columns(layers[l], c.active)},
                                                    spec.fisher, spec.threads));
        }
        for (std::size_t a = 0; a < c.active.size(); ++a) {
            const double w = layers[l].weights(static_cast<Eigen::Index>(c.active[a]));
            const double diag = inverses[l].diagonal(a);
            if (!(diag > kCurvatureFloor)) ++r.clamp_warnings;
            pool.push_back({l, a, offset + c.active[a], w * w / (2.0 * detail::clamped(diag))});
        }
        offset += layers[l].size();
    }
    const auto fresh = detail::new_zeros(k, already);
    if (fresh > pool.size()) throw std::invalid_argument("prune_wf: target exceeds the prunable weight count");
    detail::sort_candidates(pool);
    pool.resize(fresh);

    std::vector<Eigen::VectorXd> deltas(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) deltas[l] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(compacts[l].active.size()));
    for (std::size_t s = 0; s < pool.size(); ++s) {
        const auto& cand = pool[s];
        const auto& inv = inverses[cand.layer];
        const auto [b, li] = inv.locate(cand.index);
        const auto& blk = inv.blocks[b];
        const auto lli = static_cast<Eigen::Index>(li);
        const double w = layers[cand.layer].weights(static_cast<Eigen::Index>(compacts[cand.layer].active[cand.index]));
        deltas[cand.layer].segment(static_cast<Eigen::Index>(inv.block_offset(b)), blk.rows()) -=
            (w / detail::clamped(blk(lli, lli))) * blk.col(lli);
        r.layers[cand.layer].predicted_loss_increase += cand.score;
        r.selected.push_back({cand.global, cand.score, b, s});
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& active = compacts[l].active;
        for (std::size_t a = 0; a < active.size(); ++a)
            r.layers[l].weights(static_cast<Eigen::Index>(active[a])) += deltas[l](static_cast<Eigen::Index>(a));
    }
    for (const auto& cand : pool) {
        const auto i = compacts[cand.layer].active[cand.index];
        r.layers[cand.layer].mask[i] = 0;
        r.layers[cand.layer].weights(static_cast<Eigen::Index>(i)) = 0.0;
    }
    detail::finish_result(r);
    return r;
}

namespace detail {

inline std::vector<LayerProblem> compact_problems(std::span<const LayerState> layers, const PrunerSpec& spec,
                                                  std::vector<Compact>& compacts) {
    std::vector<LayerProblem> problems;
    for (const auto& l : layers) {
        compacts.push_back(compact_layer(l));
        const auto& c = compacts.back();
        LayerProblem p;
        p.name = l.name;
        p.weights = gather(l.weights, c.active);
        if (c.active.empty()) {
            p.inverse.config = spec.fisher;
        } else {
            p.inverse = build_fisher_inverse(GradientSet{l.name, gather_columns(l, c.active)}, spec.fisher, spec.threads);
        }
        problems.push_back(std::move(p));
    }
    return problems;
}

inline PruneResult scatter(std::span<const LayerState> layers, const std::vector<Compact>& compacts,
                           const PruneResult& solved) {
    auto r = start_result(layers);
    std::vector<std::size_t> layer_offset, compact_offset;
    std::size_t lo = 0, co = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layer_offset.push_back(lo);
        compact_offset.push_back(co);
        lo += layers[l].size();
        co += compacts[l].active.size();
        const auto& active = compacts[l].active;
        const auto& s = solved.layers[l];
        for (std::size_t a = 0; a < active.size(); ++a) {
            r.layers[l].weights(static_cast<Eigen::Index>(active[a])) = s.weights(static_cast<Eigen::Index>(a));
            r.layers[l].mask[active[a]] = s.mask[a];
        }
        r.layers[l].predicted_loss_increase = s.predicted_loss_increase;
    }
    r.clamp_warnings = solved.clamp_warnings;
    for (auto rec : solved.selected) {
        const auto l = static_cast<std::size_t>(
            std::upper_bound(compact_offset.begin(), compact_offset.end(), rec.global_index) - compact_offset.begin() - 1);
        rec.global_index = layer_offset[l] + compacts[l].active[rec.global_index - compact_offset[l]];
        r.selected.push_back(rec);
    }
    finish_result(r);
    return r;
}

}  // namespace detail

/// Builds per-layer Fisher inverses over the live prunable coordinates and delegates to solve_global.
inline PruneResult prune_ovit(std::span<const LayerState> layers, std::size_t k, const PrunerSpec& spec) {
    std::vector<detail::Compact> compacts;
    const auto problems = detail::compact_problems(layers, spec, compacts);
    std::size_t already = 0;
    for (const auto& c : compacts) already += c.pruned_already;
    const auto solved = solve_global(problems, detail::new_zeros(k, already), spec.threads);
    return detail::scatter(layers, compacts, solved);
}

namespace detail {

/// N:M needs whole groups: non-prunable groups are dropped, already-pruned weights are rejected.
inline void check_nm_layers(std::span<const LayerState> layers, const NmPattern& p) {
    for (const auto& l : layers) {
        if (l.size() % p.m != 0)
            throw std::invalid_argument(l.name + ": layer size " + std::to_string(l.size()) +
                                        " is not divisible by M=" + std::to_string(p.m));
        for (std::size_t g = 0; g < l.size(); g += p.m)
            for (std::size_t i = g; i < g + p.m; ++i) {
                if (l.is_prunable(i) != l.is_prunable(g))
                    throw std::invalid_argument(l.name + ": N:M group at " + std::to_string(g) + " is partially prunable");
                if (l.is_prunable(i) && !l.is_alive(i))
                    throw std::invalid_argument(l.name + ": N:M pruning requires a dense starting mask");
            }
    }
}

}  // namespace detail

/// N:M pruning with any method. gm keeps the N largest magnitudes per group,
/// wf drops the M-N smallest independent saliencies per group with summed
/// compensation, ovit runs the constrained greedy solver.
inline PruneResult prune_nm(std::span<const LayerState> layers, const NmPattern& p, const PrunerSpec& spec) {
    detail::check_nm_layers(layers, p);
    if (spec.method == Method::ovit) {
        std::vector<detail::Compact> compacts;
        const auto problems = detail::compact_problems(layers, spec, compacts);
        return detail::scatter(layers, compacts, solve_nm(problems, p.n, p.m, spec.threads));
    }

    // gm / wf: per-group selection over independent scores.
    auto r = detail::start_result(layers);
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const auto c = detail::compact_layer(layer);
        Eigen::VectorXd scores(static_cast<Eigen::Index>(c.active.size()));
        FisherBlockInverse inv;
        if (spec.method == Method::wf && !c.active.empty())
            inv = build_fisher_inverse(GradientSet{layer.name, detail::gather_columns(layer, c.active)}, spec.fisher, spec.threads);
        for (std::size_t a = 0; a < c.active.size(); ++a) {
            const double w = layer.weights(static_cast<Eigen::Index>(c.active[a]));
            scores(static_cast<Eigen::Index>(a)) =
                spec.method == Method::gm ? std::abs(w) : w * w / (2.0 * detail::clamped(inv.diagonal(a)));
        }
        Eigen::VectorXd delta = Eigen::VectorXd::Zero(scores.size());
        std::vector<std::size_t> chosen;
        for (std::size_t g = 0; g < c.active.size(); g += p.m) {
            std::vector<std::size_t> order(p.m);
            std::iota(order.begin(), order.end(), g);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return scores(static_cast<Eigen::Index>(a)) < scores(static_cast<Eigen::Index>(b));
            });
            chosen.insert(chosen.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(p.m - p.n));
        }
        std::sort(chosen.begin(), chosen.end());
        for (auto a : chosen) {
            if (spec.method == Method::wf) {
                const auto [b, li] = inv.locate(a);
                const auto& blk = inv.blocks[b];
                const auto lli = static_cast<Eigen::Index>(li);
                const double w = layer.weights(static_cast<Eigen::Index>(c.active[a]));
                delta.segment(static_cast<Eigen::Index>(inv.block_offset(b)), blk.rows()) -=
                    (w / detail::clamped(blk(lli, lli))) * blk.col(lli);
                r.layers[l].predicted_loss_increase += scores(static_cast<Eigen::Index>(a));
            }
            r.selected.push_back({offset + c.active[a], scores(static_cast<Eigen::Index>(a)), 0, r.selected.size()});
        }
        for (std::size_t a = 0; a < c.active.size(); ++a)
            r.layers[l].weights(static_cast<Eigen::Index>(c.active[a])) += delta(static_cast<Eigen::Index>(a));
        for (auto a : chosen) {
            r.layers[l].mask[c.active[a]] = 0;
            r.layers[l].weights(static_cast<Eigen::Index>(c.active[a])) = 0.0;
        }
        offset += layer.size();
    }
    if (spec.method == Method::gm) attach_quadratic_prediction(layers, r, spec);
    detail::finish_result(r);
    return r;
}

/// One pruning event to `sparsity` (fraction of prunable weights), or to the
/// N:M pattern when spec.nm is set. Honors spec.per_layer.
inline PruneResult prune(std::span<const LayerState> layers, double sparsity, const PrunerSpec& spec) {
    if (spec.nm) return prune_nm(layers, *spec.nm, spec);
    auto run = [&](std::span<const LayerState> part, std::size_t k) {
        switch (spec.method) {
            case Method::gm: return prune_gm(part, k, spec);
            case Method::wf: return prune_wf(part, k, spec);
            case Method::ovit: return prune_ovit(part, k, spec);
        }
        throw std::logic_error("unknown method");
    };
    if (!spec.per_layer) return run(layers, target_zeros(layers, sparsity));

    PruneResult merged;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto part = layers.subspan(l, 1);
        auto r = run(part, target_zeros(part, sparsity));
        merged.layers.push_back(std::move(r.layers.front()));
        merged.clamp_warnings += r.clamp_warnings;
        for (auto rec : r.selected) {
            rec.global_index += offset;
            merged.selected.push_back(rec);
        }
        offset += layers[l].size();
    }
    detail::finish_result(merged);
    return merged;
}

/// Copies weights and masks from a prune result back into the layers.
inline void apply_result(std::vector<LayerState>& layers, const PruneResult& r) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weights = r.layers[l].weights;
        layers[l].mask = r.layers[l].mask;
    }
}

/// Fresh per-layer gradients (N x d each) at the given layer weights.
using GradientProvider = std::function<std::vector<Eigen::MatrixXd>(const std::vector<LayerState>&)>;

/// Intermediate sparsity of sub-step t out of n: 1 - (1 - s)^(t / n).
/// Sub-step targets shrink density geometrically from `start` to `target`;
/// with start = 0 this is 1 - (1 - s)^(t/n).
inline double recompute_sparsity(double target, std::size_t t, std::size_t n, double start = 0.0) {
    if (t >= n || start >= target) return target;
    const double ratio = (1.0 - target) / (1.0 - start);
    return 1.0 - (1.0 - start) * std::pow(ratio, static_cast<double>(t) / static_cast<double>(n));
}

/// Sparsity already present: global over prunable weights, or the smallest
/// per-layer value when layers are pruned separately.
inline double current_sparsity(std::span<const LayerState> layers, bool per_layer) {
    std::size_t zeros = 0, total = 0;
    double lowest = 1.0;
    for (const auto& l : layers) {
        std::size_t z = 0, p = 0;
        for (std::size_t i = 0; i < l.size(); ++i) {
            if (!l.is_prunable(i)) continue;
            ++p;
            z += l.is_alive(i) ? 0 : 1;
        }
        if (p) lowest = std::min(lowest, static_cast<double>(z) / static_cast<double>(p));
        zeros += z;
        total += p;
    }
    if (total == 0) return 0.0;
    return per_layer ? lowest : static_cast<double>(zeros) / static_cast<double>(total);
}

/// Prunes to `sparsity` in `steps` sub-steps, re-gathering gradients (and so
/// rebuilding the Fisher inverse) before each one. Masks only ever lose ones.
inline PruneResult prune_with_recompute(std::vector<LayerState> layers, const GradientProvider& provider, double sparsity,
                                        std::size_t steps, const PrunerSpec& spec) {
    if (steps < 1) throw std::invalid_argument("recomputations must be >= 1");
    if (spec.nm && steps > 1) throw std::invalid_argument("recomputation is not supported with N:M patterns");
    PruneResult last;
    double predicted = 0.0;
    std::size_t clamps = 0;
    const double start = current_sparsity(layers, spec.per_layer);
    for (std::size_t t = 1; t <= steps; ++t) {
        if (provider) {
            auto grads = provider(layers);
            if (grads.size() != layers.size()) throw std::runtime_error("gradient provider returned the wrong layer count");
            for (std::size_t l = 0; l < layers.size(); ++l) layers[l].grads = std::move(grads[l]);
        }
        last = prune(layers, recompute_sparsity(sparsity, t, steps, start), spec);
        predicted += last.predicted_loss_increase;
        clamps += last.clamp_warnings;
        apply_result(layers, last);
    }
    last.predicted_loss_increase = predicted;
    last.clamp_warnings = clamps;
    return last;
}

/// Groups of M consecutive weights whose kept count differs from N. Groups
/// that are wholly non-prunable are skipped.
inline std::size_t count_nm_violations(const std::vector<std::uint8_t>& mask, const std::vector<std::uint8_t>& prunable,
                                       const NmPattern& p) {
    std::size_t bad = 0;
    for (std::size_t g = 0; g + p.m <= mask.size(); g += p.m) {
        bool frozen = !prunable.empty();
        std::size_t kept = 0;
        for (std::size_t i = g; i < g + p.m; ++i) {
            kept += mask[i] ? 1 : 0;
            if (!prunable.empty() && prunable[i]) frozen = false;
        }
        if (!frozen && kept != p.n) ++bad;
    }
    if (mask.size() % p.m != 0) ++bad;
    return bad;
}

}  // namespace ovit
