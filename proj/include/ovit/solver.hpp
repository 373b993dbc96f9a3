#pragma once

// Correlation-aware greedy OBS solver.
//
// Every Fisher block is exhausted independently: the live weight with the
// smallest single-weight saliency is removed, the rest of the block is
// compensated, the block inverse is updated, and the running error becomes
// that weight's global score. Scores from all blocks are then merged and the
// k smallest are pruned. Running errors are non-decreasing inside a block, so
// the weights selected from a block always form a prefix of its elimination
// order and the saved state at that prefix length is the block's result.
//
// Cost: O(B^3) per block, O(d B^2) total; saved states take O(d B) space.

#include "ovit/fisher.hpp"
#include "ovit/obs.hpp"
#include "ovit/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ovit {

struct BlockTrace {
    std::size_t block_id = 0;
    std::vector<std::size_t> order;   // local indices in elimination order
    std::vector<double> cumulative;   // running error after each elimination
    Eigen::VectorXd initial;
    Eigen::MatrixXd states;           // column t: block weights after elimination t+1
    std::size_t clamps = 0;           // eliminations that hit the curvature floor

    std::size_t steps() const { return order.size(); }

    /// Block weights after `t` eliminations (t = 0 is the input state).
    Eigen::VectorXd state(std::size_t t) const {
        if (t == 0) return initial;
        return states.col(static_cast<Eigen::Index>(t - 1));
    }
};

/// N:M restriction inside a block: local index i belongs to group i / group_size,
/// and a group stops accepting eliminations once it holds max_zeros of them.
struct GroupLimit {
    std::size_t group_size = 0;
    std::size_t max_zeros = 0;
};

namespace detail {
inline bool is_prunable(const std::vector<std::uint8_t>& prunable, std::size_t i) {
    return prunable.empty() || prunable[i] != 0;
}
}  // namespace detail

inline BlockTrace solve_block(const Eigen::VectorXd& w_block, Eigen::MatrixXd inv_block,
                              const std::vector<std::uint8_t>& prunable = {},
                              const std::optional<GroupLimit>& limit = std::nullopt) {
    const auto b = w_block.size();
    if (inv_block.rows() != b || inv_block.cols() != b)
        throw std::invalid_argument("solve_block: inverse block is " + std::to_string(inv_block.rows()) + "x" +
                                    std::to_string(inv_block.cols()) + ", weights have length " + std::to_string(b));
    if (!prunable.empty() && static_cast<Eigen::Index>(prunable.size()) != b)
        throw std::invalid_argument("solve_block: prunable mask length mismatch");
    if (limit && limit->group_size == 0) throw std::invalid_argument("solve_block: group size must be positive");

    BlockTrace trace;
    trace.initial = w_block;
    std::vector<char> candidate(static_cast<std::size_t>(b));
    std::size_t budget = 0;
    for (Eigen::Index i = 0; i < b; ++i) {
        candidate[i] = detail::is_prunable(prunable, static_cast<std::size_t>(i));
        budget += candidate[i] ? 1 : 0;
    }
    std::vector<std::size_t> group_zeros;
    if (limit) group_zeros.assign((static_cast<std::size_t>(b) + limit->group_size - 1) / limit->group_size, 0);

    trace.order.reserve(budget);
    trace.cumulative.reserve(budget);
    trace.states.resize(b, static_cast<Eigen::Index>(budget));

    Eigen::VectorXd w = w_block;
    double err = 0.0;
    for (std::size_t step = 0; step < budget; ++step) {
        Eigen::Index best = -1;
        double best_score = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < b; ++i) {
            if (!candidate[i]) continue;
            if (limit && group_zeros[static_cast<std::size_t>(i) / limit->group_size] >= limit->max_zeros) continue;
            const double rho = w(i) * w(i) / (2.0 * detail::clamped(inv_block(i, i)));
            if (best < 0 || rho < best_score) {
                best = i;
                best_score = rho;
            }
        }
        if (best < 0) break;  // every remaining candidate sits in a saturated group

        const double pivot = detail::clamped(inv_block(best, best));
        w.noalias() -= (w(best) / pivot) * inv_block.col(best);
        w(best) = 0.0;
        err += best_score;

        trace.order.push_back(static_cast<std::size_t>(best));
        trace.cumulative.push_back(err);
        trace.states.col(static_cast<Eigen::Index>(step)) = w;
        if (eliminate_index_inplace(inv_block, best, true)) ++trace.clamps;
        candidate[best] = 0;
        if (limit) ++group_zeros[static_cast<std::size_t>(best) / limit->group_size];
    }
    trace.states.conservativeResize(b, static_cast<Eigen::Index>(trace.order.size()));
    return trace;
}

/// One layer's pruning problem: weights, their Fisher inverse, and which
/// coordinates may be selected (empty = all).
struct LayerProblem {
    std::string name;
    Eigen::VectorXd weights;
    FisherBlockInverse inverse;
    std::vector<std::uint8_t> prunable;
};

struct LayerPrune {
    std::string name;
    std::vector<std::uint8_t> mask;  // 1 = kept
    Eigen::VectorXd weights;
    double predicted_loss_increase = 0.0;
    std::size_t zeros = 0;           // mask entries equal to 0

    double sparsity() const { return mask.empty() ? 0.0 : static_cast<double>(zeros) / static_cast<double>(mask.size()); }
};

struct PruneResult {
    std::vector<LayerPrune> layers;
    double predicted_loss_increase = 0.0;
    std::size_t clamp_warnings = 0;
    std::vector<SaliencyRecord> selected;  // pruned weights, in selection order

    std::map<std::string, double> per_layer_sparsity() const {
        std::map<std::string, double> out;
        for (const auto& l : layers) out[l.name] = l.sparsity();
        return out;
    }

    std::size_t total_zeros() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.zeros;
        return n;
    }

    const LayerPrune& layer(const std::string& name) const {
        for (const auto& l : layers)
            if (l.name == name) return l;
        throw std::out_of_range("no pruned layer named '" + name + "'");
    }
};

namespace detail {

struct BlockTask {
    std::size_t layer;
    std::size_t block;
    std::size_t global_offset;  // first coordinate of the block in the concatenated weight vector
};

inline std::vector<BlockTask> plan_tasks(std::span<const LayerProblem> layers) {
    std::vector<BlockTask> tasks;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& p = layers[l];
        if (static_cast<std::size_t>(p.weights.size()) != p.inverse.dim)
            throw std::invalid_argument(p.name + ": weight length " + std::to_string(p.weights.size()) +
                                        " does not match Fisher dimension " + std::to_string(p.inverse.dim));
        if (!p.prunable.empty() && p.prunable.size() != p.inverse.dim)
            throw std::invalid_argument(p.name + ": prunable mask length mismatch");
        for (std::size_t j = 0; j < p.inverse.num_blocks(); ++j)
            tasks.push_back({l, j, offset + p.inverse.block_offset(j)});
        offset += p.inverse.dim;
    }
    return tasks;
}

inline std::vector<std::uint8_t> block_slice(const std::vector<std::uint8_t>& mask, std::size_t offset, std::size_t len) {
    if (mask.empty()) return {};
    return {mask.begin() + static_cast<std::ptrdiff_t>(offset), mask.begin() + static_cast<std::ptrdiff_t>(offset + len)};
}

inline std::vector<BlockTrace> run_blocks(std::span<const LayerProblem> layers, const std::vector<BlockTask>& tasks,
                                          std::size_t threads, const std::optional<GroupLimit>& limit = std::nullopt) {
    std::vector<BlockTrace> traces(tasks.size());
    parallel_for(tasks.size(), threads, [&](std::size_t t) {
        const auto& task = tasks[t];
        const auto& p = layers[task.layer];
        const auto offset = p.inverse.block_offset(task.block);
        const auto len = p.inverse.block_length(task.block);
        traces[t] = solve_block(p.weights.segment(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(len)),
                                p.inverse.blocks[task.block], block_slice(p.prunable, offset, len), limit);
        traces[t].block_id = t;
    });
    return traces;
}

/// Loads block state prefix[t] for every task and assembles the per-layer result.
inline PruneResult assemble(std::span<const LayerProblem> layers, const std::vector<BlockTask>& tasks,
                            const std::vector<BlockTrace>& traces, const std::vector<std::size_t>& prefix) {
    PruneResult out;
    out.layers.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        out.layers[l].name = layers[l].name;
        out.layers[l].weights = layers[l].weights;
        out.layers[l].mask.assign(layers[l].inverse.dim, 1);
    }
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto& task = tasks[t];
        auto& lp = out.layers[task.layer];
        const auto offset = layers[task.layer].inverse.block_offset(task.block);
        const auto steps = prefix[t];
        const auto& tr = traces[t];
        lp.weights.segment(static_cast<Eigen::Index>(offset), tr.initial.size()) = tr.state(steps);
        for (std::size_t s = 0; s < steps; ++s) lp.mask[offset + tr.order[s]] = 0;
        lp.zeros += steps;
        if (steps > 0) lp.predicted_loss_increase += tr.cumulative[steps - 1];
        out.clamp_warnings += tr.clamps;
    }
    for (const auto& lp : out.layers) out.predicted_loss_increase += lp.predicted_loss_increase;
    return out;
}

}  // namespace detail

/// Prunes exactly k weights across all layers with a single global score pool.
///
/// Ordering is by (score, global index) between blocks and by (score,
/// elimination rank) inside a block, which keeps every block's selection a
/// prefix of its elimination order even when running errors tie.
inline PruneResult solve_global(std::span<const LayerProblem> layers, std::size_t k, std::size_t threads = 1) {
    const auto tasks = detail::plan_tasks(layers);
    std::size_t prunable = 0;
    for (const auto& p : layers)
        prunable += p.prunable.empty() ? p.inverse.dim
                                       : static_cast<std::size_t>(std::count(p.prunable.begin(), p.prunable.end(), 1));
    if (k > prunable)
        throw std::invalid_argument("solve_global: target of " + std::to_string(k) + " zeros exceeds the " +
                                    std::to_string(prunable) + " prunable weights");

    const auto traces = detail::run_blocks(layers, tasks, threads);

    std::vector<SaliencyRecord> records;
    records.reserve(prunable);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto& tr = traces[t];
        for (std::size_t s = 0; s < tr.steps(); ++s)
            records.push_back({tasks[t].global_offset + tr.order[s], tr.cumulative[s], t, s});
    }
    std::sort(records.begin(), records.end(), [](const SaliencyRecord& a, const SaliencyRecord& b) {
        if (a.score != b.score) return a.score < b.score;
        if (a.block_id != b.block_id) return a.block_id < b.block_id;
        return a.elim_rank < b.elim_rank;
    });
    records.resize(k);

    std::vector<std::size_t> prefix(tasks.size(), 0);
    for (const auto& r : records) {
        if (r.elim_rank != prefix[r.block_id])
            throw std::logic_error("solve_global: selection in block " + std::to_string(r.block_id) +
                                   " is not a prefix of its elimination order");
        ++prefix[r.block_id];
    }

    auto out = detail::assemble(layers, tasks, traces, prefix);
    out.selected = std::move(records);
    return out;
}

inline PruneResult solve_global(const Eigen::VectorXd& w, const FisherBlockInverse& inv, std::size_t k,
                                const std::vector<std::uint8_t>& prunable = {}, std::size_t threads = 1) {
    const LayerProblem p{"", w, inv, prunable};
    return solve_global(std::span<const LayerProblem>(&p, 1), k, threads);
}

/// N:M variant: within every run of m consecutive weights (row-major, per
/// layer) exactly m - n are pruned. Groups must be wholly prunable or wholly
/// frozen, and Fisher blocks must align with groups.
inline PruneResult solve_nm(std::span<const LayerProblem> layers, std::size_t n, std::size_t m, std::size_t threads = 1) {
    if (m == 0 || n >= m) throw std::invalid_argument("solve_nm: need 0 <= N < M");
    for (const auto& p : layers) {
        if (p.inverse.dim % m != 0)
            throw std::invalid_argument(p.name + ": layer size " + std::to_string(p.inverse.dim) +
                                        " is not divisible by M=" + std::to_string(m));
        if (p.inverse.config.block_size % m != 0)
            throw std::invalid_argument(p.name + ": Fisher block size " + std::to_string(p.inverse.config.block_size) +
                                        " is not a multiple of M=" + std::to_string(m));
        if (p.prunable.empty()) continue;
        for (std::size_t g = 0; g < p.inverse.dim; g += m) {
            const auto first = p.prunable[g];
            for (std::size_t i = g + 1; i < g + m; ++i)
                if (p.prunable[i] != first)
                    throw std::invalid_argument(p.name + ": N:M group at " + std::to_string(g) + " is partially prunable");
        }
    }
    const auto tasks = detail::plan_tasks(layers);
    const auto traces = detail::run_blocks(layers, tasks, threads, GroupLimit{m, m - n});

    std::vector<std::size_t> prefix(tasks.size());
    PruneResult out;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        prefix[t] = traces[t].steps();
        for (std::size_t s = 0; s < traces[t].steps(); ++s)
            out.selected.push_back({tasks[t].global_offset + traces[t].order[s], traces[t].cumulative[s], t, s});
    }
    auto assembled = detail::assemble(layers, tasks, traces, prefix);
    assembled.selected = std::move(out.selected);
    return assembled;
}

inline PruneResult solve_nm(const Eigen::VectorXd& w, const FisherBlockInverse& inv, std::size_t n, std::size_t m,
                            const std::vector<std::uint8_t>& prunable = {}, std::size_t threads = 1) {
    const LayerProblem p{"", w, inv, prunable};
    return solve_nm(std::span<const LayerProblem>(&p, 1), n, m, threads);
}

}  // namespace ovit
