#pragma once

// OBS saliencies and compensating updates over a block-diagonal Fisher inverse,
// plus the exact quadratic loss model evaluated from gradient samples.

#include "ovit/fisher.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ovit {

struct SaliencyRecord {
    std::size_t global_index = 0;
    double score = 0.0;
    std::size_t block_id = 0;
    std::size_t elim_rank = 0;
};

namespace detail {

inline void check_weights(const Eigen::VectorXd& w, const FisherBlockInverse& inv) {
    if (static_cast<std::size_t>(w.size()) != inv.dim)
        throw std::invalid_argument("obs: weight vector length " + std::to_string(w.size()) +
                                    " does not match Fisher dimension " + std::to_string(inv.dim));
}

inline double clamped(double diag) { return std::max(diag, kCurvatureFloor); }

struct GroupSystem {
    std::size_t block = 0;
    std::vector<Eigen::Index> local;
    Eigen::VectorXd rhs;  // ([F^-1]_QQ)^-1 w_Q
    Eigen::VectorXd w_q;
};

inline GroupSystem solve_group_system(const Eigen::VectorXd& w, const FisherBlockInverse& inv,
                                      const std::vector<std::size_t>& q) {
    check_weights(w, inv);
    if (q.empty()) throw std::invalid_argument("obs: empty index group");
    GroupSystem sys;
    sys.block = inv.locate(q.front()).block;
    for (auto i : q) {
        const auto loc = inv.locate(i);
        if (loc.block != sys.block) throw std::invalid_argument("obs: group spans more than one Fisher block");
        sys.local.push_back(static_cast<Eigen::Index>(loc.local));
    }
    auto sorted = sys.local;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("obs: duplicate index in group");

    const auto& blk = inv.blocks[sys.block];
    const auto n = static_cast<Eigen::Index>(q.size());
    Eigen::MatrixXd sub(n, n);
    sys.w_q.resize(n);
    for (Eigen::Index a = 0; a < n; ++a) {
        sys.w_q(a) = w(static_cast<Eigen::Index>(q[a]));
        for (Eigen::Index b = 0; b < n; ++b) sub(a, b) = blk(sys.local[a], sys.local[b]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sub);
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub, Eigen::EigenvaluesOnly);
        const auto ev = es.eigenvalues();
        std::ostringstream msg;
        msg << "obs: [F^-1]_[Q,Q] is not positive definite (eigenvalue range [" << ev.minCoeff() << ", "
            << ev.maxCoeff() << "], condition estimate " << std::abs(ev.maxCoeff() / ev.minCoeff()) << ")";
        throw NumericalError(msg.str());
    }
    sys.rhs = llt.solve(sys.w_q);
    return sys;
}

}  // namespace detail

/// rho_i = w_i^2 / (2 [F^-1]_ii), with the diagonal clamped to the curvature floor.
inline double saliency_single(const Eigen::VectorXd& w, const FisherBlockInverse& inv, std::size_t i) {
    detail::check_weights(w, inv);
    const double wi = w(static_cast<Eigen::Index>(i));
    return wi * wi / (2.0 * detail::clamped(inv.diagonal(i)));
}

/// delta = -(w_i / [F^-1]_ii) F^-1 e_i. Nonzero only inside the block of i; delta_i = -w_i exactly.
inline Eigen::VectorXd update_single(const Eigen::VectorXd& w, const FisherBlockInverse& inv, std::size_t i) {
    detail::check_weights(w, inv);
    const auto [b, l] = inv.locate(i);
    const auto li = static_cast<Eigen::Index>(l);
    const auto& blk = inv.blocks[b];
    const double wi = w(static_cast<Eigen::Index>(i));
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(w.size());
    delta.segment(static_cast<Eigen::Index>(inv.block_offset(b)), blk.rows()) =
        -(wi / detail::clamped(blk(li, li))) * blk.col(li);
    delta(static_cast<Eigen::Index>(i)) = -wi;
    return delta;
}

/// rho_Q = 1/2 w_Q^T ([F^-1]_[Q,Q])^-1 w_Q for Q inside one block.
inline double saliency_group(const Eigen::VectorXd& w, const FisherBlockInverse& inv,
                             const std::vector<std::size_t>& q) {
    const auto sys = detail::solve_group_system(w, inv, q);
    return 0.5 * sys.w_q.dot(sys.rhs);
}

/// delta_Q = -F^-1 E_Q^T ([F^-1]_[Q,Q])^-1 w_Q; coordinates in Q land exactly on zero.
inline Eigen::VectorXd update_group(const Eigen::VectorXd& w, const FisherBlockInverse& inv,
                                    const std::vector<std::size_t>& q) {
    const auto sys = detail::solve_group_system(w, inv, q);
    const auto& blk = inv.blocks[sys.block];
    Eigen::VectorXd local = Eigen::VectorXd::Zero(blk.rows());
    for (std::size_t a = 0; a < q.size(); ++a) local.noalias() -= blk.col(sys.local[a]) * sys.rhs(static_cast<Eigen::Index>(a));
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(w.size());
    delta.segment(static_cast<Eigen::Index>(inv.block_offset(sys.block)), blk.rows()) = local;
    for (auto i : q) delta(static_cast<Eigen::Index>(i)) = -w(static_cast<Eigen::Index>(i));
    return delta;
}

namespace detail {
inline std::map<std::size_t, std::vector<std::size_t>> split_by_block(const FisherBlockInverse& inv,
                                                                      const std::vector<std::size_t>& q) {
    std::map<std::size_t, std::vector<std::size_t>> parts;
    for (auto i : q) parts[inv.locate(i).block].push_back(i);
    return parts;
}
}  // namespace detail

// Cross-block groups factor over blocks under the block-diagonal model.

inline double saliency_group_any(const Eigen::VectorXd& w, const FisherBlockInverse& inv,
                                 const std::vector<std::size_t>& q) {
    double total = 0.0;
    for (const auto& [b, part] : detail::split_by_block(inv, q)) total += saliency_group(w, inv, part);
    return total;
}

inline Eigen::VectorXd update_group_any(const Eigen::VectorXd& w, const FisherBlockInverse& inv,
                                        const std::vector<std::size_t>& q) {
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(w.size());
    for (const auto& [b, part] : detail::split_by_block(inv, q)) delta += update_group(w, inv, part);
    return delta;
}

/// 1/2 dw^T F dw with F = lambda I + (1/N) sum_i g_i g_i^T, evaluated from the
/// gradient rows without forming F. dw = after - before.
inline double loss_increase(const Eigen::VectorXd& before, const Eigen::VectorXd& after,
                            const Eigen::MatrixXd& grads, double dampening) {
    if (before.size() != after.size() || grads.cols() != before.size())
        throw std::invalid_argument("loss_increase: shape mismatch (weights " + std::to_string(before.size()) + "/" +
                                    std::to_string(after.size()) + ", gradients " + std::to_string(grads.rows()) +
                                    "x" + std::to_string(grads.cols()) + ")");
    if (grads.rows() == 0) throw std::invalid_argument("loss_increase: no gradient samples");
    const Eigen::VectorXd dw = after - before;
    const double projected = (grads * dw).squaredNorm();
    return 0.5 * dampening * dw.squaredNorm() + projected / (2.0 * static_cast<double>(grads.rows()));
}

inline double loss_increase(const Eigen::VectorXd& before, const Eigen::VectorXd& after, const GradientSet& grads,
                            double dampening) {
    return loss_increase(before, after, grads.samples, dampening);
}

}  // namespace ovit
