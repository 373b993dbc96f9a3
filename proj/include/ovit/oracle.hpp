#pragma once

// Brute-force references for tiny problems.
//
// exhaustive_best_subset scores every |Q| = k through the group-OBS metric
// 1/2 w_Q^T ([F^-1]_[Q,Q])^-1 w_Q. sparse_regression_min independently
// solves, for every k-zero support, the ridge least-squares refit of the
// gradient responses g_i^T w*; both routes use the same Fisher
// F = lambda I + (1/m) G^T G, so their minimizers must coincide.

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ovit {

inline constexpr std::size_t kOracleMaxDim = 14;

struct SubsetOptimum {
    std::vector<std::size_t> zeros;  // Q, ascending
    double value = 0.0;
};

struct RegressionOptimum {
    std::vector<std::size_t> zeros;
    std::vector<std::size_t> support;
    Eigen::VectorXd weights;
    double error = 0.0;
};

namespace detail {

inline void check_oracle_size(std::size_t d, std::size_t k) {
    if (d > kOracleMaxDim)
        throw std::invalid_argument("oracle: dimension " + std::to_string(d) + " exceeds the enumeration limit of " +
                                    std::to_string(kOracleMaxDim));
    if (k > d) throw std::invalid_argument("oracle: k exceeds dimension");
}

/// Calls fn(combo) for every k-subset of [0, d) in lexicographic order.
template <typename Fn>
void for_each_subset(std::size_t d, std::size_t k, Fn&& fn) {
    std::vector<std::size_t> c(k);
    std::iota(c.begin(), c.end(), 0);
    while (true) {
        fn(static_cast<const std::vector<std::size_t>&>(c));
        std::size_t i = k;
        while (i > 0 && c[i - 1] == d - k + (i - 1)) --i;
        if (i == 0) return;
        ++c[i - 1];
        for (std::size_t j = i; j < k; ++j) c[j] = c[j - 1] + 1;
    }
}

}  // namespace detail

inline SubsetOptimum exhaustive_best_subset(const Eigen::VectorXd& w, const Eigen::MatrixXd& fisher, std::size_t k) {
    const auto d = static_cast<std::size_t>(w.size());
    detail::check_oracle_size(d, k);
    if (fisher.rows() != w.size() || fisher.cols() != w.size()) throw std::invalid_argument("oracle: Fisher shape mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(fisher);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("oracle: Fisher is not positive definite");
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(w.size(), w.size()));

    SubsetOptimum best;
    best.value = std::numeric_limits<double>::infinity();
    detail::for_each_subset(d, k, [&](const std::vector<std::size_t>& q) {
        const auto n = static_cast<Eigen::Index>(q.size());
        Eigen::MatrixXd sub(n, n);
        Eigen::VectorXd wq(n);
        for (Eigen::Index a = 0; a < n; ++a) {
            wq(a) = w(static_cast<Eigen::Index>(q[a]));
            for (Eigen::Index b = 0; b < n; ++b) sub(a, b) = inv(static_cast<Eigen::Index>(q[a]), static_cast<Eigen::Index>(q[b]));
        }
        const double value = n == 0 ? 0.0 : 0.5 * wq.dot(sub.ldlt().solve(wq));
        if (value < best.value) best = {q, value};
    });
    return best;
}

/// Minimizes (1/2m) sum_i (g_i^T w' - g_i^T w*)^2 + (lambda/2) ||w' - w*||^2
/// over w' with at least k zeros, by enumerating zero sets.
inline RegressionOptimum sparse_regression_min(const Eigen::MatrixXd& grads, const Eigen::VectorXd& w_star, std::size_t k,
                                               double dampening) {
    const auto d = static_cast<std::size_t>(w_star.size());
    detail::check_oracle_size(d, k);
    if (grads.cols() != w_star.size() || grads.rows() == 0) throw std::invalid_argument("oracle: gradient shape mismatch");
    if (!(dampening >= 0.0)) throw std::invalid_argument("oracle: dampening must be non-negative");

    const auto m = grads.rows();
    const auto dd = w_star.size();
    Eigen::MatrixXd design(m + dd, dd);
    design.topRows(m) = grads / std::sqrt(static_cast<double>(m));
    design.bottomRows(dd) = std::sqrt(dampening) * Eigen::MatrixXd::Identity(dd, dd);
    const Eigen::VectorXd target = design * w_star;

    RegressionOptimum best;
    best.error = std::numeric_limits<double>::infinity();
    detail::for_each_subset(d, k, [&](const std::vector<std::size_t>& q) {
        std::vector<std::size_t> support;
        for (std::size_t i = 0, next = 0; i < d; ++i) {
            if (next < q.size() && q[next] == i) ++next;
            else support.push_back(i);
        }
        Eigen::VectorXd fitted = Eigen::VectorXd::Zero(dd);
        Eigen::VectorXd residual = -target;
        if (!support.empty()) {
            Eigen::MatrixXd cols(design.rows(), static_cast<Eigen::Index>(support.size()));
            for (std::size_t a = 0; a < support.size(); ++a) cols.col(static_cast<Eigen::Index>(a)) = design.col(static_cast<Eigen::Index>(support[a]));
            const Eigen::VectorXd coef = cols.colPivHouseholderQr().solve(target);
            for (std::size_t a = 0; a < support.size(); ++a) fitted(static_cast<Eigen::Index>(support[a])) = coef(static_cast<Eigen::Index>(a));
            residual = cols * coef - target;
        }
        const double error = 0.5 * residual.squaredNorm();
        if (error < best.error) best = {q, support, fitted, error};
    });
    return best;
}

}  // namespace ovit
