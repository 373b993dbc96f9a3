#pragma once

// Block-diagonal inverse of the dampened empirical Fisher
//
//   F = lambda * I + (1/N) * sum_i g_i g_i^T
//
// built by Sherman-Morrison rank-1 updates, one block at a time.

#include "ovit/parallel.hpp"
#include "ovit/tensorstore.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ovit {

/// Floor applied to inverse diagonals before any division.
inline constexpr double kCurvatureFloor = 1e-12;

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateCurvature : public NumericalError {
public:
    using NumericalError::NumericalError;
};

struct FisherConfig {
    std::size_t block_size = 64;
    double dampening = 1e-8;
    std::size_t num_grads = 4096;

    void validate() const {
        if (block_size < 1) throw std::invalid_argument("fisher: block size must be >= 1");
        if (!(dampening > 0.0) || !std::isfinite(dampening)) throw std::invalid_argument("fisher: dampening must be > 0");
        if (num_grads < 1) throw std::invalid_argument("fisher: gradient count must be >= 1");
    }
};

struct FisherBlockInverse {
    std::vector<Eigen::MatrixXd> blocks;
    std::size_t dim = 0;
    FisherConfig config;

    std::size_t num_blocks() const { return blocks.size(); }
    /// Global index of the first coordinate of block j.
    std::size_t block_offset(std::size_t j) const { return j * config.block_size; }
    std::size_t block_length(std::size_t j) const { return static_cast<std::size_t>(blocks[j].rows()); }

    struct Location {
        std::size_t block;
        std::size_t local;
    };

    Location locate(std::size_t i) const {
        if (i >= dim) throw std::out_of_range("fisher: index " + std::to_string(i) + " out of range");
        return {i / config.block_size, i % config.block_size};
    }

    double diagonal(std::size_t i) const {
        const auto [b, l] = locate(i);
        const auto li = static_cast<Eigen::Index>(l);
        return blocks[b](li, li);
    }

    /// Dense d x d matrix; test and debugging aid for small d.
    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        for (std::size_t j = 0; j < blocks.size(); ++j) {
            const auto o = static_cast<Eigen::Index>(block_offset(j));
            out.block(o, o, blocks[j].rows(), blocks[j].cols()) = blocks[j];
        }
        return out;
    }
};

/// Block partition of d coordinates: full blocks of B, then a trailing block of d mod B.
inline std::vector<std::size_t> block_lengths(std::size_t dim, std::size_t block_size) {
    std::vector<std::size_t> out(dim / block_size, block_size);
    if (dim % block_size) out.push_back(dim % block_size);
    return out;
}

/// samples is N x d; the first min(N, cfg.num_grads) rows are consumed in order.
inline FisherBlockInverse build_fisher_inverse(const Eigen::MatrixXd& samples, const FisherConfig& cfg,
                                               std::size_t threads = 1) {
    cfg.validate();
    if (samples.rows() == 0) throw std::invalid_argument("fisher: no gradient samples (N = 0)");
    if (samples.cols() == 0) throw std::invalid_argument("fisher: zero-dimensional gradients");
    if (!samples.allFinite()) throw NumericalError("fisher: non-finite gradient values");

    const auto n = std::min<Eigen::Index>(samples.rows(), static_cast<Eigen::Index>(cfg.num_grads));
    const auto count = static_cast<double>(n);

    FisherBlockInverse inv;
    inv.dim = static_cast<std::size_t>(samples.cols());
    inv.config = cfg;
    const auto lengths = block_lengths(inv.dim, cfg.block_size);
    inv.blocks.resize(lengths.size());

    detail::parallel_for(lengths.size(), threads, [&](std::size_t j) {
        const auto b = static_cast<Eigen::Index>(lengths[j]);
        const auto offset = static_cast<Eigen::Index>(j * cfg.block_size);
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(b, b) / cfg.dampening;
        Eigen::VectorXd u(b);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto g = samples.row(i).segment(offset, b).transpose();
            u.noalias() = m * g;
            const double denom = count + g.dot(u);
            m.noalias() -= (u / denom) * u.transpose();
        }
        inv.blocks[j] = 0.5 * (m + m.transpose());
    });
    return inv;
}

inline FisherBlockInverse build_fisher_inverse(const GradientSet& grads, const FisherConfig& cfg,
                                               std::size_t threads = 1) {
    try {
        return build_fisher_inverse(grads.samples, cfg, threads);
    } catch (const NumericalError& e) {
        throw NumericalError(grads.layer + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(grads.layer + ": " + e.what());
    }
}

/// Removes coordinate i from the Fisher whose inverse is `inv`, in place.
///
/// Afterwards the live rows/columns hold the inverse of the Fisher with row and
/// column i deleted; row and column i are zeroed (diagonal sentinel 0). When
/// `clamp` is false a diagonal at or below kCurvatureFloor throws
/// DegenerateCurvature; otherwise the floor is used and true is returned.
inline bool eliminate_index_inplace(Eigen::MatrixXd& inv, Eigen::Index i, bool clamp) {
    if (i < 0 || i >= inv.rows()) throw std::out_of_range("eliminate_index: index out of range");
    double pivot = inv(i, i);
    bool clamped = false;
    if (!(pivot > kCurvatureFloor)) {
        if (!clamp)
            throw DegenerateCurvature("eliminate_index: inverse diagonal " + std::to_string(pivot) +
                                      " at index " + std::to_string(i) + " is below the curvature floor");
        pivot = kCurvatureFloor;
        clamped = true;
    }
    const Eigen::VectorXd col = inv.col(i);
    inv.noalias() -= (col / pivot) * col.transpose();
    inv.row(i).setZero();
    inv.col(i).setZero();
    return clamped;
}

inline Eigen::MatrixXd eliminate_index(Eigen::MatrixXd inv, std::size_t i) {
    eliminate_index_inplace(inv, static_cast<Eigen::Index>(i), false);
    return inv;
}

}  // namespace ovit
