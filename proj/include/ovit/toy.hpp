#pragma once

// Desk-scale differentiable models on synthetic data. They supply real
// per-sample gradients and a ground-truth loss for the pruning pipelines.
//
// dims = {in, out}: linear least squares. The data is planted so that the
//   least-squares optimum is exactly the teacher and every residual at the
//   optimum is +-1; the empirical Fisher of each output row then equals that
//   row's Hessian, which makes the OBS quadratic exact (up to dampening).
// dims = {in, hidden, out}: tanh MLP fit to a tanh teacher plus noise.
//
// Loss is (1/2n) sum_i ||f(x_i) - y_i||^2 in both cases. Weight matrices are
// row-major (out x in) and flattened in that order.

#include "ovit/fisher.hpp"
#include "ovit/pruners.hpp"
#include "ovit/tensorstore.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ovit {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ToySpec {
    std::uint64_t seed = 1;
    std::vector<std::size_t> dims = {16, 32, 4};
    std::size_t samples = 0;       // 0: four times the widest fan-in, at least 64
    double correlation = 0.6;      // mixing between neighbouring input features
    bool keep_last_dense = false;  // mark the output layer non-prunable

    bool linear() const { return dims.size() == 2; }

    void validate() const {
        if (dims.size() != 2 && dims.size() != 3) throw std::invalid_argument("toy dims must be IN,OUT or IN,HIDDEN,OUT");
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) total += dims[l] * dims[l + 1];
        for (auto d : dims)
            if (d < 1) throw std::invalid_argument("toy dims must be positive");
        if (total > 10000) throw std::invalid_argument("toy models are limited to 10^4 weights");
        if (!(correlation >= 0.0 && correlation < 1.0)) throw std::invalid_argument("toy correlation must lie in [0, 1)");
    }

    std::size_t sample_count() const {
        if (samples) return samples;
        std::size_t widest = 0;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) widest = std::max(widest, dims[l]);
        return std::max<std::size_t>(64, 4 * widest);
    }
};

class ToyModel {
public:
    explicit ToyModel(const ToySpec& spec) : spec_(spec) {
        spec_.validate();
        std::mt19937_64 rng(spec_.seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        const auto n = static_cast<Eigen::Index>(spec_.sample_count());
        const auto in = static_cast<Eigen::Index>(spec_.dims.front());
        const auto out = static_cast<Eigen::Index>(spec_.dims.back());

        RowMatrix z(n, in);
        for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
        x_ = z;
        for (Eigen::Index j = 1; j < in; ++j) x_.col(j) = z.col(j) + spec_.correlation * x_.col(j - 1);

        if (spec_.linear()) {
            if (n <= out) throw std::invalid_argument("linear toy needs more samples than outputs");
            teacher_.push_back(random_matrix(rng, out, in, 1.0));
            RowMatrix signs(n, out);
            std::bernoulli_distribution coin(0.5);
            for (Eigen::Index i = 0; i < signs.size(); ++i) signs.data()[i] = coin(rng) ? 1.0 : -1.0;
            // Make the inputs orthogonal to the residual signs so the teacher is the exact optimum.
            const Eigen::MatrixXd gram = signs.transpose() * signs;
            x_ -= signs * gram.ldlt().solve(signs.transpose() * x_);
            y_ = x_ * teacher_[0].transpose() - signs;
            weights_.push_back(RowMatrix::Zero(out, in));
        } else {
            const auto hidden = static_cast<Eigen::Index>(spec_.dims[1]);
            teacher_.push_back(random_matrix(rng, hidden, in, 1.5 / std::sqrt(static_cast<double>(in))));
            teacher_.push_back(random_matrix(rng, out, hidden, 1.5 / std::sqrt(static_cast<double>(hidden))));
            y_ = (x_ * teacher_[0].transpose()).array().tanh().matrix() * teacher_[1].transpose();
            for (Eigen::Index i = 0; i < y_.size(); ++i) y_.data()[i] += 0.1 * normal(rng);
            weights_.push_back(random_matrix(rng, hidden, in, 0.5 / std::sqrt(static_cast<double>(in))));
            weights_.push_back(random_matrix(rng, out, hidden, 0.5 / std::sqrt(static_cast<double>(hidden))));
        }
        masks_.assign(weights_.size(), {});
    }

    const ToySpec& spec() const { return spec_; }
    std::size_t num_layers() const { return weights_.size(); }
    std::size_t num_samples() const { return static_cast<std::size_t>(x_.rows()); }
    std::size_t layer_size(std::size_t l) const { return static_cast<std::size_t>(weights_[l].size()); }
    static std::string layer_id(std::size_t l) { return std::to_string(l); }

    const RowMatrix& weight(std::size_t l) const { return weights_[l]; }
    const RowMatrix& teacher(std::size_t l) const { return teacher_[l]; }
    const std::vector<std::uint8_t>& mask(std::size_t l) const { return masks_[l]; }

    Eigen::VectorXd flat(std::size_t l) const {
        return Eigen::Map<const Eigen::VectorXd>(weights_[l].data(), weights_[l].size());
    }

    void set_flat(std::size_t l, const Eigen::VectorXd& v) {
        if (v.size() != weights_[l].size()) throw std::invalid_argument("toy: layer size mismatch");
        Eigen::Map<Eigen::VectorXd>(weights_[l].data(), weights_[l].size()) = v;
        apply_masks();
    }

    void set_mask(std::size_t l, std::vector<std::uint8_t> m) {
        if (!m.empty() && m.size() != layer_size(l)) throw std::invalid_argument("toy: mask size mismatch");
        masks_[l] = std::move(m);
        apply_masks();
    }

    std::vector<std::uint8_t> prunable(std::size_t l) const {
        if (spec_.keep_last_dense && l + 1 == num_layers()) return std::vector<std::uint8_t>(layer_size(l), 0);
        return {};
    }

    /// Largest eigenvalue of X^T X / n.
    double input_curvature() const {
        const Eigen::MatrixXd cov = x_.transpose() * x_ / static_cast<double>(x_.rows());
        return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    }

    double loss() const {
        const RowMatrix r = predict() - y_;
        return 0.5 * r.squaredNorm() / static_cast<double>(x_.rows());
    }

    /// Full-batch gradient of each layer, flattened row-major.
    std::vector<Eigen::VectorXd> batch_gradient() const {
        const auto n = static_cast<double>(x_.rows());
        std::vector<Eigen::VectorXd> out;
        if (spec_.linear()) {
            const RowMatrix g = (predict() - y_).transpose() * x_ / n;
            out.emplace_back(Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()));
        } else {
            const RowMatrix h = hidden();
            const RowMatrix r = h * weights_[1].transpose() - y_;
            const RowMatrix g1 = r.transpose() * h / n;
            const RowMatrix back = ((r * weights_[1]).array() * (1.0 - h.array().square())).matrix();
            const RowMatrix g0 = back.transpose() * x_ / n;
            out.emplace_back(Eigen::Map<const Eigen::VectorXd>(g0.data(), g0.size()));
            out.emplace_back(Eigen::Map<const Eigen::VectorXd>(g1.data(), g1.size()));
        }
        return out;
    }

    /// Gradients of the first `count` per-sample losses 1/2 ||f(x_i) - y_i||^2,
    /// one N x d matrix per layer, rows in dataset order. Each row is computed
    /// on its own, so it does not depend on `count`.
    std::vector<Eigen::MatrixXd> sample_gradients(std::size_t count) const {
        if (count < 1 || count > num_samples())
            throw std::invalid_argument("gradient count must be between 1 and the dataset size (" +
                                        std::to_string(num_samples()) + ")");
        const auto n = static_cast<Eigen::Index>(count);
        std::vector<Eigen::MatrixXd> out;
        for (const auto& w : weights_) out.emplace_back(n, w.size());
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd x = x_.row(i).transpose();
            const Eigen::VectorXd y = y_.row(i).transpose();
            if (spec_.linear()) {
                const Eigen::VectorXd r = weights_[0] * x - y;
                out[0].row(i) = outer_row(r, x);
            } else {
                const Eigen::VectorXd h = (weights_[0] * x).array().tanh().matrix();
                const Eigen::VectorXd r = weights_[1] * h - y;
                const Eigen::VectorXd back =
                    ((weights_[1].transpose() * r).array() * (1.0 - h.array().square())).matrix();
                out[0].row(i) = outer_row(back, x);
                out[1].row(i) = outer_row(r, h);
            }
        }
        return out;
    }

    /// Full-batch gradient descent step; masked weights stay at zero.
    void descend(double lr) {
        const auto g = batch_gradient();
        for (std::size_t l = 0; l < weights_.size(); ++l)
            Eigen::Map<Eigen::VectorXd>(weights_[l].data(), weights_[l].size()) -= lr * g[l];
        apply_masks();
    }

    bool finite() const {
        for (const auto& w : weights_)
            if (!w.allFinite()) return false;
        return true;
    }

    /// Layer states for the pruners (no gradients attached).
    std::vector<LayerState> layer_states() const {
        std::vector<LayerState> out;
        for (std::size_t l = 0; l < num_layers(); ++l) out.push_back({layer_id(l), flat(l), {}, prunable(l), masks_[l]});
        return out;
    }

    void load(const std::vector<LayerState>& layers) {
        for (std::size_t l = 0; l < num_layers(); ++l) {
            masks_[l] = layers[l].mask;
            set_flat(l, layers[l].weights);
        }
    }

    /// Weights, masks and (when count > 0) per-sample gradients in OVPT naming.
    TensorContainer to_container(std::size_t gradient_count = 0) const {
        TensorContainer c;
        std::vector<Eigen::MatrixXd> grads;
        if (gradient_count) grads = sample_gradients(gradient_count);
        for (std::size_t l = 0; l < num_layers(); ++l) {
            const auto id = layer_id(l);
            const auto& w = weights_[l];
            c.insert(weight_key(id), Tensor::f64({static_cast<std::uint64_t>(w.rows()), static_cast<std::uint64_t>(w.cols())},
                                                 std::vector<double>(w.data(), w.data() + w.size())));
            std::vector<std::uint8_t> m = masks_[l].empty() ? std::vector<std::uint8_t>(layer_size(l), 1) : masks_[l];
            c.insert(mask_key(id), Tensor::mask({static_cast<std::uint64_t>(w.rows()), static_cast<std::uint64_t>(w.cols())}, m));
            if (const auto p = prunable(l); !p.empty())
                c.insert(prunable_key(id), Tensor::mask({static_cast<std::uint64_t>(w.rows()), static_cast<std::uint64_t>(w.cols())}, p));
            if (gradient_count) c.insert(grads_key(id), GradientSet{id, grads[l]}.to_tensor());
        }
        return c;
    }

private:
    static RowMatrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
        std::normal_distribution<double> normal(0.0, scale);
        RowMatrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
        return m;
    }

    // vec_rowmajor(a b^T) as a row vector.
    static Eigen::RowVectorXd outer_row(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        Eigen::RowVectorXd row(a.size() * b.size());
        for (Eigen::Index k = 0; k < a.size(); ++k) row.segment(k * b.size(), b.size()) = a(k) * b.transpose();
        return row;
    }

    RowMatrix hidden() const { return (x_ * weights_[0].transpose()).array().tanh().matrix(); }

    RowMatrix predict() const {
        if (spec_.linear()) return x_ * weights_[0].transpose();
        return hidden() * weights_[1].transpose();
    }

    void apply_masks() {
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            if (masks_[l].empty()) continue;
            for (std::size_t i = 0; i < masks_[l].size(); ++i)
                if (!masks_[l][i]) weights_[l].data()[i] = 0.0;
        }
    }

    ToySpec spec_;
    RowMatrix x_, y_;
    std::vector<RowMatrix> teacher_;
    std::vector<RowMatrix> weights_;
    std::vector<std::vector<std::uint8_t>> masks_;
};

struct TrainResult {
    ToyModel model;
    double loss = 0.0;
    double grad_norm = 0.0;
};

inline double gradient_norm(const ToyModel& m) {
    double s = 0.0;
    for (const auto& g : m.batch_gradient()) s += g.squaredNorm();
    return std::sqrt(s);
}

/// Step size that is safe for full-batch descent: 1/L for the linear toy
/// (L = largest eigenvalue of X^T X / n), a fixed 0.05 for the MLP.
inline double suggested_lr(const ToySpec& spec) {
    if (!spec.linear()) return 0.05;
    return 1.0 / ToyModel(spec).input_curvature();
}

/// Full-batch gradient descent from the seeded initialization.
inline TrainResult toy_train(const ToySpec& spec, std::size_t steps, double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("toy_train: learning rate must be positive");
    ToyModel model(spec);
    for (std::size_t s = 0; s < steps; ++s) {
        model.descend(lr);
        if (!model.finite()) throw NumericalError("toy_train: loss diverged at step " + std::to_string(s));
    }
    const double loss = model.loss();
    if (!std::isfinite(loss)) throw NumericalError("toy_train: loss is not finite");
    const double gn = gradient_norm(model);
    return {std::move(model), loss, gn};
}

}  // namespace ovit
