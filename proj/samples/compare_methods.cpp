// Prunes one synthetic layer with each method and prints predicted versus
// evaluated loss increase under the full (dense) Fisher.

#include "ovit/ovit.hpp"

#include <cstdio>
#include <random>

int main() {
    using namespace ovit;
    constexpr Eigen::Index kDim = 256, kSamples = 512;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;

    Eigen::MatrixXd grads(kSamples, kDim);
    for (Eigen::Index j = 0; j < kDim; ++j)
        for (Eigen::Index i = 0; i < kSamples; ++i) grads(i, j) = normal(rng) + (j ? 0.8 * grads(i, j - 1) : 0.0);
    Eigen::VectorXd weights(kDim);
    for (auto& w : weights) w = normal(rng);

    std::printf("%-6s %-9s %-12s %-12s\n", "method", "sparsity", "predicted", "evaluated");
    for (Method m : {Method::gm, Method::wf, Method::ovit}) {
        auto spec = PrunerSpec::for_method(m);
        spec.fisher.block_size = 32;
        LayerState layer{"layer.0", weights, grads, {}, {}};
        for (double s : {0.5, 0.75}) {
            const auto r = prune(std::vector<LayerState>{layer}, s, spec);
            const double evaluated = loss_increase(weights, r.layers[0].weights, grads, spec.fisher.dampening);
            std::printf("%-6s %-9.2f %-12.5g %-12.5g\n", method_name(m), s, r.predicted_loss_increase, evaluated);
        }
    }
    return 0;
}
