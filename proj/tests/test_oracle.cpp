#include "ovit/oracle.hpp"
#include "ovit/obs.hpp"
#include "ovit/solver.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

namespace {

using namespace ovit;
using namespace ovit::testing;

TEST(ExhaustiveBestSubset, SingleWeightIsArgminSaliency) {
    Rng rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        const auto f = dense_fisher(correlated_grads(rng, 20, 8), 0.05);
        const auto w = random_vector(rng, 8);
        const auto inv = inverse_by_blocks(f, 8);
        const auto best = exhaustive_best_subset(w, f, 1);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < 8; ++i)
            if (saliency_single(w, inv, i) < saliency_single(w, inv, arg)) arg = i;
        ASSERT_EQ(best.zeros.size(), 1u);
        EXPECT_EQ(best.zeros[0], arg);
        EXPECT_LT(rel_err(best.value, saliency_single(w, inv, arg)), 1e-10);
    }
}

TEST(ExhaustiveBestSubset, AllWeightsIsHalfQuadratic) {
    Rng rng(2);
    const auto f = dense_fisher(correlated_grads(rng, 20, 7), 0.1);
    const auto w = random_vector(rng, 7);
    const auto best = exhaustive_best_subset(w, f, 7);
    EXPECT_EQ(best.zeros, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
    EXPECT_LT(rel_err(best.value, quad(f, w)), 1e-10);
    EXPECT_EQ(exhaustive_best_subset(w, f, 0).value, 0.0);
}

TEST(ExhaustiveBestSubset, NeverWorseThanGreedy) {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const auto f = dense_fisher(correlated_grads(rng, 16, 8, 0.9), 0.01);
        const auto w = random_vector(rng, 8);
        const auto best = exhaustive_best_subset(w, f, 3);
        const auto greedy = solve_global(w, inverse_by_blocks(f, 8), 3);
        EXPECT_LE(best.value, greedy.predicted_loss_increase * (1 + 1e-12));
    }
}

TEST(ExhaustiveBestSubset, Guards) {
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(15);
    EXPECT_THROW(exhaustive_best_subset(w, Eigen::MatrixXd::Identity(15, 15), 2), std::invalid_argument);
    EXPECT_THROW(exhaustive_best_subset(Eigen::VectorXd::Ones(3), Eigen::MatrixXd::Identity(3, 3), 4), std::invalid_argument);
    EXPECT_THROW(exhaustive_best_subset(Eigen::VectorXd::Ones(3), Eigen::MatrixXd::Identity(2, 2), 1), std::invalid_argument);
    EXPECT_THROW(sparse_regression_min(Eigen::MatrixXd::Ones(3, 15), w, 1, 0.1), std::invalid_argument);
}

TEST(SparseRegression, NoZerosKeepsTheWeights) {
    Rng rng(4);
    const auto g = correlated_grads(rng, 8, 6);
    const auto w = random_vector(rng, 6);
    const auto r = sparse_regression_min(g, w, 0, 1e-2);
    EXPECT_LT((r.weights - w).norm(), 1e-10 * w.norm());
    EXPECT_LT(r.error, 1e-20);
}

TEST(SparseRegression, AllZerosCostsTheFullQuadratic) {
    Rng rng(5);
    const auto g = correlated_grads(rng, 8, 6);
    const auto w = random_vector(rng, 6);
    const auto r = sparse_regression_min(g, w, 6, 1e-2);
    EXPECT_EQ(r.weights.norm(), 0.0);
    EXPECT_LT(rel_err(r.error, quad(dense_fisher(g, 1e-2), w)), 1e-12);
}

TEST(SparseRegression, TheoremOneOnSmallInstances) {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = correlated_grads(rng, 8, 6);
        const auto w = random_vector(rng, 6);
        const double lambda = trial % 2 ? 1e-2 : 1e-4;
        const auto reg = sparse_regression_min(g, w, 2, lambda);
        const auto sub = exhaustive_best_subset(w, dense_fisher(g, lambda), 2);
        EXPECT_EQ(reg.zeros, sub.zeros) << "trial " << trial;
        EXPECT_LT(rel_err(reg.error, sub.value), 1e-9) << "trial " << trial;
        // The regression minimizer is the OBS-compensated point.
        const auto inv = inverse_by_blocks(dense_fisher(g, lambda), 6);
        const Eigen::VectorXd obs = w + update_group(w, inv, sub.zeros);
        EXPECT_LT((reg.weights - obs).norm(), 1e-7 * w.norm()) << "trial " << trial;
    }
}

}  // namespace
