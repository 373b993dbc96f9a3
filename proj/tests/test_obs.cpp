#include "ovit/obs.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

namespace {

using namespace ovit;
using namespace ovit::testing;

FisherBlockInverse full_inverse(const Eigen::MatrixXd& f) { return inverse_by_blocks(f, static_cast<std::size_t>(f.rows())); }

Eigen::MatrixXd correlated_2x2() { return (Eigen::Matrix2d() << 2, 1, 1, 2).finished(); }

TEST(Saliency, DiagonalFisher) {
    const auto inv = full_inverse(Eigen::Vector2d(2, 4).asDiagonal());
    const Eigen::Vector2d w(1, 1);
    EXPECT_DOUBLE_EQ(saliency_single(w, inv, 0), 1.0);
    EXPECT_DOUBLE_EQ(saliency_single(w, inv, 1), 2.0);
}

TEST(Saliency, CorrelatedTwoByTwo) {
    const auto inv = full_inverse(correlated_2x2());
    EXPECT_NEAR(saliency_single(Eigen::Vector2d(1, 1), inv, 0), 0.75, 1e-15);
}

TEST(Saliency, ZeroWeightIsFree) {
    Rng rng(1);
    const auto inv = full_inverse(dense_fisher(correlated_grads(rng, 10, 5), 0.1));
    Eigen::VectorXd w = random_vector(rng, 5);
    w(2) = 0.0;
    EXPECT_EQ(saliency_single(w, inv, 2), 0.0);
    EXPECT_THROW(saliency_single(w, inv, 5), std::out_of_range);
    EXPECT_THROW(saliency_single(Eigen::VectorXd::Ones(4), inv, 0), std::invalid_argument);
}

TEST(UpdateSingle, DiagonalHasNoCompensation) {
    const auto inv = full_inverse(Eigen::Vector2d(2, 4).asDiagonal());
    const auto dw = update_single(Eigen::Vector2d(1, 1), inv, 0);
    EXPECT_DOUBLE_EQ(dw(0), -1.0);
    EXPECT_DOUBLE_EQ(dw(1), 0.0);
}

TEST(UpdateSingle, CorrelatedCompensation) {
    const auto inv = full_inverse(correlated_2x2());
    const Eigen::Vector2d w(1, 1);
    const auto dw = update_single(w, inv, 0);
    EXPECT_NEAR(dw(0), -1.0, 1e-15);
    EXPECT_NEAR(dw(1), 0.5, 1e-15);
    const Eigen::Vector2d after = w + dw;
    EXPECT_EQ(after(0), 0.0);
    EXPECT_NEAR(after(1), 1.5, 1e-15);
}

TEST(UpdateSingle, QuadraticIncreaseEqualsSaliency) {
    const Eigen::Vector2d w(1, 1);
    const Eigen::MatrixXd diag = Eigen::Vector2d(2, 4).asDiagonal();
    for (const Eigen::MatrixXd& f : {diag, correlated_2x2()}) {
        const auto inv = full_inverse(f);
        EXPECT_NEAR(quad(f, update_single(w, inv, 0)), saliency_single(w, inv, 0), 1e-14);
    }
    EXPECT_NEAR(quad(diag, update_single(w, full_inverse(diag), 0)), 1.0, 1e-14);
    EXPECT_NEAR(quad(correlated_2x2(), update_single(w, full_inverse(correlated_2x2()), 0)), 0.75, 1e-14);
}

TEST(UpdateSingle, StaysInsideItsBlock) {
    Rng rng(2);
    const auto f = dense_fisher(correlated_grads(rng, 30, 12), 0.1);
    const auto inv = inverse_by_blocks(f, 4);
    const auto dw = update_single(random_vector(rng, 12), inv, 5);
    EXPECT_EQ(dw.head(4).norm(), 0.0);
    EXPECT_EQ(dw.tail(4).norm(), 0.0);
    EXPECT_GT(dw.segment(4, 4).norm(), 0.0);
}

TEST(SaliencyGroup, WholeBlockIsHalfQuadraticForm) {
    const auto inv = full_inverse(correlated_2x2());
    EXPECT_NEAR(saliency_group(Eigen::Vector2d(1, 1), inv, {0, 1}), 3.0, 1e-14);
}

TEST(SaliencyGroup, SingletonReducesToSingle) {
    Rng rng(3);
    const auto inv = full_inverse(dense_fisher(correlated_grads(rng, 20, 6), 0.2));
    const auto w = random_vector(rng, 6);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_NEAR(saliency_group(w, inv, {i}), saliency_single(w, inv, i), 1e-12);
        EXPECT_LT(rel_err(update_group(w, inv, {i}), update_single(w, inv, i)), 1e-12);
    }
}

TEST(SaliencyGroup, MatchesQuadraticOfGroupUpdate) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto f = dense_fisher(correlated_grads(rng, 12, 6), 0.05);
        const auto inv = full_inverse(f);
        const auto w = random_vector(rng, 6);
        for (const std::vector<std::size_t>& q : {std::vector<std::size_t>{1, 4}, {0, 2, 5}}) {
            const auto dw = update_group(w, inv, q);
            EXPECT_LT(rel_err(quad(f, dw), saliency_group(w, inv, q)), 1e-9);
            for (auto i : q) EXPECT_EQ((w + dw)(static_cast<Eigen::Index>(i)), 0.0);
            EXPECT_GE(saliency_group(w, inv, q), 0.0);
        }
    }
}

TEST(UpdateGroup, WholeBlockRemovesEverything) {
    Rng rng(5);
    const auto inv = inverse_by_blocks(dense_fisher(correlated_grads(rng, 20, 8), 0.1), 4);
    const auto w = random_vector(rng, 8);
    const auto dw = update_group(w, inv, {4, 5, 6, 7});
    EXPECT_LT(rel_err(dw.tail(4), -w.tail(4)), 1e-12);
    EXPECT_EQ(dw.head(4).norm(), 0.0);
}

TEST(UpdateGroup, RejectsInvalidGroups) {
    Rng rng(6);
    const auto inv = inverse_by_blocks(dense_fisher(correlated_grads(rng, 20, 8), 0.1), 4);
    const auto w = random_vector(rng, 8);
    EXPECT_THROW(saliency_group(w, inv, {}), std::invalid_argument);
    EXPECT_THROW(saliency_group(w, inv, {1, 5}), std::invalid_argument);
    EXPECT_THROW(saliency_group(w, inv, {1, 1}), std::invalid_argument);

    FisherBlockInverse bad = inv;
    bad.blocks[0] = Eigen::MatrixXd::Identity(4, 4);
    bad.blocks[0](0, 1) = bad.blocks[0](1, 0) = 2.0;  // indefinite
    EXPECT_THROW(saliency_group(w, bad, {0, 1}), NumericalError);
}

TEST(SaliencyGroup, CrossBlockGroupsFactorize) {
    Rng rng(7);
    const auto f = dense_fisher(correlated_grads(rng, 30, 8), 0.1);
    const auto inv = inverse_by_blocks(f, 4);
    const auto w = random_vector(rng, 8);
    const std::vector<std::size_t> q = {1, 2, 6};
    EXPECT_NEAR(saliency_group_any(w, inv, q), saliency_group(w, inv, {1, 2}) + saliency_group(w, inv, {6}), 1e-12);
    const auto dw = update_group_any(w, inv, q);
    EXPECT_LT(rel_err(quad(block_diagonal(f, 4), dw), saliency_group_any(w, inv, q)), 1e-9);
}

TEST(LossIncrease, ZeroChange) {
    Rng rng(8);
    const auto w = random_vector(rng, 4);
    EXPECT_EQ(loss_increase(w, w, random_matrix(rng, 3, 4), 1e-3), 0.0);
}

TEST(LossIncrease, HandArithmetic) {
    Eigen::MatrixXd g(1, 2);
    g << 1, 0;
    EXPECT_DOUBLE_EQ(loss_increase(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1), g, 1.0), 1.5);
}

TEST(LossIncrease, MatchesDenseFisher) {
    Rng rng(9);
    std::uniform_int_distribution<int> dim(1, 64), count(1, 100);
    for (int trial = 0; trial < 50; ++trial) {
        const auto d = dim(rng);
        const auto g = correlated_grads(rng, count(rng), d);
        const auto before = random_vector(rng, d), after = random_vector(rng, d);
        EXPECT_LT(rel_err(loss_increase(before, after, g, 0.01), quad(dense_fisher(g, 0.01), after - before)), 1e-9);
    }
    EXPECT_THROW(loss_increase(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(2, 4), 1.0),
                 std::invalid_argument);
}

TEST(Saliency, LargeDampeningOrdersLikeMagnitude) {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = correlated_grads(rng, 16, 12);
        const auto inv = inverse_by_blocks(dense_fisher(g, 1e8), 4);
        const auto w = random_vector(rng, 12);
        std::vector<std::size_t> by_rho(12), by_mag(12);
        std::iota(by_rho.begin(), by_rho.end(), 0);
        by_mag = by_rho;
        std::stable_sort(by_rho.begin(), by_rho.end(),
                         [&](auto a, auto b) { return saliency_single(w, inv, a) < saliency_single(w, inv, b); });
        std::stable_sort(by_mag.begin(), by_mag.end(), [&](auto a, auto b) { return w(a) * w(a) < w(b) * w(b); });
        EXPECT_EQ(by_rho, by_mag) << "trial " << trial;
    }
}

}  // namespace
