#include "ovit/fisher.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

namespace {

using namespace ovit;
using namespace ovit::testing;

FisherConfig config(std::size_t b, double lambda, std::size_t n = 4096) {
    FisherConfig c;
    c.block_size = b;
    c.dampening = lambda;
    c.num_grads = n;
    return c;
}

TEST(Fisher, SingleRankOneUpdateDiagonal) {
    Eigen::MatrixXd g(1, 2);
    g << 1, 0;
    const auto inv = build_fisher_inverse(g, config(2, 1.0));
    ASSERT_EQ(inv.num_blocks(), 1u);
    EXPECT_TRUE(inv.blocks[0].isApprox((Eigen::Matrix2d() << 0.5, 0, 0, 1.0).finished(), 1e-15));
}

TEST(Fisher, UnitBlocksAreTheDiagonalApproximation) {
    Eigen::MatrixXd g(1, 2);
    g << 1, 0;
    const auto inv = build_fisher_inverse(g, config(1, 1.0));
    ASSERT_EQ(inv.num_blocks(), 2u);
    EXPECT_DOUBLE_EQ(inv.blocks[0](0, 0), 0.5);
    EXPECT_DOUBLE_EQ(inv.blocks[1](0, 0), 1.0);
}

TEST(Fisher, MatchesDirectBlockInversion) {
    Rng rng(11);
    const auto g = correlated_grads(rng, 64, 32);
    const auto inv = build_fisher_inverse(g, config(8, 0.1));
    const auto ref = inverse_by_blocks(dense_fisher(g, 0.1), 8);
    ASSERT_EQ(inv.num_blocks(), 4u);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_LT(rel_err(inv.blocks[j], ref.blocks[j]), 1e-8) << "block " << j;
}

TEST(Fisher, OracleEquivalenceOverRandomShapes) {
    Rng rng(12);
    std::uniform_int_distribution<int> dim(1, 64), count(1, 256);
    std::uniform_real_distribution<double> logl(-3, 1);
    for (int trial = 0; trial < 40; ++trial) {
        const auto d = dim(rng), n = count(rng);
        const std::size_t sizes[] = {1, 5, 16, static_cast<std::size_t>(d)};
        const auto b = sizes[trial % 4];
        const double lambda = std::pow(10.0, logl(rng));
        const auto g = correlated_grads(rng, n, d);
        const auto inv = build_fisher_inverse(g, config(b, lambda));
        const auto ref = inverse_by_blocks(dense_fisher(g, lambda), b);
        ASSERT_EQ(inv.num_blocks(), ref.num_blocks());
        for (std::size_t j = 0; j < inv.num_blocks(); ++j)
            EXPECT_LT(rel_err(inv.blocks[j], ref.blocks[j]), 1e-8) << "trial " << trial << " block " << j;
    }
}

TEST(Fisher, TrailingPartialBlock) {
    Rng rng(3);
    const auto inv = build_fisher_inverse(random_matrix(rng, 5, 10), config(4, 1.0));
    ASSERT_EQ(inv.num_blocks(), 3u);
    EXPECT_EQ(inv.block_length(0), 4u);
    EXPECT_EQ(inv.block_length(2), 2u);
    EXPECT_EQ(inv.locate(9).block, 2u);
    EXPECT_EQ(inv.locate(9).local, 1u);
    EXPECT_THROW(inv.locate(10), std::out_of_range);
    EXPECT_EQ(block_lengths(12, 4), (std::vector<std::size_t>{4, 4, 4}));
}

TEST(Fisher, BlocksAreSymmetricWithPositiveDiagonal) {
    Rng rng(5);
    const auto inv = build_fisher_inverse(correlated_grads(rng, 40, 24), config(12, 1e-3));
    for (const auto& b : inv.blocks) {
        EXPECT_LE((b - b.transpose()).norm(), 1e-9 * b.norm());
        EXPECT_GT(b.diagonal().minCoeff(), 0.0);
    }
}

TEST(Fisher, GradientCountCapUsesLeadingRows) {
    Rng rng(9);
    const auto g = random_matrix(rng, 30, 6);
    const auto capped = build_fisher_inverse(g, config(6, 0.5, 10));
    const auto head = build_fisher_inverse(Eigen::MatrixXd(g.topRows(10)), config(6, 0.5));
    EXPECT_EQ(capped.blocks[0], head.blocks[0]);
}

TEST(Fisher, RejectsBadInput) {
    EXPECT_THROW(build_fisher_inverse(Eigen::MatrixXd(0, 3), config(2, 1.0)), std::invalid_argument);
    Eigen::MatrixXd g = Eigen::MatrixXd::Ones(2, 2);
    g(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(build_fisher_inverse(g, config(2, 1.0)), NumericalError);
    EXPECT_THROW(build_fisher_inverse(Eigen::MatrixXd::Ones(2, 2), config(2, 0.0)), std::invalid_argument);
    EXPECT_THROW(build_fisher_inverse(Eigen::MatrixXd::Ones(2, 2), config(0, 1.0)), std::invalid_argument);
    try {
        build_fisher_inverse(GradientSet{"layer.7", g}, config(2, 1.0));
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("layer.7"), std::string::npos);
    }
}

TEST(Fisher, LargeDampeningApproachesScaledIdentity) {
    Rng rng(21);
    const double lambda = 1e6;
    const auto inv = build_fisher_inverse(random_matrix(rng, 50, 16), config(16, lambda));
    const Eigen::MatrixXd target = Eigen::MatrixXd::Identity(16, 16) / lambda;
    EXPECT_LT(rel_err(inv.blocks[0], target), 1e-3);
}

TEST(Fisher, ParallelBuildIsBitIdentical) {
    Rng rng(4);
    const auto g = correlated_grads(rng, 100, 70);
    const auto a = build_fisher_inverse(g, config(8, 1e-2), 1);
    const auto b = build_fisher_inverse(g, config(8, 1e-2), 4);
    for (std::size_t j = 0; j < a.num_blocks(); ++j) EXPECT_EQ(a.blocks[j], b.blocks[j]);
}

TEST(EliminateIndex, DiagonalCaseLeavesOthersUntouched) {
    Eigen::MatrixXd inv(2, 2);
    inv << 0.5, 0, 0, 0.25;
    const auto out = eliminate_index(inv, 0);
    EXPECT_EQ(out(0, 0), 0.0);
    EXPECT_EQ(out(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(out(1, 1), 0.25);
}

TEST(EliminateIndex, CorrelatedTwoByTwo) {
    // F = [[2,1],[1,2]]; deleting index 0 leaves F[1,1] = 2, whose inverse is 0.5.
    Eigen::MatrixXd inv(2, 2);
    inv << 2, -1, -1, 2;
    inv /= 3.0;
    const auto out = eliminate_index(inv, 0);
    EXPECT_NEAR(out(1, 1), 0.5, 1e-15);
    EXPECT_EQ(out(0, 0), 0.0);
}

TEST(EliminateIndex, MatchesInverseOfReducedFisher) {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        const Eigen::Index b = 2 + trial % 11;
        const auto f = dense_fisher(correlated_grads(rng, 3 * b, b), 0.05);
        Eigen::MatrixXd inv = direct_inverse(f);
        std::vector<Eigen::Index> live(static_cast<std::size_t>(b));
        std::iota(live.begin(), live.end(), 0);
        std::shuffle(live.begin(), live.end(), rng);
        // Remove indices one at a time and compare the live part against a direct inverse.
        while (live.size() > 1) {
            const auto i = live.back();
            live.pop_back();
            eliminate_index_inplace(inv, i, false);
            std::vector<Eigen::Index> keep = live;
            std::sort(keep.begin(), keep.end());
            const auto n = static_cast<Eigen::Index>(keep.size());
            Eigen::MatrixXd sub(n, n), got(n, n);
            for (Eigen::Index r = 0; r < n; ++r)
                for (Eigen::Index c = 0; c < n; ++c) {
                    sub(r, c) = f(keep[r], keep[c]);
                    got(r, c) = inv(keep[r], keep[c]);
                }
            EXPECT_LT(rel_err(got, direct_inverse(sub)), 1e-8) << "trial " << trial;
            EXPECT_EQ(inv.row(i).norm(), 0.0);
            EXPECT_EQ(inv.col(i).norm(), 0.0);
        }
    }
}

TEST(EliminateIndex, ExhaustionLeavesOnlySentinels) {
    Rng rng(8);
    const auto f = dense_fisher(correlated_grads(rng, 20, 6), 0.1);
    Eigen::MatrixXd inv = direct_inverse(f);
    for (Eigen::Index i : {3, 0, 5, 1, 4, 2}) eliminate_index_inplace(inv, i, false);
    EXPECT_EQ(inv.norm(), 0.0);
}

TEST(EliminateIndex, DegenerateCurvature) {
    Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(2, 2);
    inv(0, 0) = 1e-14;
    EXPECT_THROW(eliminate_index(inv, 0), DegenerateCurvature);
    Eigen::MatrixXd clamped = inv;
    EXPECT_TRUE(eliminate_index_inplace(clamped, 0, true));
    EXPECT_EQ(clamped(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(clamped(1, 1), 1.0);
    EXPECT_THROW(eliminate_index(inv, 2), std::out_of_range);
}

}  // namespace
