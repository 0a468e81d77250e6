#include <gtest/gtest.h>

#include "attnrank/cp_als.hpp"
#include "attnrank/db_tensor.hpp"
#include "attnrank/rng.hpp"
#include "fixtures.hpp"

using namespace attnrank;

namespace {

Tensor3 rank_one_tensor(int d1, int d2, int d3, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> u(d1), v(d2), w(d3);
    for (double& x : u) x = rng.normal();
    for (double& x : v) x = rng.normal();
    for (double& x : w) x = rng.normal();
    Tensor3 t(d1, d2, d3);
    for (int i = 0; i < d1; ++i)
        for (int j = 0; j < d2; ++j)
            for (int k = 0; k < d3; ++k) t.at(i, j, k) = u[i] * v[j] * w[k];
    return t;
}

}  // namespace

TEST(CpAls, RankOneExact) {
    const Tensor3 t = rank_one_tensor(4, 3, 5, 1);
    const CPFactors f = cp_als(t, 1, {.max_iters = 200, .restarts = 5, .seed = 0});
    EXPECT_LT(f.residual, 1e-10);
}

TEST(CpAls, CountriesFitsAtRankFive) {
    const Tensor3 d = db_tensor(fixtures::countries_db());
    const CPFactors f = cp_als(d, 5, {});
    EXPECT_LT(f.residual, 1e-6);
}

TEST(CpAls, CountriesResistsRankFour) {
    const Tensor3 d = db_tensor(fixtures::countries_db());
    const CPFactors f = cp_als(d, 4, {});
    // Heuristic evidence only: ALS across 20 restarts stays far from an
    // exact fit. Logged rather than treated as a proof of rank > 4.
    if (f.residual <= 1e-3)
        GTEST_LOG_(WARNING) << "rank-4 ALS reached residual " << f.residual;
    EXPECT_GT(f.residual, 1e-3);
}

TEST(CpAls, ResidualNonIncreasingWithinRestart) {
    const Tensor3 d = db_tensor(fixtures::countries_db());
    for (int r : {2, 4, 5}) {
        const CPFactors f = cp_als(d, r, {.max_iters = 100, .restarts = 3, .seed = 5});
        for (std::size_t i = 1; i < f.residual_history.size(); ++i)
            EXPECT_LE(f.residual_history[i], f.residual_history[i - 1] + 1e-10);
    }
}

TEST(CpAls, RankZeroOnlyForZeroTensor) {
    const Tensor3 zero(3, 3, 3);
    const CPFactors f = cp_als(zero, 0, {});
    EXPECT_EQ(f.rank, 0);
    EXPECT_EQ(f.residual, 0.0);
    EXPECT_THROW(cp_als(rank_one_tensor(3, 3, 3, 2), 0, {}), std::invalid_argument);
}

TEST(CpAls, RankAboveCapRejected) {
    const Tensor3 t(2, 2, 2);
    EXPECT_THROW(cp_als(t, 5, {}), std::invalid_argument);
}

TEST(CpAls, DeterministicPerSeed) {
    const Tensor3 d = db_tensor(fixtures::countries_sub_db());
    const CPFactors a = cp_als(d, 3, {.max_iters = 50, .restarts = 4, .seed = 3});
    const CPFactors b = cp_als(d, 3, {.max_iters = 50, .restarts = 4, .seed = 3});
    EXPECT_EQ(a.residual, b.residual);
    EXPECT_EQ(a.a.data, b.a.data);
}

TEST(TensorRankEstimate, CountriesIsFive) {
    const Tensor3 d = db_tensor(fixtures::countries_db());
    const auto estimate = tensor_rank_estimate(d, 6, {});
    ASSERT_TRUE(estimate.has_value());
    EXPECT_EQ(*estimate, 5);
}

TEST(TensorRankEstimate, ZeroTensor) {
    EXPECT_EQ(tensor_rank_estimate(Tensor3(2, 3, 4), 3, {}), 0);
}

TEST(TensorRankEstimate, SingleObjectDbIsFive) {
    const Tensor3 d = db_tensor(fixtures::single_object_db());
    const auto estimate = tensor_rank_estimate(d, 5, {});
    ASSERT_TRUE(estimate.has_value());
    EXPECT_EQ(*estimate, 5);
}

TEST(TensorRankEstimate, ExceedsRmaxIsDistinguished) {
    const Tensor3 d = db_tensor(fixtures::single_object_db());
    EXPECT_FALSE(tensor_rank_estimate(d, 3, {}).has_value());
}

// Heuristic inequality: the ALS estimate should not exceed the counting
// bound when ALS converges. Violations are logged, not fatal, since ALS
// may miss the optimum.
TEST(TensorRankEstimate, EstimateWithinBoundOnFixtures) {
    int violations = 0;
    for (uint64_t seed = 0; seed < 6; ++seed) {
        const Database db = random_database({4, 3, 3, 7}, seed);
        const Tensor3 d = db_tensor(db);
        const int bound = db_rank_upper_bound(db);
        const auto estimate = tensor_rank_estimate(d, bound, {.restarts = 10});
        if (!estimate.has_value() || *estimate > bound) {
            ++violations;
            GTEST_LOG_(WARNING) << "seed " << seed << ": ALS estimate exceeded bound " << bound;
        }
    }
    EXPECT_LE(violations, 6);  // logged only; ALS convergence is not guaranteed
}
