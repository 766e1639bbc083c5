#include <gtest/gtest.h>

#include <numbers>

#include "optalloc/experiments.hpp"
#include "optalloc/levelset.hpp"
#include "support/oracles.hpp"

using namespace optalloc;

namespace {

SamplingPlan plan_with(std::uint64_t budget, std::uint64_t seed, Proposal proposal = {}) {
  SamplingPlan p;
  p.budget = budget;
  p.seed = seed;
  p.proposal = std::move(proposal);
  return p;
}

}  // namespace

TEST(LevelSet, CirclePerimeters) {
  const NamedField rn = named_field("radial-norm");
  const BandOptions band{0.06 * rn.field.domain.diameter()};
  for (double c : {0.5, 1.0, 1.5}) {
    const auto e = level_set_integral(rn.field, rn.density, c, plan_with(1'000'000, 3), band);
    EXPECT_NEAR(e.value / (2 * std::numbers::pi * c), 1.0, 0.01) << "c = " << c;
  }
}

TEST(LevelSet, GaussianHalfspaceLineMass) {
  const NamedField gh = named_field("gaussian-halfspace");
  const auto e = hadamard_derivative_k1(gh.field, gh.density, gh.direction, 0.0, plan_with(1 << 20, 4, gh.proposal));
  EXPECT_NEAR(e.value, oracle::phi(0.0), 0.01 * oracle::phi(0.0));
  EXPECT_NEAR(oracle::phi(0.0), 0.398942, 1e-6);
}

TEST(LevelSet, LinearFieldIsExactUpToSampling) {
  // Zero set of x1 + 2 x2 in [-1,1]^2 has length sqrt(5) and |grad h| = sqrt(5).
  const NamedField lin = named_field("linear");
  const auto e = level_set_integral(lin.field, lin.density, 0.0, plan_with(1 << 20, 5));
  EXPECT_NEAR(e.value, 1.0, 0.01);
}

TEST(LevelSet, LogisticIndexMatchesLineFormula) {
  const NamedField li = named_field("logistic-index");
  const double t0 = -0.5, norm = std::hypot(1.0, -0.75);
  const double expected = 4.0 * oracle::phi(t0 / norm) / norm;
  EXPECT_NEAR(*li.exact_derivative, expected, 1e-14);
  const auto e = hadamard_derivative_k1(li.field, li.density, li.direction, li.level, plan_with(1 << 20, 6, li.proposal));
  EXPECT_NEAR(e.value / expected, 1.0, 0.01);
}

TEST(LevelSet, SortingOperatorMatchesGaussianTail) {
  const NamedField gh = named_field("gaussian-halfspace");
  for (double c : {-1.0, 0.0, 0.5}) {
    const Estimate e = sorting_operator(gh.field, gh.density, c, plan_with(1 << 18, 7, gh.proposal));
    const double expected = oracle::simpson(oracle::phi, c, 5.0) * (oracle::simpson(oracle::phi, -5.0, 5.0));
    EXPECT_NEAR(e.value, expected, 1e-3) << "c = " << c;
  }
}

TEST(LevelSet, AreaMatricesAgreeWithGramVolume) {
  for (const auto& [name, A] : area_check_matrices()) {
    std::vector<std::vector<double>> cols(static_cast<std::size_t>(A.cols()));
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      for (Eigen::Index r = 0; r < A.rows(); ++r) cols[static_cast<std::size_t>(j)].push_back(A(r, j));
    const double vol = oracle::gram_volume(cols);
    const AreaReport rep = linear_area_check(A, plan_with(1'000'000, 8));
    EXPECT_NEAR(rep.formula, vol, 1e-12 * vol) << name;
    EXPECT_LT(std::abs(rep.estimate - vol) / vol, 0.01) << name;
  }
}

TEST(LevelSet, ShearedParallelogramArea) {
  // Columns (1,0,1/4) and (1/2,1,0): Gram determinant 1.0625 * 1.25 - 0.25 = 1.078125.
  RowMatrix A(3, 2);
  A << 1, 0.5, 0, 1, 0.25, 0;
  const AreaReport rep = linear_area_check(A, plan_with(1'000'000, 9));
  EXPECT_NEAR(rep.formula, std::sqrt(1.078125), 1e-14);
}

TEST(LevelSet, FdQuotientsApproachFormula) {
  const NamedField gh = named_field("gaussian-halfspace");
  const double ts[] = {1e-1, 1e-2, 1e-3};
  const auto r = hadamard_fd_consistency(gh.field, gh.density, gh.direction, 0.0, ts, plan_with(1 << 22, 10, gh.proposal));
  ASSERT_TRUE(r.formula.has_value());
  EXPECT_GT(r.gaps[0], r.gaps[1]);
  // The quotient at t is (Phi(t) - 1/2)/t, below phi(0) by about phi(0) t^2 / 6.
  EXPECT_NEAR(r.quotients[0], (0.5 * std::erf(0.1 / std::sqrt(2.0))) / 0.1, 5e-4);
}

TEST(LevelSet, VectorQuotientsAreCauchy) {
  const NamedField gh = named_field("gaussian-halfspace");
  VectorField id2{"identity-2d", Box::cube(2, -5.0, 5.0), 2, [](Point x, std::span<double> h) {
                    h[0] = x[0];
                    h[1] = x[1];
                  }};
  const double level[] = {0.0, 0.0};
  const double ts[] = {1e-1, 1e-2, 1e-3};
  const auto r = hadamard_fd_consistency(id2, gh.density, [](Point, std::span<double> h) { h[0] = h[1] = 1.0; },
                                         level, ts, plan_with(1 << 22, 11, gh.proposal));
  EXPECT_TRUE(r.cauchy);
  EXPECT_NEAR(r.quotients[1], 2.0 * oracle::phi(0.0) * 0.5, 0.02);
}

TEST(LevelSet, SameSeedSameEstimate) {
  const NamedField rn = named_field("radial-norm");
  const auto a = level_set_integral(rn.field, rn.density, 1.0, plan_with(1 << 16, 12));
  const auto b = level_set_integral(rn.field, rn.density, 1.0, plan_with(1 << 16, 12));
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.se, b.se);
}

TEST(LevelSet, CriticalLevelIsFlaggedInScan) {
  Field flat{"flat-left", Box::cube(2, -1.0, 1.0), [](Point x) { return x[0] > 0 ? x[0] * x[0] : 0.0; },
             [](Point x, std::span<double> g) {
               g[0] = x[0] > 0 ? 2 * x[0] : 0.0;
               g[1] = 0.0;
             }};
  const ScalarFn one = [](Point) { return 1.0; };
  EXPECT_THROW(level_set_integral(flat, one, 0.0, plan_with(1 << 14, 13)), CriticalLevelError);
  const double levels[] = {0.0, 0.25, 0.3};
  const auto scan = level_set_continuity_scan(flat, one, levels, plan_with(1 << 16, 13));
  EXPECT_TRUE(scan.rows[0].critical);
  EXPECT_FALSE(scan.rows[1].critical);
  // On {x0^2 = c} the integrand 1/|grad h| = 1/(2 sqrt c) over a segment of length 2.
  EXPECT_NEAR(scan.rows[1].value, 1.0 / std::sqrt(0.25), 0.03);
}

TEST(LevelSet, RejectsBadInput) {
  Box b;
  b.lower = {0.0};
  b.upper = {0.0};
  EXPECT_THROW(b.validate(), std::invalid_argument);
  EXPECT_THROW(named_field("no-such-field"), std::invalid_argument);
  SamplingPlan p = plan_with(0, 1);
  EXPECT_THROW(p.validate(2), std::invalid_argument);
}
