#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "optalloc/dgp.hpp"
#include "optalloc/first_stage.hpp"
#include "support/oracles.hpp"

using namespace optalloc;

namespace {

Sample line_sample(std::size_t n, std::uint64_t seed, double noise = 0.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  Sample s;
  s.num_arms = 2;
  s.x.resize(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(gen);
    s.x(static_cast<Eigen::Index>(i), 0) = x;
    s.arm.push_back(u(gen) < 0.5 ? 0 : 1);
    s.y.push_back(1.0 + 2.0 * x + noise * z(gen));
  }
  return s;
}

}  // namespace

TEST(Folds, PartitionWithBalancedSizes) {
  for (std::size_t n : {10u, 101u, 1000u}) {
    const FoldPlan plan = make_folds(n, 5, 3);
    std::vector<std::size_t> sizes(5, 0);
    for (int a : plan.assignment) {
      ASSERT_GE(a, 0);
      ASSERT_LT(a, 5);
      ++sizes[static_cast<std::size_t>(a)];
    }
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    EXPECT_LE(*hi - *lo, 1u);
    for (int k = 0; k < 5; ++k) EXPECT_EQ(plan.rows_in(k).size() + plan.rows_outside(k).size(), n);
  }
}

TEST(Folds, SeedDeterminesAssignment) {
  EXPECT_EQ(make_folds(500, 5, 9).assignment, make_folds(500, 5, 9).assignment);
  EXPECT_NE(make_folds(500, 5, 9).assignment, make_folds(500, 5, 10).assignment);
  EXPECT_THROW(make_folds(3, 5, 1), std::invalid_argument);
  EXPECT_THROW(make_folds(10, 1, 1), std::invalid_argument);
}

TEST(CrossFit, EachFitExcludesItsFold) {
  const Sample s = line_sample(300, 1, 0.1);
  const FoldPlan plan = make_folds(s.size(), 4, 2);
  const CrossFit cf = cross_fit(s, plan, {FitTarget::regression, 1, FitOptions{}});
  for (int k = 0; k < 4; ++k) {
    const auto& rows = cf.fits[static_cast<std::size_t>(k)].train_rows();
    for (std::size_t i : rows) EXPECT_NE(plan.assignment[i], k);
  }
  EXPECT_NO_THROW(cf.check_no_leakage());
}

TEST(CrossFit, LeakageCanary) {
  // A fit trained on the full sample and relabeled as a fold fit must be caught.
  const Sample s = line_sample(200, 3, 0.1);
  const FoldPlan plan = make_folds(s.size(), 2, 4);
  CrossFit cf{plan, {}};
  const RegressorFit full = fit_regression(s, 0, FitOptions{});
  cf.fits = {full.with_fold(0), full.with_fold(1)};
  EXPECT_THROW(cf.check_no_leakage(), LeakageError);
}

TEST(Regression, LocalLinearReproducesLines) {
  const Sample s = line_sample(400, 5);
  const RegressorFit fit = fit_regression(s, 0, FitOptions{});
  for (double x : {0.05, 0.3, 0.77, 0.99}) EXPECT_NEAR(fit.predict(Point(&x, 1)), 1.0 + 2.0 * x, 1e-9);
}

TEST(Regression, NadarayaWatsonIsBiasedAtTheBoundary) {
  const Sample s = line_sample(2000, 6);
  FitOptions o;
  o.kind = RegressorKind::nadaraya_watson;
  o.bandwidth = {0.1};
  const double x = 0.0;
  const double nw = fit_regression(s, 0, o).predict(Point(&x, 1));
  EXPECT_GT(nw, 1.0 + 0.05);
}

TEST(Regression, OracleReturnsTruth) {
  const Sample s = line_sample(50, 7);
  FitOptions o;
  o.kind = RegressorKind::oracle;
  o.oracle = [](Point x) { return std::sin(x[0]); };
  const double x = 0.4;
  EXPECT_EQ(fit_regression(s, 0, o).predict(Point(&x, 1)), std::sin(0.4));
  FitOptions missing;
  missing.kind = RegressorKind::oracle;
  EXPECT_THROW(fit_regression(s, 0, missing), std::invalid_argument);
}

TEST(Regression, LogisticIndexRecoversCoefficients) {
  const Dgp& d = find_dgp("logistic-2d");
  const Sample s = d.sample(20000, 8);
  FitOptions o;
  o.kind = RegressorKind::logistic_index;
  const RegressorFit fit = fit_regression(s, 0, o);
  const std::vector<double> theta{-0.5, 1.0, -0.75};
  ASSERT_EQ(fit.coefficients().size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) {
    const double se = std::sqrt(fit.coefficient_covariance()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)));
    EXPECT_NEAR(fit.coefficients()[j], theta[j], 4.0 * se);
  }
}

TEST(Regression, PropensityIsClipped) {
  Sample s = line_sample(300, 9);
  std::fill(s.arm.begin(), s.arm.end(), 1);
  s.arm[0] = 0;
  FitOptions o;
  o.clip = 0.01;
  const RegressorFit p = fit_propensity(s, 1, o);
  for (double x : {0.1, 0.5, 0.9}) {
    const double v = p.predict(Point(&x, 1));
    EXPECT_GE(v, 0.01);
    EXPECT_LE(v, 0.99);
  }
  o.clip = 0.7;
  EXPECT_THROW(fit_propensity(s, 1, o), std::invalid_argument);
}

TEST(Regression, SupNormShrinksWithSampleSize) {
  const ScalarFn truth = [](Point x) { return oracle::logistic(4.0 * (x[0] - 0.5)); };
  std::vector<double> ns, errs;
  for (std::size_t n : {500u, 4000u, 32000u}) {
    std::mt19937_64 gen(n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> z;
    Sample s;
    s.num_arms = 1;
    s.x.resize(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) {
      s.x(static_cast<Eigen::Index>(i), 0) = u(gen);
      s.arm.push_back(0);
      s.y.push_back(truth(row(s.x, static_cast<Eigen::Index>(i))) + 0.3 * z(gen));
    }
    const auto rep = supnorm_diagnostic(fit_regression(s, 0, FitOptions{}), truth, grid_1d(0.05, 0.95, 91));
    ns.push_back(static_cast<double>(n));
    errs.push_back(rep.max_abs_error);
  }
  EXPECT_LT(errs[2], errs[0]);
  EXPECT_LT(supnorm_rate(ns, errs), 0.0);
}

TEST(Regression, RejectsBadOptions) {
  const Sample s = line_sample(100, 10);
  FitOptions o;
  o.bandwidth = {-1.0};
  EXPECT_THROW(fit_regression(s, 0, o), std::invalid_argument);
  EXPECT_THROW(fit_regression(s, 3, FitOptions{}), std::invalid_argument);
  EXPECT_THROW(regressor_kind_from_string("boosted-trees"), std::invalid_argument);
  FitOptions cost;
  cost.response = Response::cost;
  EXPECT_THROW(fit_regression(s, 0, cost), std::invalid_argument);
}
