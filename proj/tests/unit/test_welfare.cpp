#include <gtest/gtest.h>

#include <random>

#include "optalloc/welfare.hpp"
#include "support/oracles.hpp"

using namespace optalloc;

namespace {

struct Instance {
  std::vector<double> lambda;
  ArmValues values;
};

Instance random_instance(std::mt19937_64& gen, Eigen::Index n = 40, Eigen::Index J = 3) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.1, 2.0);
  Instance in;
  in.values.resize(n, J);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < J; ++j) in.values(i, j) = z(gen);
  for (Eigen::Index j = 0; j < J; ++j) in.lambda.push_back(u(gen));
  return in;
}

std::vector<double> flat(const ArmValues& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST(Welfare, MatchesDirectLoop) {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 50; ++t) {
    const auto in = random_instance(gen);
    EXPECT_NEAR(welfare_potential(Weights(in.lambda), in.values),
                oracle::welfare(in.lambda, flat(in.values), static_cast<std::size_t>(in.values.rows())), 1e-14);
  }
}

TEST(Welfare, HomogeneousInLambdaExactlyForPowersOfTwo) {
  std::mt19937_64 gen(2);
  for (int t = 0; t < 200; ++t) {
    const auto in = random_instance(gen);
    const Weights w(in.lambda);
    const double base = welfare_potential(w, in.values);
    for (double a : {0.25, 2.0, 8.0}) EXPECT_EQ(welfare_potential(w.scaled(a), in.values), a * base);
    const double a = 3.7;
    EXPECT_NEAR(welfare_potential(w.scaled(a), in.values), a * base, 1e-12 * std::max(1.0, std::abs(a * base)));
  }
}

TEST(Welfare, HomogeneousInOutcomes) {
  std::mt19937_64 gen(3);
  const auto in = random_instance(gen);
  const Weights w(in.lambda);
  EXPECT_NEAR(welfare_potential(w, ArmValues(in.values * 5.5)), 5.5 * welfare_potential(w, in.values), 1e-12);
}

TEST(Welfare, ArgmaxInvariantUnderPositiveScaling) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(0.01, 100.0);
  for (int t = 0; t < 200; ++t) {
    const auto in = random_instance(gen, 1, 4);
    const std::span<const double> v(in.values.data(), 4);
    const double a = u(gen);
    std::vector<double> scaled = in.lambda;
    for (double& l : scaled) l *= a;
    EXPECT_EQ(argmax_arm(in.lambda, v), argmax_arm(scaled, v));
  }
}

TEST(Welfare, TiesGoToSmallestIndex) {
  const std::vector<double> lambda{1.0, 2.0, 1.0};
  const std::vector<double> v{2.0, 1.0, 2.0};
  EXPECT_EQ(argmax_arm(lambda, v), 0u);
  const std::vector<double> v2{1.0, 1.0, 2.0};
  EXPECT_EQ(argmax_arm(lambda, v2), 1u);
}

TEST(Welfare, ConvexInLambdaAndOutcomes) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const auto a = random_instance(gen);
    const auto b = random_instance(gen);
    const double s = u(gen);
    std::vector<double> mix(a.lambda.size());
    for (std::size_t j = 0; j < mix.size(); ++j) mix[j] = s * a.lambda[j] + (1 - s) * b.lambda[j];
    const ArmValues& g = a.values;
    EXPECT_LE(welfare_potential(Weights(mix), g),
              s * welfare_potential(Weights(a.lambda), g) + (1 - s) * welfare_potential(Weights(b.lambda), g) + 1e-12);
    const ArmValues gmix = s * a.values + (1 - s) * b.values;
    const Weights w(a.lambda);
    EXPECT_LE(welfare_potential(w, gmix),
              s * welfare_potential(w, a.values) + (1 - s) * welfare_potential(w, b.values) + 1e-12);
  }
}

TEST(Welfare, SubgradientInequality) {
  std::mt19937_64 gen(6);
  for (int t = 0; t < 200; ++t) {
    const auto a = random_instance(gen);
    const auto b = random_instance(gen);
    const auto p = subgradient(Weights(a.lambda), a.values);
    double lin = welfare_potential(Weights(a.lambda), a.values);
    for (std::size_t j = 0; j < p.size(); ++j) lin += p[j] * (b.lambda[j] - a.lambda[j]);
    EXPECT_GE(welfare_potential(Weights(b.lambda), a.values), lin - 1e-12);
    // Euler identity for a positively homogeneous function.
    double euler = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) euler += p[j] * a.lambda[j];
    EXPECT_NEAR(euler, welfare_potential(Weights(a.lambda), a.values), 1e-12);
  }
}

TEST(Welfare, FrechetQuotientsConvergeAwayFromKinks) {
  std::mt19937_64 gen(7);
  const auto in = random_instance(gen, 30, 3);
  ArmValues dv = ArmValues::Ones(30, 3);
  const std::vector<double> dl{0.3, -0.2, 0.1};
  const std::vector<double> steps{1e-2, 1e-3, 1e-4, 1e-5};
  const auto r = frechet_directional_check(Weights(in.lambda), in.values, dl, dv, steps);
  // Moving lambda and g together leaves a t dlambda dg term, so gaps are O(t).
  EXPECT_LT(r.gaps.back(), 5e-6);
  EXPECT_LT(r.gaps.back(), r.gaps.front());
  EXPECT_TRUE(r.converging);
}

TEST(Welfare, FrechetFlagsAKink) {
  // Two arms tie exactly in every row, so the directional derivative of the
  // max is one-sided and the two-sided formula does not hold in general.
  ArmValues v(4, 2);
  v << 1, 1, 2, 2, 3, 3, 4, 4;
  ArmValues dv(4, 2);
  dv << 0, 1, 0, 1, 0, 1, 0, 1;
  const std::vector<double> dl{0.0, 0.0};
  const std::vector<double> steps{1e-1, 1e-2, 1e-3};
  const auto r = frechet_directional_check(Weights{1.0, 1.0}, v, dl, dv, steps);
  EXPECT_GT(r.max_abs_gap, 0.5);
}

TEST(Welfare, OptimalPolicyAttainsPotential) {
  Sample s;
  s.x.resize(5, 1);
  s.x << -2, -1, 0, 1, 2;
  s.arm = {0, 1, 0, 1, 0};
  s.y = {0, 0, 0, 0, 0};
  const ArmFunctions arms{{[](Point x) { return x[0]; }, [](Point x) { return -x[0]; }}, {}};
  const Weights w{1.0, 1.0};
  EXPECT_NEAR(welfare_value(s, w, arms, optimal_policy(w, arms)), welfare_potential(w, arms, s), 1e-15);
  EXPECT_NEAR(welfare_potential(w, arms, s), 6.0 / 5.0, 1e-15);
}

TEST(Welfare, RejectsBadInput) {
  ArmValues v(2, 2);
  v << 1, 2, 3, 4;
  EXPECT_THROW(welfare_potential(Weights{1.0}, v), std::invalid_argument);
  EXPECT_THROW(welfare_potential(Weights{1.0, 1.0}, ArmValues(0, 2)), std::invalid_argument);
  const Policy bad = Policy::from_function(2, [](Point) { return std::vector<double>{0.7, 0.7}; });
  const double x = 0.0;
  EXPECT_THROW(bad.assign(Point(&x, 1)), std::invalid_argument);
  Sample s;
  s.x = RowMatrix::Zero(2, 1);
  s.arm = {0, 2};
  s.y = {0, 0};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}
