#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "optalloc/constrained_roc.hpp"
#include "optalloc/dgp.hpp"
#include "support/oracles.hpp"

using namespace optalloc;

namespace {

oracle::Binary as_oracle(const ConstrainedProblem& p) {
  return {p.gain, p.cost, p.alpha_treated, p.alpha_base, p.alpha_norm, p.beta_treated, p.beta_base, p.beta_norm};
}

ConstrainedProblem random_problem(std::mt19937_64& gen, std::size_t n, bool ties) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> g0(n), g1(n), c0(n), c1(n);
  for (std::size_t i = 0; i < n; ++i) {
    g0[i] = u(gen);
    g1[i] = ties ? std::round(4 * u(gen)) / 4 : u(gen) + 0.5;
    c0[i] = 0.1 * u(gen);
    c1[i] = c0[i] + (ties ? 0.5 : 0.2 + 0.6 * u(gen));
  }
  return make_constrained_problem(g0, g1, c0, c1, {-2.0, 5.0});
}

}  // namespace

TEST(Threshold, MatchesExhaustiveScan) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const ConstrainedProblem p = random_problem(gen, 30, t % 2 == 0);
    const auto o = as_oracle(p);
    const double a = oracle::alpha_at(o, p.k_domain.hi) + u(gen) * (oracle::alpha_at(o, p.k_domain.lo) - oracle::alpha_at(o, p.k_domain.hi));
    const double k = threshold_search(p, a);
    EXPECT_EQ(k, oracle::threshold(o, a, p.k_domain.lo, p.k_domain.hi));
    EXPECT_LE(alpha_of_k(p, k), a);
    EXPECT_NEAR(alpha_of_k(p, k), oracle::alpha_at(o, k), 1e-12);
    EXPECT_NEAR(beta_of_k(p, k), oracle::beta_at(o, k), 1e-12);
    // Every earlier candidate misses the budget.
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double cand = p.gain[i] / p.cost[i];
      if (cand > p.k_domain.lo && cand < k) {
        EXPECT_GT(oracle::alpha_at(o, cand), a);
      }
    }
  }
}

TEST(Threshold, SingleRow) {
  // One row with ratio 0.5: alpha is 0.75 below the jump and 0.25 from it on.
  const ConstrainedProblem p = make_constrained_problem({0.0}, {0.25}, {0.25}, {0.75}, {0.0, 1.0});
  EXPECT_EQ(threshold_search(p, 0.5), 0.5);
  EXPECT_EQ(threshold_search(p, 0.9), 0.0);
  EXPECT_THROW(threshold_search(p, 0.1), InfeasibleError);
}

TEST(Roc, ConstantScoreIsUninformative) {
  const Dgp& d = find_dgp("uniform-roc");
  const Sample s = d.sample(2000, 21);
  const std::vector<double> p_hat(s.size(), 0.4);
  const RocCurve c = roc_estimate(s.y, p_hat, {0.25, 0.5, 0.75});
  // Without randomization a constant score treats everyone or no one, so
  // every budget below one lands on the jump at 0.4 and detects nothing.
  for (std::size_t g = 0; g < 3; ++g) {
    EXPECT_EQ(c.k_hat[g], 0.4);
    EXPECT_EQ(c.beta_hat[g], 0.0);
  }
}

TEST(Threshold, AlphaIsMonotoneInK) {
  std::mt19937_64 gen(2);
  const ConstrainedProblem p = random_problem(gen, 200, false);
  const StepCurve curve(p);
  double prev = INFINITY;
  for (double k = -2.0; k <= 5.0; k += 0.01) {
    const double a = curve.alpha(k);
    EXPECT_LE(a, prev);
    prev = a;
  }
}

TEST(Threshold, InfeasibleBudgetThrows) {
  const ConstrainedProblem p = make_constrained_problem({0, 0}, {1, 1}, {0.3, 0.3}, {0.6, 0.6}, {0.0, 0.5});
  // Both rows have ratio 1/0.3 and stay treated on all of D, so alpha is 0.6 throughout.
  EXPECT_THROW(threshold_search(p, 0.5), InfeasibleError);
  EXPECT_EQ(threshold_search(p, 0.7), 0.0);
  EXPECT_THROW(threshold_search(p, 1.5), std::invalid_argument);
}

TEST(Threshold, WeightsActLikeReplicatedRows) {
  std::mt19937_64 gen(3);
  const ConstrainedProblem p = random_problem(gen, 20, true);
  std::vector<double> w(20);
  std::vector<double> g0, g1, c0, c1;
  std::uniform_int_distribution<int> count(0, 3);
  for (std::size_t i = 0; i < 20; ++i) {
    w[i] = count(gen);
    for (int r = 0; r < static_cast<int>(w[i]); ++r) {
      g0.push_back(p.beta_base[i]);
      g1.push_back(p.beta_base[i] + p.gain[i]);
      c0.push_back(p.alpha_base[i]);
      c1.push_back(p.alpha_base[i] + p.cost[i]);
    }
  }
  const ConstrainedProblem rep = make_constrained_problem(g0, g1, c0, c1, p.k_domain);
  for (double a : {0.3, 0.5, 0.7}) {
    double ka, kb;
    try {
      ka = threshold_search(rep, a);
    } catch (const InfeasibleError&) {
      EXPECT_THROW(threshold_search(p, a, w), InfeasibleError);
      continue;
    }
    kb = threshold_search(p, a, w);
    EXPECT_EQ(ka, kb);
  }
}

TEST(Roc, UniformDesignClosedForm) {
  const Dgp& d = find_dgp("uniform-roc");
  const Sample s = d.sample(4000, 11);
  std::vector<double> p_hat(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) p_hat[i] = s.x(static_cast<Eigen::Index>(i), 0);
  const RocCurve c = roc_estimate(s.y, p_hat, {0.25});
  EXPECT_NEAR(c.k_hat[0], oracle::uniform_roc_k(0.25), 0.03);
  EXPECT_NEAR(c.beta_hat[0], oracle::uniform_roc_beta(0.25), 0.03);
  EXPECT_NEAR(d.roc->alpha_of_k(0.5), 0.25, 1e-12);
  EXPECT_NEAR(d.roc->beta_of_k(0.5), 0.75, 1e-12);
  EXPECT_NEAR(population_threshold(*d.roc, 0.25), 0.5, 1e-9);
}

TEST(Roc, SlopeOfAlphaByLevelSet) {
  const Dgp& d = find_dgp("uniform-roc");
  SamplingPlan plan;
  plan.budget = 1 << 20;
  plan.seed = 5;
  const auto f = fslope_alpha(d.roc->allocation_model(), 0.5, plan);
  EXPECT_NEAR(f.value, oracle::uniform_roc_f_alpha(0.5), std::max(3.0 * f.se, 1e-3));
  const auto fb = fslope_beta(d.roc->allocation_model(), 0.5, plan);
  // beta(k) = 1 - k^2 has slope -2k.
  EXPECT_NEAR(fb.value, -1.0, std::max(3.0 * fb.se, 1e-3));
}

TEST(Roc, GridRowsAndCsvSchema) {
  const Dgp& d = find_dgp("uniform-roc");
  const Sample s = d.sample(1000, 12);
  std::vector<double> p_hat(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) p_hat[i] = s.x(static_cast<Eigen::Index>(i), 0);
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
  const RocCurve c = roc_estimate(s.y, p_hat, grid);
  std::ostringstream out;
  c.write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "alpha,k_hat,beta_hat,se,lo,hi");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 19);
  for (std::size_t g = 1; g < grid.size(); ++g) EXPECT_GE(c.beta_iso[g], c.beta_iso[g - 1]);
}

TEST(Roc, BootstrapIsSeededAndOrdersBands) {
  const Dgp& d = find_dgp("uniform-roc");
  const Sample s = d.sample(800, 13);
  std::vector<double> p_hat(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) p_hat[i] = s.x(static_cast<Eigen::Index>(i), 0);
  const std::vector<double> grid{0.1, 0.25, 0.5};
  const RocCurve a = roc_bootstrap(s.y, p_hat, grid, 200, 77);
  const RocCurve b = roc_bootstrap(s.y, p_hat, grid, 200, 77);
  EXPECT_EQ(a.to_json(), b.to_json());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    EXPECT_LT(a.band_lo[g], a.band_hi[g]);
    EXPECT_LT(a.sym_lo[g], a.beta_hat[g]);
    EXPECT_GT(a.sym_hi[g], a.beta_hat[g]);
  }
  EXPECT_EQ(a.failed_replicates, 0);
  EXPECT_THROW(roc_bootstrap(s.y, p_hat, grid, 50, 77), std::invalid_argument);
}

TEST(Roc, RejectsBadInput) {
  EXPECT_THROW(roc_estimate({0, 1, 2}, {0.1, 0.2, 0.3}, {0.5}), std::invalid_argument);
  EXPECT_THROW(roc_estimate({0, 1}, {0.1, 1.2}, {0.5}), std::invalid_argument);
  EXPECT_THROW(roc_estimate({0, 1}, {0.1, 0.2}, {0.0}), std::invalid_argument);
  EXPECT_THROW(make_constrained_problem({0}, {1}, {1}, {0.5}, {0, 1}), std::invalid_argument);
}

TEST(LimitProcess, DrawVarianceMatchesInfluenceVariance) {
  const Dgp& d = find_dgp("uniform-roc");
  LimitOptions o;
  o.seed = 3;
  o.B = 4000;
  o.plan.budget = 1 << 20;
  const auto L = simulate_limit_process(*d.roc, {0.25}, o);
  std::vector<double> col(L.draws.data(), L.draws.data() + L.draws.rows());
  double m = 0, v = 0;
  for (double x : col) m += x;
  m /= col.size();
  for (double x : col) v += (x - m) * (x - m);
  v /= col.size() - 1;
  EXPECT_NEAR(v / L.if_variance[0], 1.0, 0.1);
  EXPECT_NEAR(L.f_alpha[0], -1.0, 0.01);
}

TEST(Roc, SlopeAgreesWithFiniteDifferenceOnLogisticDesign) {
  const Dgp& d = find_dgp("logistic-2d");
  const RocModel& m = *d.roc;
  SamplingPlan plan;
  plan.budget = 1 << 22;
  plan.seed = 14;
  plan.proposal = m.proposal;
  const double k = 0.4, h = 1e-4;
  const double fd = (m.alpha_of_k(k + h) - m.alpha_of_k(k - h)) / (2 * h);
  const auto f = fslope_alpha(m.allocation_model(), k, plan);
  EXPECT_NEAR(f.value, fd, std::max(3.0 * f.se, 1e-3 * std::abs(fd)));
  const double fdb = (m.beta_of_k(k + h) - m.beta_of_k(k - h)) / (2 * h);
  const auto fb = fslope_beta(m.allocation_model(), k, plan);
  EXPECT_NEAR(fb.value, fdb, std::max(3.0 * fb.se, 1e-3 * std::abs(fdb)));
}

TEST(Roc, OracleScoreDominatesTheDiagonal) {
  const Dgp& d = find_dgp("uniform-roc");
  const std::size_t n = 3000;
  const Sample s = d.sample(n, 15);
  std::vector<double> p_hat(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) p_hat[i] = s.x(static_cast<Eigen::Index>(i), 0);
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
  const RocCurve c = roc_estimate(s.y, p_hat, grid);
  for (std::size_t g = 0; g < grid.size(); ++g) EXPECT_GE(c.beta_iso[g], grid[g] - 2.0 / std::sqrt(double(n)));
}
