#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "optalloc/common.hpp"
#include "optalloc/first_stage.hpp"
#include "optalloc/levelset.hpp"
#include "optalloc/rng.hpp"
#include "optalloc/welfare.hpp"

namespace optalloc {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Empirical binary constrained allocation. Row i is treated at threshold k
/// when gain_i - k cost_i > 0, evaluated as gain_i / cost_i > k. With optional bootstrap weights w,
///   alpha(k) = sum_i w_i [alpha_treated_i 1(treated) + alpha_base_i] / sum_i w_i alpha_norm_i
/// and beta(k) likewise.
struct ConstrainedProblem {
  std::vector<double> gain;
  std::vector<double> cost;
  std::vector<double> alpha_treated, alpha_base, alpha_norm;
  std::vector<double> beta_treated, beta_base, beta_norm;
  Interval k_domain;

  std::size_t size() const { return gain.size(); }
  void validate() const;
};

/// Plug-in problem from fitted arm means g_hat and costs c_hat evaluated at
/// the sample rows: gain = g1 - g0, cost = c1 - c0 (must be > 0), and outer
/// integrals (1/n) sum of (c1 - c0) 1(...) + c0 etc.
ConstrainedProblem make_constrained_problem(const std::vector<double>& g0, const std::vector<double>& g1,
                                           const std::vector<double>& c0, const std::vector<double>& c1,
                                           Interval k_domain);

/// ROC specialization: treated when p_hat > k on D = [0,1], alpha normalized
/// by the count of y = 0 and beta by the count of y = 1.
ConstrainedProblem make_roc_problem(const std::vector<double>& y, const std::vector<double>& p_hat);

double alpha_of_k(const ConstrainedProblem& problem, double k, std::span<const double> weights = {});
double beta_of_k(const ConstrainedProblem& problem, double k, std::span<const double> weights = {});

/// k_hat = inf{k in D : alpha(k) <= alpha}, resolved to the exact jump point.
double threshold_search(const ConstrainedProblem& problem, double alpha, std::span<const double> weights = {});

/// Sorted view of a problem for repeated threshold searches (bootstrap).
class StepCurve {
 public:
  StepCurve(const ConstrainedProblem& problem, std::span<const double> weights = {});
  double alpha(double k) const;
  double beta(double k) const;
  double threshold(double alpha) const;
  // Reweights rows without resorting; weights indexed by original row.
  void reweight(std::span<const double> weights);

 private:
  void rebuild();
  const ConstrainedProblem* problem_;
  std::vector<std::size_t> order_;   // rows sorted by ratio gain/cost
  std::vector<double> ratio_;        // sorted ratios
  std::vector<double> weight_;       // weights in sorted order
  std::vector<double> alpha_tail_;   // alpha_tail_[j] = sum_{r >= j} w a
  std::vector<double> beta_tail_;
  double alpha_base_ = 0.0, beta_base_ = 0.0, alpha_norm_ = 1.0, beta_norm_ = 1.0;
};

struct RocCurve {
  std::vector<double> alpha_grid;
  std::vector<double> k_hat;
  std::vector<double> beta_hat;
  std::vector<double> beta_iso;
  std::vector<double> se;
  std::vector<double> band_lo, band_hi;   // basic percentile band
  std::vector<double> sym_lo, sym_hi;     // symmetrized band
  std::size_t n = 0;
  double p_bar = 0.0;
  std::string method = "influence";
  int replicates = 0;
  int failed_replicates = 0;
  double level = 0.95;

  void write_csv(std::ostream& out) const;
  std::string to_json() const;
};

void validate_alpha_grid(const std::vector<double>& alpha_grid);

RocCurve roc_estimate(const std::vector<double>& y, const std::vector<double>& p_hat,
                      const std::vector<double>& alpha_grid);
RocCurve roc_estimate(const Sample& sample, const RegressorFit& p_fit, const std::vector<double>& alpha_grid);

/// Refit-free bootstrap: rows are resampled with multinomial counts while the
/// fitted scores p_hat stay fixed.
RocCurve roc_bootstrap(const std::vector<double>& y, const std::vector<double>& p_hat,
                       const std::vector<double>& alpha_grid, int B, std::uint64_t seed, double level = 0.95);
RocCurve roc_bootstrap(const Sample& sample, const RegressorFit& p_fit, const std::vector<double>& alpha_grid,
                       int B, std::uint64_t seed, double level = 0.95);
/// Same, with caller-supplied replicate weights (one row per replicate).
RocCurve roc_bootstrap_with_weights(const std::vector<double>& y, const std::vector<double>& p_hat,
                                    const std::vector<double>& alpha_grid, const RowMatrix& weights,
                                    double level = 0.95);

/// Population description for the level-set slopes: treated when
/// gain_star(x) - k cost_star(x) > 0, outer integrands alpha_treated(x) and
/// beta_treated(x) against the covariate density, divided by the norms.
struct BinaryAllocationModel {
  Box domain;
  ScalarFn density;
  Proposal proposal;
  ScalarFn gain_star;
  GradientFn gain_star_grad;
  ScalarFn cost_star;
  GradientFn cost_star_grad;
  ScalarFn alpha_treated;
  ScalarFn beta_treated;
  double alpha_base = 0.0, beta_base = 0.0;
  double alpha_norm = 1.0, beta_norm = 1.0;
};

/// f_alpha(k) = d alpha / dk = -(1/norm) int_{Delta*=0} alpha_treated cost_star mu' / |grad Delta*|.
LevelSetEstimate fslope_alpha(const BinaryAllocationModel& model, double k, const SamplingPlan& plan,
                              const BandOptions& band = {});
LevelSetEstimate fslope_beta(const BinaryAllocationModel& model, double k, const SamplingPlan& plan,
                             const BandOptions& band = {});
// Population alpha(k), beta(k) through the sorting operator.
Estimate population_alpha(const BinaryAllocationModel& model, double k, const SamplingPlan& plan);
Estimate population_beta(const BinaryAllocationModel& model, double k, const SamplingPlan& plan);

/// Analytic ROC data-generating process used by the limit simulation.
struct RocModel {
  std::string name;
  Box domain;
  ScalarFn density;
  Proposal proposal;
  ScalarFn p;
  GradientFn p_grad;
  double p_bar = 0.0;
  std::function<double(double)> alpha_of_k;  // population, normalized
  std::function<double(double)> beta_of_k;
  // Draws (x, y) from the model.
  std::function<void(Rng&, std::span<double>, double&)> draw;
  // Logistic index coefficients (intercept first) when the parametric first stage applies.
  std::optional<std::vector<double>> theta;

  BinaryAllocationModel allocation_model() const;
};

double population_threshold(const RocModel& model, double alpha);

enum class FirstStage { none, parametric };

struct LimitProcessDraws {
  std::vector<double> alpha_grid;
  std::vector<double> k;
  std::vector<double> beta;
  std::vector<double> f_alpha, f_beta;
  // Variance of the correctly specified influence function at each alpha.
  std::vector<double> if_variance;
  RowMatrix draws;
  RowMatrix empirical_term;
  RowMatrix first_stage_term;
  double t_Q = 1.0;
  double t_Delta = 0.0;
};

struct LimitOptions {
  FirstStage first_stage = FirstStage::none;
  int B = 2000;
  std::uint64_t seed = 0;
  // Sample size used to estimate the influence-term covariance.
  std::size_t covariance_draws = 200000;
  SamplingPlan plan;
  // Overrides the weights implied by the first stage (t_Q = 1, t_Delta = 0 or 1).
  std::optional<double> t_Q, t_Delta;
};

LimitProcessDraws simulate_limit_process(const RocModel& model, const std::vector<double>& alpha_grid,
                                         const LimitOptions& options);

}  // namespace optalloc
