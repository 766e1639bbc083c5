#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "optalloc/common.hpp"
#include "optalloc/dgp.hpp"
#include "optalloc/first_stage.hpp"
#include "optalloc/welfare.hpp"

namespace optalloc {

struct WelfareEstimate {
  double point = 0.0;
  double se = 0.0;
  std::size_t n_eval = 0;
  std::vector<double> score_values;
  std::vector<double> fold_points;
  std::string method;

  std::string to_json() const;
};

/// AIPW score with held-out nuisances:
///   psi_i = sum_j lambda_j phi_j(X_i) [g_j(X_i) + D_ij / p_j(X_i) (Y_i - g_j(X_i))]
/// where phi is the smallest-index argmax of lambda_j g_j(X_i). `g` and `p`
/// are n x (J+1) matrices of held-out predictions.
WelfareEstimate dml_from_values(const Sample& sample, const Weights& lambda, const FoldPlan& plan,
                                const ArmValues& g, const ArmValues& p, double clip = 1e-3);
WelfareEstimate dml_estimate(const Sample& sample, const Weights& lambda, const FoldPlan& plan,
                             const std::vector<CrossFit>& g_fits, const std::vector<CrossFit>& p_fits,
                             double clip = 1e-3);

/// Sample analog (1/n) sum_i max_j lambda_j g_j(X_i); the standard error is
/// the naive one and is not claimed valid.
WelfareEstimate plugin_from_values(const Sample& sample, const Weights& lambda, const FoldPlan& plan,
                                   const ArmValues& g);
WelfareEstimate plugin_estimate(const Sample& sample, const Weights& lambda, const FoldPlan& plan,
                                const std::vector<CrossFit>& g_fits);

struct DmlFits {
  FoldPlan plan;
  std::vector<CrossFit> g;
  std::vector<CrossFit> p;
};

/// One outcome fit and one propensity fit per arm and fold.
DmlFits fit_dml_nuisances(const Sample& sample, int K, std::uint64_t seed, const FitOptions& g_options,
                          const FitOptions& p_options);

ArmValues held_out_values(const Sample& sample, const std::vector<CrossFit>& fits);

enum class FirstStageMode { oracle, injected, kernel };

FirstStageMode first_stage_mode_from_string(const std::string& name);

struct FirstStageSpec {
  FirstStageMode mode = FirstStageMode::oracle;
  // Injected errors: g_hat_j = g_j + g_scale n^-rate e_j(x), p_hat_j = p_j + p_scale n^-rate r_j(x).
  double g_scale = 0.5;
  double p_scale = 0.1;
  double rate = 0.25;
  int folds = 5;
  FitOptions g_options;
  FitOptions p_options;
};

/// All terms are sqrt(n)-scaled; per-n entries average over replicates.
struct OrthogonalityReport {
  std::vector<std::size_t> n;
  std::vector<double> delta;       // mean |Delta|
  std::vector<double> delta1;      // mean |Delta_1|
  std::vector<double> delta2;      // mean |Delta_2|
  std::vector<double> delta2_1;    // mean |Delta_2^1|
  std::vector<double> delta2_2;    // mean |Delta_2^2|
  std::vector<double> delta3;      // mean |Delta_3|
  std::vector<double> dml_bias;    // sqrt(n) |mean(beta_dml - beta_oracle_score)|
  std::vector<double> plugin_bias; // sqrt(n) |mean(beta_plugin - gamma)|
  std::vector<double> dml_bias_se, plugin_bias_se;
  double gamma = 0.0;
  int reps = 0;
  // Log-log slopes against n, keyed by the field names above.
  std::vector<std::pair<std::string, double>> slopes;
  // Delta_2 does not shrink along the ladder (slope >= -0.1).
  bool margin_flag = false;

  double slope(const std::string& key) const;
  std::string to_json() const;
};

OrthogonalityReport orthogonality_diagnostic(const Dgp& dgp, const Weights& lambda,
                                             const std::vector<std::size_t>& n_ladder, int reps,
                                             const FirstStageSpec& first_stage, std::uint64_t seed);

struct RegretRow {
  std::size_t n = 0;
  double mean_regret = 0.0;
  double se = 0.0;
  double slope_so_far = 0.0;  // 0 for the first row
  double sqrt_n_regret = 0.0;
};

struct RegretTable {
  std::vector<RegretRow> rows;
  double slope = 0.0;
  double min_regret = 0.0;  // smallest single-replicate regret seen
  void write_csv(std::ostream& out) const;
};

/// Population regret gamma(lambda, g) - gamma(lambda, g, phi_hat) of the
/// plug-in rule phi_hat = argmax lambda_j g_hat_j with full-sample fits.
RegretTable regret_experiment(const Dgp& dgp, const Weights& lambda, const std::vector<std::size_t>& n_ladder,
                              int reps, const FitOptions& learner, std::uint64_t seed);

struct MarginReport {
  std::vector<double> t;
  std::vector<double> ratio;  // P(|Delta(X)| < t) / t
  double max_over_min = 0.0;
  std::size_t n = 0;
};

/// Delta(X) is the gap between the two largest lambda_j g_j(X).
MarginReport margin_diagnostic(const Dgp& dgp, const Weights& lambda, const std::vector<double>& t_grid,
                               std::size_t n, std::uint64_t seed);

}  // namespace optalloc
