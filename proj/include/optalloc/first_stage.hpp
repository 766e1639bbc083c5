#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "optalloc/common.hpp"
#include "optalloc/welfare.hpp"

namespace optalloc {

enum class RegressorKind { nadaraya_watson, local_linear, logistic_index, oracle };

std::string to_string(RegressorKind kind);
RegressorKind regressor_kind_from_string(const std::string& name);

// Which column of the sample is regressed on x.
enum class Response { outcome, cost };

struct FitOptions {
  RegressorKind kind = RegressorKind::local_linear;
  // Per-coordinate bandwidth; one entry is broadcast. Empty means the
  // Silverman reference rule.
  std::vector<double> bandwidth;
  // Multiplies the automatic bandwidth (ignored for explicit bandwidths).
  double bandwidth_scale = 1.0;
  // Pick the scale factor by K-fold cross-validation over a fixed grid.
  bool cv_bandwidth = false;
  Response response = Response::outcome;
  // Propensity fits are clipped to [clip, 1 - clip].
  double clip = 1e-3;
  // Required for RegressorKind::oracle.
  ScalarFn oracle;
};

/// Fitted conditional mean. Immutable; copies share the training data.
class RegressorFit {
 public:
  struct State;

  RegressorFit() = default;
  explicit RegressorFit(std::shared_ptr<const State> state) : state_(std::move(state)) {}

  RegressorKind kind() const;
  const std::vector<double>& bandwidth() const;
  const std::vector<std::size_t>& train_rows() const;
  // -1 for a full-sample fit.
  int fold_id() const;
  // Logistic-index only: (intercept, slopes) and their inverse-information covariance.
  const std::vector<double>& coefficients() const;
  const Eigen::MatrixXd& coefficient_covariance() const;

  double predict(Point x) const;
  std::vector<double> predict(const RowMatrix& points) const;
  ScalarFn as_function() const;

  RegressorFit with_fold(int fold) const;

 private:
  std::shared_ptr<const State> state_;
};

// Silverman reference bandwidth per coordinate for the given rows.
std::vector<double> silverman_bandwidth(const RowMatrix& x);

/// Mean of the response among `rows` (default: all) with arm == `arm`.
RegressorFit fit_regression(const Sample& sample, int arm, const FitOptions& options,
                            std::optional<std::vector<std::size_t>> rows = std::nullopt);

/// P(arm == treated_arm | x), clipped to [clip, 1 - clip].
RegressorFit fit_propensity(const Sample& sample, int treated_arm, const FitOptions& options,
                            std::optional<std::vector<std::size_t>> rows = std::nullopt);

struct FoldPlan {
  std::size_t n = 0;
  int K = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignment;

  std::vector<std::size_t> rows_in(int fold) const;
  std::vector<std::size_t> rows_outside(int fold) const;
};

/// Shuffles 0..n-1 with the seed and deals rows to folds in turn, so fold
/// sizes differ by at most one.
FoldPlan make_folds(std::size_t n, int K, std::uint64_t seed);

enum class FitTarget { regression, propensity };

struct CrossFitSpec {
  FitTarget target = FitTarget::regression;
  int arm = 0;
  FitOptions options;
};

/// One fit per fold; fit k is trained on every row outside fold k.
struct CrossFit {
  FoldPlan plan;
  std::vector<RegressorFit> fits;

  const RegressorFit& fit_for_row(std::size_t i) const;
  // Prediction for every sample row using the fit that excludes its fold.
  std::vector<double> predict_rows(const Sample& sample) const;
  // Throws LeakageError if some fit saw a row of the fold it predicts.
  void check_no_leakage() const;
};

CrossFit cross_fit(const Sample& sample, const FoldPlan& plan, const CrossFitSpec& spec);

struct SupNormReport {
  RowMatrix grid;
  double max_abs_error = 0.0;
  std::optional<double> rate_estimate;
};

SupNormReport supnorm_diagnostic(const RegressorFit& fit, const ScalarFn& truth, const RowMatrix& grid);
// Log-log slope of sup-norm error against n.
double supnorm_rate(std::span<const double> n, std::span<const double> max_abs_error);

// Evenly spaced one-column grid on [lo, hi].
RowMatrix grid_1d(double lo, double hi, std::size_t points);

}  // namespace optalloc
