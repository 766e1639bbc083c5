#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "optalloc/common.hpp"

namespace optalloc {

/// Observation table. Row i carries covariates x.row(i), the received arm
/// arm[i] in {0..num_arms-1}, outcome y[i] and, for constrained problems, a
/// cost outcome z[i].
struct Sample {
  RowMatrix x;
  std::vector<int> arm;
  std::vector<double> y;
  std::optional<std::vector<double>> z;
  int num_arms = 2;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }
  Point point(std::size_t i) const { return row(x, static_cast<Eigen::Index>(i)); }
  // Throws std::invalid_argument on any broken invariant.
  void validate() const;
  Sample subset(std::span<const std::size_t> rows) const;
};

struct Weights {
  std::vector<double> lambda;

  Weights() = default;
  Weights(std::initializer_list<double> v) : lambda(v) {}
  explicit Weights(std::vector<double> v) : lambda(std::move(v)) {}
  std::size_t size() const { return lambda.size(); }
  Weights scaled(double a) const;
};

/// Conditional means g_j and, optionally, conditional costs c_j.
struct ArmFunctions {
  std::vector<ScalarFn> g;
  std::vector<ScalarFn> c;

  std::size_t num_arms() const { return g.size(); }
};

/// n x (J+1) matrix of arm function values at the rows of a point set.
using ArmValues = RowMatrix;

ArmValues evaluate_arms(const std::vector<ScalarFn>& fns, const RowMatrix& points);

enum class PolicyKind { argmax, threshold, explicit_map };

/// Map from covariates to simplex weights over the arms.
class Policy {
 public:
  using AssignFn = std::function<std::vector<double>(Point)>;

  Policy(PolicyKind kind, std::size_t num_arms, AssignFn assign);

  /// Binary rule: arm 1 where score(x) > k, arm 0 otherwise.
  static Policy threshold(ScalarFn score, double k);
  static Policy from_function(std::size_t num_arms, AssignFn assign);

  PolicyKind kind() const { return kind_; }
  std::size_t num_arms() const { return num_arms_; }
  // Checked: weights must be nonnegative and sum to one.
  std::vector<double> assign(Point x) const;

 private:
  PolicyKind kind_;
  std::size_t num_arms_;
  AssignFn assign_;
};

/// Index of the largest lambda_j * values_j, ties going to the smallest
/// index. This is the product-of-indicators rule
///   phi*_j = prod_{l>j} 1(lambda_j g_j >= lambda_l g_l) prod_{l<j} 1(lambda_j g_j > lambda_l g_l).
std::size_t argmax_arm(std::span<const double> lambda, std::span<const double> values);

Policy optimal_policy(const Weights& lambda, const ArmFunctions& arms);

double welfare_value(const RowMatrix& points, const Weights& lambda, const ArmFunctions& arms,
                     const Policy& policy);
double welfare_value(const Sample& sample, const Weights& lambda, const ArmFunctions& arms,
                     const Policy& policy);

// (1/n) sum_i max_j lambda_j g_j(X_i)
double welfare_potential(const Weights& lambda, const ArmValues& values);
double welfare_potential(const Weights& lambda, const ArmFunctions& arms, const RowMatrix& points);
double welfare_potential(const Weights& lambda, const ArmFunctions& arms, const Sample& sample);

// p_j = (1/n) sum_i phi*_j(X_i) g_j(X_i)
std::vector<double> subgradient(const Weights& lambda, const ArmValues& values);
std::vector<double> subgradient(const Weights& lambda, const ArmFunctions& arms, const Sample& sample);

struct FrechetReport {
  std::vector<double> steps;
  std::vector<double> quotients;
  std::vector<double> gaps;
  double formula = 0.0;
  double max_abs_gap = 0.0;
  // log-log slope of gap against step; NaN when some gap is exactly zero.
  double gap_trend = 0.0;
  // Gaps nonincreasing as the step shrinks. False flags a possible kink at
  // (lambda, g); no limit is asserted in that case.
  bool converging = false;
};

/// Finite-difference check of the directional derivative
///   <p(lambda), dlambda> + sum_j lambda_j (1/n) sum_i phi*_j(X_i) dg_j(X_i).
FrechetReport frechet_directional_check(const Weights& lambda, const ArmValues& values,
                                        std::span<const double> dlambda, const ArmValues& dvalues,
                                        std::span<const double> steps);
FrechetReport frechet_directional_check(const Weights& lambda, const ArmFunctions& arms,
                                        std::span<const double> dlambda,
                                        const std::vector<ScalarFn>& dg, const Sample& sample,
                                        std::span<const double> steps);

}  // namespace optalloc
