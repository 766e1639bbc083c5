#include "optalloc/welfare.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "optalloc/stats.hpp"

namespace optalloc {

void Sample::validate() const {
  const std::size_t n = size();
  if (n == 0) throw std::invalid_argument("sample has no rows");
  if (x.cols() == 0) throw std::invalid_argument("sample has no covariate columns");
  if (num_arms < 1) throw std::invalid_argument("sample needs at least one arm");
  if (arm.size() != n || y.size() != n) throw std::invalid_argument("sample columns have unequal length");
  if (z && z->size() != n) throw std::invalid_argument("cost column length differs from sample size");
  for (std::size_t i = 0; i < n; ++i) {
    if (arm[i] < 0 || arm[i] >= num_arms) {
      std::ostringstream msg;
      msg << "row " << i << ": arm label " << arm[i] << " outside {0.." << num_arms - 1 << "}";
      throw std::invalid_argument(msg.str());
    }
  }
}

Sample Sample::subset(std::span<const std::size_t> rows) const {
  Sample out;
  out.num_arms = num_arms;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.arm.reserve(rows.size());
  out.y.reserve(rows.size());
  if (z) out.z.emplace();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = rows[r];
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(i));
    out.arm.push_back(arm[i]);
    out.y.push_back(y[i]);
    if (z) out.z->push_back((*z)[i]);
  }
  return out;
}

Weights Weights::scaled(double a) const {
  Weights w = *this;
  for (double& v : w.lambda) v *= a;
  return w;
}

ArmValues evaluate_arms(const std::vector<ScalarFn>& fns, const RowMatrix& points) {
  ArmValues out(points.rows(), static_cast<Eigen::Index>(fns.size()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Point x = row(points, i);
    for (std::size_t j = 0; j < fns.size(); ++j) {
      const double v = fns[j](x);
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "arm function " << j << " is not finite at row " << i;
        throw NonFiniteError(msg.str());
      }
      out(i, static_cast<Eigen::Index>(j)) = v;
    }
  }
  return out;
}

Policy::Policy(PolicyKind kind, std::size_t num_arms, AssignFn assign)
    : kind_(kind), num_arms_(num_arms), assign_(std::move(assign)) {
  if (num_arms_ == 0) throw std::invalid_argument("policy needs at least one arm");
}

Policy Policy::threshold(ScalarFn score, double k) {
  return Policy(PolicyKind::threshold, 2, [score = std::move(score), k](Point x) {
    return score(x) > k ? std::vector<double>{0.0, 1.0} : std::vector<double>{1.0, 0.0};
  });
}

Policy Policy::from_function(std::size_t num_arms, AssignFn assign) {
  return Policy(PolicyKind::explicit_map, num_arms, std::move(assign));
}

std::vector<double> Policy::assign(Point x) const {
  std::vector<double> w = assign_(x);
  if (w.size() != num_arms_) throw std::invalid_argument("policy returned a weight vector of wrong length");
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw std::invalid_argument("policy weight negative or NaN");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("policy weights do not sum to one");
  return w;
}

std::size_t argmax_arm(std::span<const double> lambda, std::span<const double> values) {
  if (lambda.size() != values.size() || lambda.empty())
    throw std::invalid_argument("argmax_arm: arity mismatch");
  std::size_t best = 0;
  double best_value = lambda[0] * values[0];
  if (!std::isfinite(best_value)) throw NonFiniteError("lambda_0 * g_0 is not finite");
  for (std::size_t j = 1; j < values.size(); ++j) {
    const double v = lambda[j] * values[j];
    if (!std::isfinite(v)) throw NonFiniteError("lambda_j * g_j is not finite");
    // Strict: an equal later arm never displaces an earlier one.
    if (v > best_value) {
      best = j;
      best_value = v;
    }
  }
  return best;
}

Policy optimal_policy(const Weights& lambda, const ArmFunctions& arms) {
  if (lambda.size() != arms.num_arms()) throw std::invalid_argument("optimal_policy: arity mismatch");
  const std::size_t m = arms.num_arms();
  return Policy(PolicyKind::argmax, m, [lambda, g = arms.g, m](Point x) {
    std::vector<double> values(m);
    for (std::size_t j = 0; j < m; ++j) values[j] = g[j](x);
    std::vector<double> w(m, 0.0);
    w[argmax_arm(lambda.lambda, values)] = 1.0;
    return w;
  });
}

namespace {

void check_arity(const Weights& lambda, std::size_t arms) {
  if (lambda.size() != arms || arms == 0) throw std::invalid_argument("arity of lambda and arm functions differ");
  for (double v : lambda.lambda)
    if (!std::isfinite(v)) throw NonFiniteError("lambda has a non-finite entry");
}

std::span<const double> row_span(const ArmValues& v, Eigen::Index i) {
  return {v.data() + i * v.cols(), static_cast<std::size_t>(v.cols())};
}

}  // namespace

double welfare_value(const RowMatrix& points, const Weights& lambda, const ArmFunctions& arms,
                     const Policy& policy) {
  check_arity(lambda, arms.num_arms());
  if (policy.num_arms() != arms.num_arms()) throw std::invalid_argument("policy arity differs from arms");
  if (points.rows() == 0) throw std::invalid_argument("welfare_value on empty point set");
  const ArmValues values = evaluate_arms(arms.g, points);
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto w = policy.assign(row(points, i));
    for (std::size_t j = 0; j < w.size(); ++j)
      total += lambda.lambda[j] * w[j] * values(i, static_cast<Eigen::Index>(j));
  }
  return total / static_cast<double>(points.rows());
}

double welfare_value(const Sample& sample, const Weights& lambda, const ArmFunctions& arms,
                     const Policy& policy) {
  return welfare_value(sample.x, lambda, arms, policy);
}

double welfare_potential(const Weights& lambda, const ArmValues& values) {
  check_arity(lambda, static_cast<std::size_t>(values.cols()));
  if (values.rows() == 0) throw std::invalid_argument("welfare_potential on empty point set");
  double total = 0.0;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    const auto v = row_span(values, i);
    const std::size_t j = argmax_arm(lambda.lambda, v);
    total += lambda.lambda[j] * v[j];
  }
  return total / static_cast<double>(values.rows());
}

double welfare_potential(const Weights& lambda, const ArmFunctions& arms, const RowMatrix& points) {
  check_arity(lambda, arms.num_arms());
  return welfare_potential(lambda, evaluate_arms(arms.g, points));
}

double welfare_potential(const Weights& lambda, const ArmFunctions& arms, const Sample& sample) {
  return welfare_potential(lambda, arms, sample.x);
}

std::vector<double> subgradient(const Weights& lambda, const ArmValues& values) {
  check_arity(lambda, static_cast<std::size_t>(values.cols()));
  std::vector<double> p(lambda.size(), 0.0);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    const auto v = row_span(values, i);
    const std::size_t j = argmax_arm(lambda.lambda, v);
    p[j] += v[j];
  }
  for (double& pj : p) pj /= static_cast<double>(values.rows());
  return p;
}

std::vector<double> subgradient(const Weights& lambda, const ArmFunctions& arms, const Sample& sample) {
  check_arity(lambda, arms.num_arms());
  return subgradient(lambda, evaluate_arms(arms.g, sample.x));
}

FrechetReport frechet_directional_check(const Weights& lambda, const ArmValues& values,
                                        std::span<const double> dlambda, const ArmValues& dvalues,
                                        std::span<const double> steps) {
  check_arity(lambda, static_cast<std::size_t>(values.cols()));
  if (dlambda.size() != lambda.size() || dvalues.cols() != values.cols() || dvalues.rows() != values.rows())
    throw std::invalid_argument("frechet_directional_check: direction shape mismatch");
  if (steps.empty()) throw std::invalid_argument("frechet_directional_check: no steps");
  for (std::size_t s = 0; s < steps.size(); ++s) {
    if (!(steps[s] > 0.0)) throw std::invalid_argument("steps must be strictly positive");
    if (s > 0 && !(steps[s] < steps[s - 1])) throw std::invalid_argument("steps must be strictly decreasing");
  }

  FrechetReport report;
  report.steps.assign(steps.begin(), steps.end());

  const double base = welfare_potential(lambda, values);
  const auto p = subgradient(lambda, values);
  double formula = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) formula += p[j] * dlambda[j];
  const double n = static_cast<double>(values.rows());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    const std::size_t j = argmax_arm(lambda.lambda, row_span(values, i));
    formula += lambda.lambda[j] * dvalues(i, static_cast<Eigen::Index>(j)) / n;
  }
  if (!std::isfinite(formula)) throw NonFiniteError("directional derivative formula is not finite");
  report.formula = formula;

  for (double t : steps) {
    Weights moved = lambda;
    for (std::size_t j = 0; j < moved.size(); ++j) moved.lambda[j] += t * dlambda[j];
    const ArmValues shifted = values + t * dvalues;
    const double q = (welfare_potential(moved, shifted) - base) / t;
    if (!std::isfinite(q)) throw NonFiniteError("finite-difference quotient is not finite");
    report.quotients.push_back(q);
    report.gaps.push_back(std::abs(q - formula));
  }

  report.converging = true;
  for (std::size_t s = 0; s < report.gaps.size(); ++s) {
    report.max_abs_gap = std::max(report.max_abs_gap, report.gaps[s]);
    if (s > 0 && report.gaps[s] > report.gaps[s - 1] + 1e-12) report.converging = false;
  }
  bool positive = report.steps.size() >= 2;
  for (double g : report.gaps) positive = positive && g > 0.0;
  report.gap_trend = positive ? stats::loglog_slope(report.steps, report.gaps)
                              : std::numeric_limits<double>::quiet_NaN();
  return report;
}

FrechetReport frechet_directional_check(const Weights& lambda, const ArmFunctions& arms,
                                        std::span<const double> dlambda,
                                        const std::vector<ScalarFn>& dg, const Sample& sample,
                                        std::span<const double> steps) {
  check_arity(lambda, arms.num_arms());
  if (dg.size() != arms.num_arms()) throw std::invalid_argument("direction dg has wrong arity");
  return frechet_directional_check(lambda, evaluate_arms(arms.g, sample.x), dlambda,
                                   evaluate_arms(dg, sample.x), steps);
}

}  // namespace optalloc
