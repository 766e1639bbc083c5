#include "optalloc/constrained_roc.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "optalloc/stats.hpp"

namespace optalloc {

void ConstrainedProblem::validate() const {
  const std::size_t n = gain.size();
  if (n == 0) throw std::invalid_argument("constrained problem has no rows");
  for (const auto* v : {&cost, &alpha_treated, &alpha_base, &alpha_norm, &beta_treated, &beta_base, &beta_norm})
    if (v->size() != n) throw std::invalid_argument("constrained problem columns differ in length");
  if (!(k_domain.lo < k_domain.hi) || !std::isfinite(k_domain.lo) || !std::isfinite(k_domain.hi))
    throw std::invalid_argument("k domain must be a bounded interval with lo < hi");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(cost[i] > 0.0)) {
      std::ostringstream msg;
      msg << "row " << i << ": cost difference c1 - c0 must be positive, got " << cost[i];
      throw std::invalid_argument(msg.str());
    }
    if (!std::isfinite(gain[i]) || !std::isfinite(alpha_treated[i]) || !std::isfinite(beta_treated[i]) ||
        !std::isfinite(alpha_base[i]) || !std::isfinite(beta_base[i]))
      throw NonFiniteError("constrained problem has a non-finite entry at row " + std::to_string(i));
  }
}

ConstrainedProblem make_constrained_problem(const std::vector<double>& g0, const std::vector<double>& g1,
                                           const std::vector<double>& c0, const std::vector<double>& c1,
                                           Interval k_domain) {
  const std::size_t n = g0.size();
  if (g1.size() != n || c0.size() != n || c1.size() != n)
    throw std::invalid_argument("fitted arm functions differ in length");
  ConstrainedProblem p;
  p.k_domain = k_domain;
  p.gain.resize(n);
  p.cost.resize(n);
  p.alpha_treated.resize(n);
  p.beta_treated.resize(n);
  p.alpha_base = c0;
  p.beta_base = g0;
  p.alpha_norm.assign(n, 1.0);
  p.beta_norm.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    p.gain[i] = g1[i] - g0[i];
    p.cost[i] = c1[i] - c0[i];
    p.alpha_treated[i] = c1[i] - c0[i];
    p.beta_treated[i] = g1[i] - g0[i];
  }
  p.validate();
  return p;
}

ConstrainedProblem make_roc_problem(const std::vector<double>& y, const std::vector<double>& p_hat) {
  const std::size_t n = y.size();
  if (p_hat.size() != n) throw std::invalid_argument("scores and outcomes differ in length");
  ConstrainedProblem p;
  p.k_domain = {0.0, 1.0};
  p.gain = p_hat;
  p.cost.assign(n, 1.0);
  p.alpha_base.assign(n, 0.0);
  p.beta_base.assign(n, 0.0);
  p.alpha_treated.resize(n);
  p.beta_treated.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      std::ostringstream msg;
      msg << "row " << i << ": ROC outcome must be 0 or 1, got " << y[i];
      throw std::invalid_argument(msg.str());
    }
    if (!(p_hat[i] >= 0.0 && p_hat[i] <= 1.0)) {
      std::ostringstream msg;
      msg << "row " << i << ": score must lie in [0,1], got " << p_hat[i];
      throw std::invalid_argument(msg.str());
    }
    p.alpha_treated[i] = 1.0 - y[i];
    p.beta_treated[i] = y[i];
  }
  p.alpha_norm = p.alpha_treated;
  p.beta_norm = p.beta_treated;
  p.validate();
  return p;
}

StepCurve::StepCurve(const ConstrainedProblem& problem, std::span<const double> weights) : problem_(&problem) {
  problem.validate();
  const std::size_t n = problem.size();
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = problem.gain[i] / problem.cost[i];
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return r[a] < r[b]; });
  ratio_.resize(n);
  for (std::size_t j = 0; j < n; ++j) ratio_[j] = r[order_[j]];
  weight_.assign(n, 1.0);
  if (!weights.empty()) {
    reweight(weights);
  } else {
    rebuild();
  }
}

void StepCurve::reweight(std::span<const double> weights) {
  const std::size_t n = order_.size();
  if (weights.size() != n) throw std::invalid_argument("weights differ in length from the problem");
  for (std::size_t j = 0; j < n; ++j) {
    const double w = weights[order_[j]];
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and nonnegative");
    weight_[j] = w;
  }
  rebuild();
}

void StepCurve::rebuild() {
  const auto& p = *problem_;
  const std::size_t n = order_.size();
  alpha_tail_.assign(n + 1, 0.0);
  beta_tail_.assign(n + 1, 0.0);
  alpha_base_ = beta_base_ = alpha_norm_ = beta_norm_ = 0.0;
  for (std::size_t j = n; j-- > 0;) {
    const std::size_t i = order_[j];
    const double w = weight_[j];
    alpha_tail_[j] = alpha_tail_[j + 1] + w * p.alpha_treated[i];
    beta_tail_[j] = beta_tail_[j + 1] + w * p.beta_treated[i];
    alpha_base_ += w * p.alpha_base[i];
    beta_base_ += w * p.beta_base[i];
    alpha_norm_ += w * p.alpha_norm[i];
    beta_norm_ += w * p.beta_norm[i];
  }
  if (!(alpha_norm_ > 0.0) || !(beta_norm_ > 0.0))
    throw std::invalid_argument("degenerate problem: a normalizing total is zero");
}

double StepCurve::alpha(double k) const {
  const auto j = static_cast<std::size_t>(std::upper_bound(ratio_.begin(), ratio_.end(), k) - ratio_.begin());
  return (alpha_base_ + alpha_tail_[j]) / alpha_norm_;
}

double StepCurve::beta(double k) const {
  const auto j = static_cast<std::size_t>(std::upper_bound(ratio_.begin(), ratio_.end(), k) - ratio_.begin());
  return (beta_base_ + beta_tail_[j]) / beta_norm_;
}

double StepCurve::threshold(double a) const {
  if (!std::isfinite(a)) throw std::invalid_argument("alpha must be finite");
  const Interval dom = problem_->k_domain;
  if (alpha(dom.hi) > a) {
    std::ostringstream msg;
    msg << "alpha " << a << " is infeasible: alpha(sup D) = " << alpha(dom.hi);
    throw InfeasibleError(msg.str());
  }
  if (alpha(dom.lo) <= a) return dom.lo;
  // Candidates are the jump points inside (lo, hi]; alpha is nonincreasing along them.
  auto first = std::upper_bound(ratio_.begin(), ratio_.end(), dom.lo);
  auto last = std::upper_bound(ratio_.begin(), ratio_.end(), dom.hi);
  auto it = std::partition_point(first, last, [&](double r) { return alpha(r) > a; });
  if (it == last) throw std::logic_error("threshold_search: no feasible jump point");
  return *it;
}

double alpha_of_k(const ConstrainedProblem& problem, double k, std::span<const double> weights) {
  if (!(k >= problem.k_domain.lo && k <= problem.k_domain.hi)) throw std::invalid_argument("k outside the domain D");
  return StepCurve(problem, weights).alpha(k);
}

double beta_of_k(const ConstrainedProblem& problem, double k, std::span<const double> weights) {
  if (!(k >= problem.k_domain.lo && k <= problem.k_domain.hi)) throw std::invalid_argument("k outside the domain D");
  return StepCurve(problem, weights).beta(k);
}

double threshold_search(const ConstrainedProblem& problem, double alpha, std::span<const double> weights) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  return StepCurve(problem, weights).threshold(alpha);
}

void validate_alpha_grid(const std::vector<double>& alpha_grid) {
  if (alpha_grid.empty()) throw std::invalid_argument("alpha grid is empty");
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    if (!(alpha_grid[i] > 0.0 && alpha_grid[i] < 1.0)) throw std::invalid_argument("alpha grid must lie in (0,1)");
    if (i > 0 && !(alpha_grid[i] > alpha_grid[i - 1])) throw std::invalid_argument("alpha grid must be increasing");
  }
}

namespace {

void check_outcomes(const std::vector<double>& y) {
  double s = 0.0;
  for (double v : y) s += v;
  if (s == 0.0 || s == static_cast<double>(y.size()))
    throw std::invalid_argument("degenerate outcome: all y are " + std::string(s == 0.0 ? "0" : "1"));
}

RocCurve point_curve(const ConstrainedProblem& problem, const StepCurve& curve, const std::vector<double>& y,
                     const std::vector<double>& alpha_grid) {
  RocCurve out;
  out.alpha_grid = alpha_grid;
  out.n = y.size();
  out.p_bar = stats::mean(y);
  const double n = static_cast<double>(y.size());
  for (double a : alpha_grid) {
    const double k = curve.threshold(a);
    if (k >= 1.0) {
      std::ostringstream msg;
      msg << "threshold at boundary: k_hat = 1 at alpha " << a << ", influence factor k/(1-k) undefined";
      throw BoundaryThresholdError(msg.str());
    }
    const double b = curve.beta(k);
    // Correctly specified influence function; the alpha term uses the target level.
    std::vector<double> psi(y.size());
    const double ratio = k / (1.0 - k);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double treated = problem.gain[i] > k ? 1.0 : 0.0;
      psi[i] = (y[i] * (treated - b) - ratio * (1.0 - y[i]) * (treated - a)) / out.p_bar;
    }
    const double se = stats::stddev(psi) / std::sqrt(n);
    out.k_hat.push_back(k);
    out.beta_hat.push_back(b);
    out.se.push_back(se);
    out.band_lo.push_back(b - 1.959963984540054 * se);
    out.band_hi.push_back(b + 1.959963984540054 * se);
  }
  out.sym_lo = out.band_lo;
  out.sym_hi = out.band_hi;
  out.beta_iso = stats::isotonic_increasing(out.beta_hat);
  return out;
}

}  // namespace

RocCurve roc_estimate(const std::vector<double>& y, const std::vector<double>& p_hat,
                      const std::vector<double>& alpha_grid) {
  validate_alpha_grid(alpha_grid);
  const ConstrainedProblem problem = make_roc_problem(y, p_hat);
  check_outcomes(y);
  const StepCurve curve(problem);
  return point_curve(problem, curve, y, alpha_grid);
}

RocCurve roc_estimate(const Sample& sample, const RegressorFit& p_fit, const std::vector<double>& alpha_grid) {
  sample.validate();
  return roc_estimate(sample.y, p_fit.predict(sample.x), alpha_grid);
}

RocCurve roc_bootstrap_with_weights(const std::vector<double>& y, const std::vector<double>& p_hat,
                                    const std::vector<double>& alpha_grid, const RowMatrix& weights,
                                    double level) {
  validate_alpha_grid(alpha_grid);
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("band level must lie in (0,1)");
  if (weights.rows() < 1 || static_cast<std::size_t>(weights.cols()) != y.size())
    throw std::invalid_argument("bootstrap weights must have one column per row");
  const ConstrainedProblem problem = make_roc_problem(y, p_hat);
  check_outcomes(y);
  StepCurve curve(problem);
  RocCurve out = point_curve(problem, curve, y, alpha_grid);
  out.method = "bootstrap";
  out.level = level;

  const auto B = static_cast<int>(weights.rows());
  const std::size_t G = alpha_grid.size();
  const double root_n = std::sqrt(static_cast<double>(y.size()));
  std::vector<std::vector<double>> t(G);
  for (int b = 0; b < B; ++b) {
    std::vector<double> beta_star(G);
    try {
      curve.reweight(row(weights, b));
      for (std::size_t g = 0; g < G; ++g) {
        const double k = curve.threshold(alpha_grid[g]);
        if (k >= 1.0) throw BoundaryThresholdError("bootstrap threshold at boundary");
        beta_star[g] = curve.beta(k);
      }
    } catch (const std::exception&) {
      ++out.failed_replicates;
      continue;
    }
    for (std::size_t g = 0; g < G; ++g) t[g].push_back(root_n * (beta_star[g] - out.beta_hat[g]));
  }
  out.replicates = B;
  if (static_cast<double>(out.failed_replicates) > 0.01 * B) {
    std::ostringstream msg;
    msg << out.failed_replicates << " of " << B << " bootstrap replicates failed (limit 1%)";
    throw Error(msg.str());
  }
  const double tail = 0.5 * (1.0 - level);
  for (std::size_t g = 0; g < G; ++g) {
    const double b = out.beta_hat[g];
    const double q_hi = stats::quantile(t[g], 1.0 - tail);
    const double q_lo = stats::quantile(t[g], tail);
    out.band_lo[g] = b - q_hi / root_n;
    out.band_hi[g] = b - q_lo / root_n;
    std::vector<double> abs_t(t[g].size());
    for (std::size_t r = 0; r < abs_t.size(); ++r) abs_t[r] = std::abs(t[g][r]);
    const double q_abs = stats::quantile(abs_t, level);
    out.sym_lo[g] = b - q_abs / root_n;
    out.sym_hi[g] = b + q_abs / root_n;
  }
  return out;
}

RocCurve roc_bootstrap(const std::vector<double>& y, const std::vector<double>& p_hat,
                       const std::vector<double>& alpha_grid, int B, std::uint64_t seed, double level) {
  if (B < 100) throw std::invalid_argument("roc_bootstrap needs B >= 100");
  const std::size_t n = y.size();
  RowMatrix weights = RowMatrix::Zero(B, static_cast<Eigen::Index>(n));
  for (int b = 0; b < B; ++b) {
    Rng rng(seed, "roc:bootstrap", static_cast<std::uint64_t>(b));
    for (std::size_t i = 0; i < n; ++i) weights(b, static_cast<Eigen::Index>(rng.index(n))) += 1.0;
  }
  return roc_bootstrap_with_weights(y, p_hat, alpha_grid, weights, level);
}

RocCurve roc_bootstrap(const Sample& sample, const RegressorFit& p_fit, const std::vector<double>& alpha_grid,
                       int B, std::uint64_t seed, double level) {
  sample.validate();
  return roc_bootstrap(sample.y, p_fit.predict(sample.x), alpha_grid, B, seed, level);
}

namespace {

std::string format_number(double v) {
  if (!std::isfinite(v)) throw NonFiniteError("refusing to write a non-finite value");
  // Shortest representation that parses back to the same double.
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void RocCurve::write_csv(std::ostream& out) const {
  out << "alpha,k_hat,beta_hat,se,lo,hi\n";
  for (std::size_t g = 0; g < alpha_grid.size(); ++g) {
    out << format_number(alpha_grid[g]) << ',' << format_number(k_hat[g]) << ',' << format_number(beta_hat[g])
        << ',' << format_number(se[g]) << ',' << format_number(band_lo[g]) << ',' << format_number(band_hi[g])
        << '\n';
  }
}

std::string RocCurve::to_json() const {
  auto check = [](const std::vector<double>& v) {
    for (double x : v)
      if (!std::isfinite(x)) throw NonFiniteError("refusing to write a non-finite value");
    return v;
  };
  nlohmann::json j;
  j["method"] = method;
  j["n"] = n;
  j["p_bar"] = p_bar;
  j["level"] = level;
  j["replicates"] = replicates;
  j["failed_replicates"] = failed_replicates;
  j["alpha"] = check(alpha_grid);
  j["k_hat"] = check(k_hat);
  j["beta_hat"] = check(beta_hat);
  j["beta_isotonic"] = check(beta_iso);
  j["se"] = check(se);
  j["lo"] = check(band_lo);
  j["hi"] = check(band_hi);
  j["sym_lo"] = check(sym_lo);
  j["sym_hi"] = check(sym_hi);
  return j.dump(2);
}

namespace {

Field delta_field(const BinaryAllocationModel& m, double k) {
  const std::size_t d = m.domain.dim();
  return Field{"delta-star", m.domain,
               [&m, k](Point x) { return m.gain_star(x) - k * m.cost_star(x); },
               [&m, k, d](Point x, std::span<double> g) {
                 std::vector<double> gc(d);
                 m.gain_star_grad(x, g);
                 m.cost_star_grad(x, gc);
                 for (std::size_t j = 0; j < d; ++j) g[j] -= k * gc[j];
               }};
}

LevelSetEstimate negate_scaled(LevelSetEstimate e, double norm) {
  e.value = -e.value / norm;
  e.se /= norm;
  for (double& b : e.band_values) b = -b / norm;
  return e;
}

SamplingPlan with_proposal(const BinaryAllocationModel& m, SamplingPlan plan) {
  plan.proposal = m.proposal;
  return plan;
}

}  // namespace

LevelSetEstimate fslope_alpha(const BinaryAllocationModel& model, double k, const SamplingPlan& plan,
                              const BandOptions& band) {
  const Field field = delta_field(model, k);
  const auto e = level_set_integral(
      field, [&](Point x) { return model.alpha_treated(x) * model.cost_star(x) * model.density(x); }, 0.0,
      with_proposal(model, plan), band);
  return negate_scaled(e, model.alpha_norm);
}

LevelSetEstimate fslope_beta(const BinaryAllocationModel& model, double k, const SamplingPlan& plan,
                             const BandOptions& band) {
  const Field field = delta_field(model, k);
  const auto e = level_set_integral(
      field, [&](Point x) { return model.beta_treated(x) * model.cost_star(x) * model.density(x); }, 0.0,
      with_proposal(model, plan), band);
  return negate_scaled(e, model.beta_norm);
}

Estimate population_alpha(const BinaryAllocationModel& model, double k, const SamplingPlan& plan) {
  const Field field = delta_field(model, k);
  const auto e = sorting_operator(field, [&](Point x) { return model.alpha_treated(x) * model.density(x); }, 0.0,
                                  with_proposal(model, plan));
  return {(e.value + model.alpha_base) / model.alpha_norm, e.se / model.alpha_norm};
}

Estimate population_beta(const BinaryAllocationModel& model, double k, const SamplingPlan& plan) {
  const Field field = delta_field(model, k);
  const auto e = sorting_operator(field, [&](Point x) { return model.beta_treated(x) * model.density(x); }, 0.0,
                                  with_proposal(model, plan));
  return {(e.value + model.beta_base) / model.beta_norm, e.se / model.beta_norm};
}

BinaryAllocationModel RocModel::allocation_model() const {
  BinaryAllocationModel m;
  m.domain = domain;
  m.density = density;
  m.proposal = proposal;
  m.gain_star = p;
  m.gain_star_grad = p_grad;
  m.cost_star = [](Point) { return 1.0; };
  m.cost_star_grad = [](Point, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); };
  m.alpha_treated = [f = p](Point x) { return 1.0 - f(x); };
  m.beta_treated = p;
  m.alpha_norm = 1.0 - p_bar;
  m.beta_norm = p_bar;
  return m;
}

double population_threshold(const RocModel& model, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
  if (!model.alpha_of_k) throw std::invalid_argument("model has no population alpha(k)");
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (model.alpha_of_k(mid) <= alpha ? hi : lo) = mid;
  }
  return hi;
}

LimitProcessDraws simulate_limit_process(const RocModel& model, const std::vector<double>& alpha_grid,
                                         const LimitOptions& options) {
  validate_alpha_grid(alpha_grid);
  if (options.B < 1) throw std::invalid_argument("limit simulation needs B >= 1");
  if (!model.draw || !model.p || !model.beta_of_k) throw std::invalid_argument("model lacks draw, p or beta(k)");
  const bool parametric = options.first_stage == FirstStage::parametric;
  if (parametric && !model.theta) throw std::invalid_argument("parametric first stage needs index coefficients");

  LimitProcessDraws out;
  out.alpha_grid = alpha_grid;
  out.t_Q = options.t_Q.value_or(1.0);
  out.t_Delta = options.t_Delta.value_or(parametric ? 1.0 : 0.0);
  const std::size_t G = alpha_grid.size();
  const std::size_t d = model.domain.dim();
  const std::size_t q = parametric ? d + 1 : 0;
  const BinaryAllocationModel alloc = model.allocation_model();

  for (double a : alpha_grid) {
    const double k = population_threshold(model, a);
    if (!(k > 0.0 && k < 1.0)) throw BoundaryThresholdError("population threshold on the boundary of [0,1]");
    out.k.push_back(k);
    out.beta.push_back(model.beta_of_k(k));
    const auto fa = fslope_alpha(alloc, k, options.plan);
    const auto fb = fslope_beta(alloc, k, options.plan);
    if (std::abs(fa.value) < 1e-8) throw Error("f_alpha is numerically zero; the inverse map is not differentiable");
    out.f_alpha.push_back(fa.value);
    out.f_beta.push_back(fb.value);
  }

  // Covariance of the stacked influence terms (psi_beta, psi_alpha, psi_theta).
  const std::size_t M = options.covariance_draws;
  if (M < 100) throw std::invalid_argument("too few covariance draws");
  RowMatrix xs(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(d));
  std::vector<double> ys(M), ps(M);
  {
    Rng rng(options.seed, "roc:limit-covariance");
    std::vector<double> x(d);
    for (std::size_t i = 0; i < M; ++i) {
      model.draw(rng, x, ys[i]);
      for (std::size_t j = 0; j < d; ++j) xs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[j];
      ps[i] = model.p(row(xs, static_cast<Eigen::Index>(i)));
    }
  }
  Eigen::MatrixXd info_inv;
  if (parametric) {
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
    Eigen::VectorXd xt(static_cast<Eigen::Index>(q));
    for (std::size_t i = 0; i < M; ++i) {
      xt(0) = 1.0;
      for (std::size_t j = 0; j < d; ++j) xt(static_cast<Eigen::Index>(j + 1)) = xs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      info += ps[i] * (1.0 - ps[i]) * xt * xt.transpose();
    }
    info /= static_cast<double>(M);
    info_inv = info.inverse();
  }
  const auto dim = static_cast<Eigen::Index>(2 * G + q);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  {
    Eigen::VectorXd psi(dim), xt(static_cast<Eigen::Index>(q));
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t g = 0; g < G; ++g) {
        const double treated = ps[i] > out.k[g] ? 1.0 : 0.0;
        psi(static_cast<Eigen::Index>(g)) = ys[i] * (treated - out.beta[g]);
        psi(static_cast<Eigen::Index>(G + g)) = (1.0 - ys[i]) * (treated - alpha_grid[g]);
      }
      if (parametric) {
        xt(0) = 1.0;
        for (std::size_t j = 0; j < d; ++j) xt(static_cast<Eigen::Index>(j + 1)) = xs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        psi.tail(static_cast<Eigen::Index>(q)) = info_inv * xt * (ys[i] - ps[i]);
      }
      mean += psi;
      cov += psi * psi.transpose();
    }
    mean /= static_cast<double>(M);
    cov = cov / static_cast<double>(M) - mean * mean.transpose();
  }

  // First-stage level-set vectors v_beta = int_{p=k} p grad_theta p mu'/|grad p|, v_alpha with (1 - p).
  std::vector<Eigen::VectorXd> v_beta(G, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q)));
  std::vector<Eigen::VectorXd> v_alpha = v_beta;
  if (parametric) {
    const Field field{"p-star", model.domain, model.p, model.p_grad};
    SamplingPlan plan = options.plan;
    plan.proposal = model.proposal;
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t j = 0; j < q; ++j) {
        auto grad_theta = [&, j](Point x) {
          const double p = model.p(x);
          return p * (1.0 - p) * (j == 0 ? 1.0 : x[j - 1]);
        };
        v_beta[g](static_cast<Eigen::Index>(j)) =
            level_set_integral(field, [&](Point x) { return model.p(x) * grad_theta(x) * model.density(x); },
                               out.k[g], plan)
                .value;
        v_alpha[g](static_cast<Eigen::Index>(j)) =
            level_set_integral(field, [&](Point x) { return (1.0 - model.p(x)) * grad_theta(x) * model.density(x); },
                               out.k[g], plan)
                .value;
      }
    }
  }

  // Influence-function variance of the correctly specified display.
  const double pb = model.p_bar;
  for (std::size_t g = 0; g < G; ++g) {
    const double c = out.k[g] / (1.0 - out.k[g]);
    const auto ib = static_cast<Eigen::Index>(g), ia = static_cast<Eigen::Index>(G + g);
    out.if_variance.push_back((cov(ib, ib) - 2 * c * cov(ib, ia) + c * c * cov(ia, ia)) / (pb * pb));
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  // cov = P^T L D L^T P; draws are P^T L sqrt(D) z.
  const Eigen::VectorXd sqrt_d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd L = ldlt.matrixL();
  const auto B = static_cast<Eigen::Index>(options.B);
  out.draws.resize(B, static_cast<Eigen::Index>(G));
  out.empirical_term.resize(B, static_cast<Eigen::Index>(G));
  out.first_stage_term.resize(B, static_cast<Eigen::Index>(G));
  Rng rng(options.seed, "roc:limit-draws");
  Eigen::VectorXd z(dim);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index j = 0; j < dim; ++j) z(j) = rng.normal();
    const Eigen::VectorXd gauss = ldlt.transpositionsP().transpose() * (L * sqrt_d.cwiseProduct(z));
    for (std::size_t g = 0; g < G; ++g) {
      const double ratio = out.f_beta[g] / out.f_alpha[g];
      const double emp = out.t_Q * (gauss(static_cast<Eigen::Index>(g)) / pb -
                                    ratio * gauss(static_cast<Eigen::Index>(G + g)) / (1.0 - pb));
      double first = 0.0;
      if (parametric) {
        const Eigen::VectorXd th = gauss.tail(static_cast<Eigen::Index>(q));
        first = out.t_Delta * (v_beta[g].dot(th) / pb - ratio * v_alpha[g].dot(th) / (1.0 - pb));
      }
      out.empirical_term(b, static_cast<Eigen::Index>(g)) = emp;
      out.first_stage_term(b, static_cast<Eigen::Index>(g)) = first;
      out.draws(b, static_cast<Eigen::Index>(g)) = emp + first;
    }
  }
  return out;
}

}  // namespace optalloc
