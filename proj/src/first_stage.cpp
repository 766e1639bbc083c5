#include "optalloc/first_stage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "optalloc/rng.hpp"
#include "optalloc/stats.hpp"

namespace optalloc {

namespace {
// Gaussian kernel weights beyond this many bandwidths are below 1.6e-8 of the peak and are skipped.
constexpr double kWindow = 6.0;
}  // namespace

struct RegressorFit::State {
  RegressorKind kind = RegressorKind::nadaraya_watson;
  std::vector<double> h;
  std::vector<std::size_t> train_rows;
  int fold = -1;
  // Training data sorted by the first covariate.
  RowMatrix x;
  std::vector<double> y;
  std::vector<double> first;
  std::vector<double> coef;
  Eigen::MatrixXd cov;
  ScalarFn oracle;
  bool clipped = false;
  double clip = 0.0;

  double raw_predict(Point p) const;
  double kernel_predict(Point p, bool local_linear) const;
};

std::string to_string(RegressorKind kind) {
  switch (kind) {
    case RegressorKind::nadaraya_watson: return "nadaraya-watson";
    case RegressorKind::local_linear: return "local-linear";
    case RegressorKind::logistic_index: return "logistic-index";
    case RegressorKind::oracle: return "oracle";
  }
  return "unknown";
}

RegressorKind regressor_kind_from_string(const std::string& name) {
  if (name == "nadaraya-watson" || name == "nw") return RegressorKind::nadaraya_watson;
  if (name == "local-linear" || name == "ll") return RegressorKind::local_linear;
  if (name == "logistic-index" || name == "logistic") return RegressorKind::logistic_index;
  if (name == "oracle") return RegressorKind::oracle;
  throw std::invalid_argument("unknown regressor kind '" + name + "'");
}

double RegressorFit::State::kernel_predict(Point p, bool local_linear) const {
  const std::size_t d = static_cast<std::size_t>(x.cols());
  if (p.size() != d) throw std::invalid_argument("prediction point has wrong dimension");
  const auto lo = std::lower_bound(first.begin(), first.end(), p[0] - kWindow * h[0]);
  const auto hi = std::upper_bound(first.begin(), first.end(), p[0] + kWindow * h[0]);
  auto begin = static_cast<std::size_t>(lo - first.begin());
  auto end = static_cast<std::size_t>(hi - first.begin());

  std::vector<double> logw;
  bool use_log = false;
  if (begin == end) {
    // No training point within the window: weigh everything in log space so
    // the nearest points dominate instead of dividing by zero.
    begin = 0;
    end = y.size();
    use_log = true;
  }

  const std::size_t m = end - begin;
  std::vector<double> w(m);
  double max_logw = -INFINITY;
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t i = begin + r;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double z = (x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - p[j]) / h[j];
      s += z * z;
    }
    w[r] = -0.5 * s;
    max_logw = std::max(max_logw, w[r]);
  }
  double total = 0.0;
  for (double& v : w) {
    v = std::exp(v - (use_log ? max_logw : 0.0));
    total += v;
  }
  if (!(total > 0.0)) {
    // Every point in the window underflowed; renormalize around the largest.
    total = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t i = begin + r;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double z = (x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - p[j]) / h[j];
        s += z * z;
      }
      w[r] = std::exp(-0.5 * s - max_logw);
      total += w[r];
    }
  }

  double nw = 0.0;
  for (std::size_t r = 0; r < m; ++r) nw += w[r] * y[begin + r];
  nw /= total;
  if (!local_linear) return nw;

  const auto q = static_cast<Eigen::Index>(d + 1);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd z(q);
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t i = begin + r;
    z(0) = 1.0;
    for (std::size_t j = 0; j < d; ++j)
      z(static_cast<Eigen::Index>(j + 1)) =
          (x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - p[j]) / h[j];
    M.selfadjointView<Eigen::Lower>().rankUpdate(z, w[r] / total);
    v += (w[r] / total) * y[begin + r] * z;
  }
  M.triangularView<Eigen::StrictlyUpper>() = M.transpose();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  const auto D = ldlt.vectorD();
  const double dmax = D.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(D.minCoeff() > 1e-10 * dmax)) return nw;
  const double a = ldlt.solve(v)(0);
  return std::isfinite(a) ? a : nw;
}

double RegressorFit::State::raw_predict(Point p) const {
  switch (kind) {
    case RegressorKind::oracle: return oracle(p);
    case RegressorKind::logistic_index: {
      if (p.size() + 1 != coef.size()) throw std::invalid_argument("prediction point has wrong dimension");
      double eta = coef[0];
      for (std::size_t j = 0; j < p.size(); ++j) eta += coef[j + 1] * p[j];
      return stats::logistic(eta);
    }
    case RegressorKind::nadaraya_watson: return kernel_predict(p, false);
    case RegressorKind::local_linear: return kernel_predict(p, true);
  }
  return NAN;
}

RegressorKind RegressorFit::kind() const { return state_->kind; }
const std::vector<double>& RegressorFit::bandwidth() const { return state_->h; }
const std::vector<std::size_t>& RegressorFit::train_rows() const { return state_->train_rows; }
int RegressorFit::fold_id() const { return state_->fold; }
const std::vector<double>& RegressorFit::coefficients() const { return state_->coef; }
const Eigen::MatrixXd& RegressorFit::coefficient_covariance() const { return state_->cov; }

double RegressorFit::predict(Point x) const {
  if (!state_) throw std::logic_error("predict on an empty RegressorFit");
  double v = state_->raw_predict(x);
  if (!std::isfinite(v)) throw NonFiniteError("first-stage prediction is not finite");
  if (state_->clipped) v = std::clamp(v, state_->clip, 1.0 - state_->clip);
  return v;
}

std::vector<double> RegressorFit::predict(const RowMatrix& points) const {
  std::vector<double> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) out[static_cast<std::size_t>(i)] = predict(row(points, i));
  return out;
}

ScalarFn RegressorFit::as_function() const {
  return [fit = *this](Point x) { return fit.predict(x); };
}

RegressorFit RegressorFit::with_fold(int fold) const {
  auto copy = std::make_shared<State>(*state_);
  copy->fold = fold;
  return RegressorFit(std::move(copy));
}

std::vector<double> silverman_bandwidth(const RowMatrix& x) {
  const auto n = static_cast<double>(x.rows());
  const auto d = static_cast<double>(x.cols());
  if (x.rows() == 0) throw std::invalid_argument("bandwidth for empty data");
  const double factor = std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
  std::vector<double> h(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::vector<double> col(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) col[static_cast<std::size_t>(i)] = x(i, j);
    const double sd = stats::stddev(col);
    h[static_cast<std::size_t>(j)] = sd > 0.0 ? sd * factor : 1.0;
  }
  return h;
}

namespace {

void fit_logistic(RegressorFit::State& s) {
  const auto n = static_cast<Eigen::Index>(s.y.size());
  const Eigen::Index q = s.x.cols() + 1;
  for (double v : s.y)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("logistic-index needs responses in [0,1]");
  Eigen::MatrixXd X(n, q);
  X.col(0).setOnes();
  X.rightCols(q - 1) = s.x;
  const Eigen::Map<const Eigen::VectorXd> y(s.y.data(), n);

  const double ybar = y.mean();
  if (ybar <= 0.0 || ybar >= 1.0) {
    // The likelihood has no maximizer; report the saturated limit.
    s.coef.assign(static_cast<std::size_t>(q), 0.0);
    s.coef[0] = ybar >= 1.0 ? 40.0 : -40.0;
    s.cov = Eigen::MatrixXd::Zero(q, q);
    return;
  }

  auto loglik = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd eta = X * theta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = eta(i);
      // log(1 + exp(e)) computed stably.
      const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      ll += y(i) * e - softplus;
    }
    return ll;
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(q);
  theta(0) = std::log(ybar / (1.0 - ybar));
  double ll = loglik(theta);
  Eigen::MatrixXd info(q, q);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = X * theta;
    Eigen::VectorXd p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = stats::logistic(eta(i));
      w(i) = p(i) * (1.0 - p(i));
    }
    const Eigen::VectorXd grad = X.transpose() * (y - p);
    info = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) break;
    double scale = 1.0;
    Eigen::VectorXd next = theta + step;
    double next_ll = loglik(next);
    while (next_ll < ll - 1e-12 && scale > 1e-8) {
      scale *= 0.5;
      next = theta + scale * step;
      next_ll = loglik(next);
    }
    theta = next;
    const bool done = (scale * step).cwiseAbs().maxCoeff() < 1e-10 || std::abs(next_ll - ll) < 1e-14 * (1 + std::abs(ll));
    ll = next_ll;
    if (done) break;
  }
  {
    const Eigen::VectorXd eta = X * theta;
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = stats::logistic(eta(i));
      w(i) = p * (1.0 - p);
    }
    info = X.transpose() * w.asDiagonal() * X;
  }
  s.coef.assign(theta.data(), theta.data() + q);
  s.cov = info.inverse();
}

std::shared_ptr<RegressorFit::State> build_state(const Sample& sample, const std::vector<std::size_t>& rows,
                                                 const std::vector<double>& response, const FitOptions& options) {
  if (rows.empty()) throw std::invalid_argument("first-stage fit on an empty subsample");
  auto s = std::make_shared<RegressorFit::State>();
  s->kind = options.kind;
  s->train_rows = rows;

  if (options.kind == RegressorKind::oracle) {
    if (!options.oracle) throw std::invalid_argument("oracle fit needs the true function");
    s->oracle = options.oracle;
    return s;
  }

  const auto d = static_cast<Eigen::Index>(sample.dim());
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sample.x(static_cast<Eigen::Index>(rows[a]), 0) < sample.x(static_cast<Eigen::Index>(rows[b]), 0);
  });
  s->x.resize(static_cast<Eigen::Index>(rows.size()), d);
  s->y.resize(rows.size());
  s->first.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[order[r]];
    s->x.row(static_cast<Eigen::Index>(r)) = sample.x.row(static_cast<Eigen::Index>(i));
    s->y[r] = response[i];
    if (!std::isfinite(s->y[r])) {
      std::ostringstream msg;
      msg << "row " << i << ": response is not finite";
      throw NonFiniteError(msg.str());
    }
    s->first[r] = s->x(static_cast<Eigen::Index>(r), 0);
  }

  if (options.kind == RegressorKind::logistic_index) {
    fit_logistic(*s);
    return s;
  }

  if (options.kind == RegressorKind::local_linear) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (s->x.col(j).maxCoeff() == s->x.col(j).minCoeff())
        throw std::invalid_argument("local-linear fit: covariate " + std::to_string(j) + " has zero variance");
    }
  }

  if (!options.bandwidth.empty()) {
    if (options.bandwidth.size() != 1 && options.bandwidth.size() != static_cast<std::size_t>(d))
      throw std::invalid_argument("bandwidth has wrong length");
    s->h.resize(static_cast<std::size_t>(d));
    for (std::size_t j = 0; j < s->h.size(); ++j) {
      s->h[j] = options.bandwidth.size() == 1 ? options.bandwidth[0] : options.bandwidth[j];
      if (!(s->h[j] > 0.0) || !std::isfinite(s->h[j])) throw std::invalid_argument("bandwidth must be positive");
    }
  } else {
    if (!(options.bandwidth_scale > 0.0)) throw std::invalid_argument("bandwidth scale must be positive");
    s->h = silverman_bandwidth(s->x);
    for (double& v : s->h) v *= options.bandwidth_scale;
  }
  return s;
}

double cv_scale(const Sample& sample, const std::vector<std::size_t>& rows, const std::vector<double>& response,
                const FitOptions& options) {
  static constexpr double grid[] = {0.25, 0.35, 0.5, 0.7, 1.0, 1.4, 2.0};
  const int K = static_cast<int>(std::min<std::size_t>(5, rows.size()));
  if (K < 2) return 1.0;
  const FoldPlan plan = make_folds(rows.size(), K, 0);
  double best = 1.0, best_err = INFINITY;
  for (double scale : grid) {
    FitOptions o = options;
    o.cv_bandwidth = false;
    o.bandwidth.clear();
    o.bandwidth_scale = scale;
    double err = 0.0;
    try {
      for (int k = 0; k < K; ++k) {
        std::vector<std::size_t> train, test;
        for (std::size_t r = 0; r < rows.size(); ++r) (plan.assignment[r] == k ? test : train).push_back(rows[r]);
        auto s = build_state(sample, train, response, o);
        for (std::size_t i : test) {
          const double e = s->raw_predict(sample.point(i)) - response[i];
          err += e * e;
        }
      }
    } catch (const std::invalid_argument&) {
      continue;
    }
    if (err < best_err) {
      best_err = err;
      best = scale;
    }
  }
  return best;
}

std::vector<std::size_t> resolve_rows(const Sample& sample, const std::optional<std::vector<std::size_t>>& rows) {
  if (rows) {
    for (std::size_t i : *rows)
      if (i >= sample.size()) throw std::invalid_argument("row index outside the sample");
    return *rows;
  }
  std::vector<std::size_t> all(sample.size());
  std::iota(all.begin(), all.end(), 0);
  return all;
}

std::shared_ptr<RegressorFit::State> fit_on(const Sample& sample, const std::vector<std::size_t>& rows,
                                            const std::vector<double>& response, const FitOptions& options) {
  FitOptions o = options;
  if (o.cv_bandwidth && o.bandwidth.empty() &&
      (o.kind == RegressorKind::nadaraya_watson || o.kind == RegressorKind::local_linear))
    o.bandwidth_scale = cv_scale(sample, rows, response, o);
  return build_state(sample, rows, response, o);
}

}  // namespace

RegressorFit fit_regression(const Sample& sample, int arm, const FitOptions& options,
                            std::optional<std::vector<std::size_t>> rows) {
  sample.validate();
  if (arm < 0 || arm >= sample.num_arms) throw std::invalid_argument("arm outside {0..J}");
  const std::vector<double>* response = &sample.y;
  if (options.response == Response::cost) {
    if (!sample.z) throw std::invalid_argument("cost regression needs a cost column");
    response = &*sample.z;
  }
  std::vector<std::size_t> arm_rows;
  for (std::size_t i : resolve_rows(sample, rows))
    if (sample.arm[i] == arm) arm_rows.push_back(i);
  if (arm_rows.empty()) throw std::invalid_argument("no rows received arm " + std::to_string(arm));
  return RegressorFit(fit_on(sample, arm_rows, *response, options));
}

RegressorFit fit_propensity(const Sample& sample, int treated_arm, const FitOptions& options,
                            std::optional<std::vector<std::size_t>> rows) {
  sample.validate();
  if (treated_arm < 0 || treated_arm >= sample.num_arms) throw std::invalid_argument("arm outside {0..J}");
  if (!(options.clip > 0.0 && options.clip < 0.5)) throw std::invalid_argument("clip must lie in (0, 1/2)");
  std::vector<double> indicator(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) indicator[i] = sample.arm[i] == treated_arm ? 1.0 : 0.0;
  FitOptions o = options;
  o.response = Response::outcome;
  auto state = fit_on(sample, resolve_rows(sample, rows), indicator, o);
  state->clipped = true;
  state->clip = options.clip;
  return RegressorFit(std::move(state));
}

std::vector<std::size_t> FoldPlan::rows_in(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (assignment[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::rows_outside(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (assignment[i] != fold) out.push_back(i);
  return out;
}

FoldPlan make_folds(std::size_t n, int K, std::uint64_t seed) {
  if (K < 2) throw std::invalid_argument("cross-fitting needs K >= 2");
  if (static_cast<std::size_t>(K) > n) throw std::invalid_argument("more folds than rows");
  FoldPlan plan{n, K, seed, std::vector<int>(n)};
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed, "first_stage:folds");
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  for (std::size_t r = 0; r < n; ++r) plan.assignment[perm[r]] = static_cast<int>(r % static_cast<std::size_t>(K));
  return plan;
}

const RegressorFit& CrossFit::fit_for_row(std::size_t i) const {
  if (i >= plan.n) throw std::invalid_argument("row outside the fold plan");
  return fits.at(static_cast<std::size_t>(plan.assignment[i]));
}

std::vector<double> CrossFit::predict_rows(const Sample& sample) const {
  if (sample.size() != plan.n) throw std::invalid_argument("sample size differs from the fold plan");
  std::vector<double> out(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) out[i] = fit_for_row(i).predict(sample.point(i));
  return out;
}

void CrossFit::check_no_leakage() const {
  if (fits.size() != static_cast<std::size_t>(plan.K)) throw LeakageError("one fit per fold is required");
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (fits[k].fold_id() != static_cast<int>(k)) throw LeakageError("fit " + std::to_string(k) + " has a foreign fold id");
    for (std::size_t i : fits[k].train_rows()) {
      if (i >= plan.n || plan.assignment[i] == static_cast<int>(k)) {
        std::ostringstream msg;
        msg << "fit for fold " << k << " was trained on row " << i << " of its own fold";
        throw LeakageError(msg.str());
      }
    }
  }
}

CrossFit cross_fit(const Sample& sample, const FoldPlan& plan, const CrossFitSpec& spec) {
  if (plan.n != sample.size()) throw std::invalid_argument("fold plan size differs from the sample");
  CrossFit cf{plan, {}};
  for (int k = 0; k < plan.K; ++k) {
    auto rows = plan.rows_outside(k);
    RegressorFit fit = spec.target == FitTarget::propensity ? fit_propensity(sample, spec.arm, spec.options, rows)
                                                            : fit_regression(sample, spec.arm, spec.options, rows);
    cf.fits.push_back(fit.with_fold(k));
  }
  cf.check_no_leakage();
  return cf;
}

SupNormReport supnorm_diagnostic(const RegressorFit& fit, const ScalarFn& truth, const RowMatrix& grid) {
  if (grid.rows() == 0) throw std::invalid_argument("supnorm_diagnostic needs a nonempty grid");
  SupNormReport r;
  r.grid = grid;
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    const Point x = row(grid, i);
    const double e = std::abs(fit.predict(x) - truth(x));
    if (!std::isfinite(e)) throw NonFiniteError("sup-norm error is not finite");
    r.max_abs_error = std::max(r.max_abs_error, e);
  }
  return r;
}

double supnorm_rate(std::span<const double> n, std::span<const double> max_abs_error) {
  return stats::loglog_slope(n, max_abs_error);
}

RowMatrix grid_1d(double lo, double hi, std::size_t points) {
  if (points < 2 || !(lo < hi)) throw std::invalid_argument("grid_1d needs lo < hi and >= 2 points");
  RowMatrix g(static_cast<Eigen::Index>(points), 1);
  for (std::size_t i = 0; i < points; ++i)
    g(static_cast<Eigen::Index>(i), 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

}  // namespace optalloc
