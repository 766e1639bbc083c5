#include "optalloc/dml.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "optalloc/rng.hpp"
#include "optalloc/stats.hpp"

namespace optalloc {

namespace {

void check_shapes(const Sample& sample, const Weights& lambda, const FoldPlan& plan, const ArmValues& g) {
  sample.validate();
  const auto J1 = static_cast<std::size_t>(sample.num_arms);
  if (lambda.size() != J1) throw std::invalid_argument("lambda arity differs from the number of arms");
  for (double l : lambda.lambda)
    if (!std::isfinite(l)) throw std::invalid_argument("lambda must be finite");
  if (static_cast<std::size_t>(g.rows()) != sample.size() || static_cast<std::size_t>(g.cols()) != J1)
    throw std::invalid_argument("nuisance matrix must be n x (J+1)");
  if (plan.n != sample.size() || plan.assignment.size() != sample.size())
    throw std::invalid_argument("fold plan size differs from the sample");
}

WelfareEstimate finish(std::vector<double> scores, const FoldPlan& plan, std::string method) {
  WelfareEstimate e;
  e.n_eval = scores.size();
  for (double s : scores)
    if (!std::isfinite(s)) throw NonFiniteError("non-finite score value");
  e.point = stats::mean(scores);
  e.se = stats::stddev(scores) / std::sqrt(static_cast<double>(scores.size()));
  std::vector<double> sum(static_cast<std::size_t>(plan.K), 0.0), count(static_cast<std::size_t>(plan.K), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto k = static_cast<std::size_t>(plan.assignment[i]);
    sum[k] += scores[i];
    count[k] += 1.0;
  }
  for (std::size_t k = 0; k < sum.size(); ++k) e.fold_points.push_back(count[k] > 0 ? sum[k] / count[k] : 0.0);
  e.score_values = std::move(scores);
  e.method = std::move(method);
  return e;
}

}  // namespace

WelfareEstimate dml_from_values(const Sample& sample, const Weights& lambda, const FoldPlan& plan,
                                const ArmValues& g, const ArmValues& p, double clip) {
  check_shapes(sample, lambda, plan, g);
  if (p.rows() != g.rows() || p.cols() != g.cols()) throw std::invalid_argument("propensity matrix must be n x (J+1)");
  const std::size_t n = sample.size();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const std::size_t j = argmax_arm(lambda.lambda, row(g, r));
    const double l = lambda.lambda[j];
    if (l == 0.0) {
      scores[i] = 0.0;
      continue;
    }
    const double gj = g(r, static_cast<Eigen::Index>(j));
    const double pj = p(r, static_cast<Eigen::Index>(j));
    if (!(pj >= clip)) {
      std::ostringstream msg;
      msg << "row " << i << ": propensity " << pj << " for arm " << j << " is below the clip level " << clip;
      throw Error(msg.str());
    }
    const double dij = sample.arm[i] == static_cast<int>(j) ? 1.0 : 0.0;
    scores[i] = l * (gj + dij / pj * (sample.y[i] - gj));
  }
  return finish(std::move(scores), plan, "dml");
}

ArmValues held_out_values(const Sample& sample, const std::vector<CrossFit>& fits) {
  ArmValues out(static_cast<Eigen::Index>(sample.size()), static_cast<Eigen::Index>(fits.size()));
  for (std::size_t j = 0; j < fits.size(); ++j) {
    fits[j].check_no_leakage();
    const auto v = fits[j].predict_rows(sample);
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i];
  }
  return out;
}

namespace {

void check_plans(const FoldPlan& plan, const std::vector<CrossFit>& fits, std::size_t arms) {
  if (fits.size() != arms) throw std::invalid_argument("need one cross-fit per arm");
  for (const auto& f : fits)
    if (f.plan.assignment != plan.assignment) throw LeakageError("cross-fit uses a different fold plan");
}

}  // namespace

WelfareEstimate dml_estimate(const Sample& sample, const Weights& lambda, const FoldPlan& plan,
                             const std::vector<CrossFit>& g_fits, const std::vector<CrossFit>& p_fits, double clip) {
  const auto J1 = static_cast<std::size_t>(sample.num_arms);
  check_plans(plan, g_fits, J1);
  check_plans(plan, p_fits, J1);
  return dml_from_values(sample, lambda, plan, held_out_values(sample, g_fits), held_out_values(sample, p_fits),
                         clip);
}

WelfareEstimate plugin_from_values(const Sample& sample, const Weights& lambda, const FoldPlan& plan,
                                   const ArmValues& g) {
  check_shapes(sample, lambda, plan, g);
  std::vector<double> scores(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const std::size_t j = argmax_arm(lambda.lambda, row(g, r));
    scores[i] = lambda.lambda[j] * g(r, static_cast<Eigen::Index>(j));
  }
  return finish(std::move(scores), plan, "plug-in");
}

WelfareEstimate plugin_estimate(const Sample& sample, const Weights& lambda, const FoldPlan& plan,
                                const std::vector<CrossFit>& g_fits) {
  check_plans(plan, g_fits, static_cast<std::size_t>(sample.num_arms));
  return plugin_from_values(sample, lambda, plan, held_out_values(sample, g_fits));
}

DmlFits fit_dml_nuisances(const Sample& sample, int K, std::uint64_t seed, const FitOptions& g_options,
                          const FitOptions& p_options) {
  DmlFits out;
  out.plan = make_folds(sample.size(), K, seed);
  for (int j = 0; j < sample.num_arms; ++j) {
    out.g.push_back(cross_fit(sample, out.plan, {FitTarget::regression, j, g_options}));
    out.p.push_back(cross_fit(sample, out.plan, {FitTarget::propensity, j, p_options}));
  }
  return out;
}

namespace {

std::string number(double v) {
  if (!std::isfinite(v)) throw NonFiniteError("refusing to write a non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string WelfareEstimate::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["point"] = point;
  j["se"] = se;
  j["n_eval"] = n_eval;
  j["fold_points"] = fold_points;
  if (!std::isfinite(point) || !std::isfinite(se)) throw NonFiniteError("refusing to write a non-finite estimate");
  return j.dump(2);
}

FirstStageMode first_stage_mode_from_string(const std::string& name) {
  if (name == "oracle") return FirstStageMode::oracle;
  if (name == "injected") return FirstStageMode::injected;
  if (name == "kernel") return FirstStageMode::kernel;
  throw std::invalid_argument("unknown first stage '" + name + "' (oracle, injected, kernel)");
}

double OrthogonalityReport::slope(const std::string& key) const {
  for (const auto& [k, v] : slopes)
    if (k == key) return v;
  throw std::out_of_range("no slope recorded for " + key);
}

std::string OrthogonalityReport::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["reps"] = reps;
  j["gamma"] = gamma;
  j["delta"] = delta;
  j["delta1"] = delta1;
  j["delta2"] = delta2;
  j["delta2_1"] = delta2_1;
  j["delta2_2"] = delta2_2;
  j["delta3"] = delta3;
  j["dml_bias"] = dml_bias;
  j["dml_bias_se"] = dml_bias_se;
  j["plugin_bias"] = plugin_bias;
  j["plugin_bias_se"] = plugin_bias_se;
  nlohmann::json s = nlohmann::json::object();
  for (const auto& [k, v] : slopes) s[k] = v;
  j["slopes"] = s;
  j["margin_flag"] = margin_flag;
  return j.dump(2);
}

namespace {

// Log-log slope, or nothing when some value is not positive.
std::optional<double> maybe_slope(const std::vector<std::size_t>& n, const std::vector<double>& v) {
  std::vector<double> x(n.begin(), n.end());
  for (double e : v)
    if (!(e > 0.0)) return std::nullopt;
  return stats::loglog_slope(x, v);
}

}  // namespace

OrthogonalityReport orthogonality_diagnostic(const Dgp& dgp, const Weights& lambda,
                                             const std::vector<std::size_t>& n_ladder, int reps,
                                             const FirstStageSpec& fs, std::uint64_t seed) {
  if (reps < 20) throw std::invalid_argument("orthogonality diagnostic needs reps >= 20");
  if (n_ladder.size() < 2) throw std::invalid_argument("n ladder needs at least two sizes");
  if (dgp.roc || dgp.num_arms < 2) throw std::invalid_argument("design " + dgp.name + " has no treatment arms");
  const auto J1 = static_cast<std::size_t>(dgp.num_arms);
  if (lambda.size() != J1) throw std::invalid_argument("lambda arity mismatch");

  OrthogonalityReport rep;
  rep.reps = reps;
  rep.gamma = dgp.quadrature_1d() ? population_gamma(dgp, lambda) : dgp.gamma_closed_form(lambda);
  const double clip = fs.p_options.clip;

  for (std::size_t a = 0; a < n_ladder.size(); ++a) {
    const std::size_t n = n_ladder[a];
    const double root_n = std::sqrt(static_cast<double>(n));
    const double shrink = std::pow(static_cast<double>(n), -fs.rate);
    std::vector<double> d, d1, d2, d21, d22, d3, dml_err, plug_err;
    for (int r = 0; r < reps; ++r) {
      const std::uint64_t rep_id = (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(r);
      const Sample s = dgp.sample(n, seed, rep_id);
      const FoldPlan plan = make_folds(n, fs.folds, substream_seed(seed, "dml:folds", rep_id));
      ArmValues G(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(J1)), P = G;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < J1; ++j) {
          G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dgp.g[j](s.point(i));
          P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dgp.propensity[j](s.point(i));
        }
      ArmValues Gh = G, Ph = P;
      if (fs.mode == FirstStageMode::injected) {
        for (std::size_t i = 0; i < n; ++i) {
          const double bump = 1.0 + s.x(static_cast<Eigen::Index>(i), 0);
          for (std::size_t j = 0; j < J1; ++j) {
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            Gh(ii, jj) += fs.g_scale * shrink * bump * (j % 2 == 1 ? 1.0 : -0.5);
            Ph(ii, jj) = std::clamp(P(ii, jj) + fs.p_scale * shrink * bump * (j % 2 == 1 ? -1.0 : 1.0), clip,
                                    1.0 - clip);
          }
        }
      } else if (fs.mode == FirstStageMode::kernel) {
        std::vector<CrossFit> gf, pf;
        for (int j = 0; j < dgp.num_arms; ++j) {
          gf.push_back(cross_fit(s, plan, {FitTarget::regression, j, fs.g_options}));
          pf.push_back(cross_fit(s, plan, {FitTarget::propensity, j, fs.p_options}));
        }
        Gh = held_out_values(s, gf);
        Ph = held_out_values(s, pf);
      }
      const WelfareEstimate dml = dml_from_values(s, lambda, plan, Gh, Ph, clip);
      const WelfareEstimate plug = plugin_from_values(s, lambda, plan, Gh);

      double t1 = 0, t21 = 0, t22 = 0, t3 = 0, oracle_sum = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const std::size_t jh = argmax_arm(lambda.lambda, row(Gh, ii));
        const std::size_t js = argmax_arm(lambda.lambda, row(G, ii));
        const double y = s.y[i];
        auto parts = [&](std::size_t j) {
          const auto jj = static_cast<Eigen::Index>(j);
          const double dij = s.arm[i] == static_cast<int>(j) ? 1.0 : 0.0;
          return std::array<double, 2>{G(ii, jj), dij / P(ii, jj) * (y - G(ii, jj))};
        };
        const auto ph = parts(jh), ps = parts(js);
        oracle_sum += lambda.lambda[js] * (ps[0] + ps[1]);
        {
          const auto jj = static_cast<Eigen::Index>(jh);
          const double l = lambda.lambda[jh];
          const double dij = s.arm[i] == static_cast<int>(jh) ? 1.0 : 0.0;
          const double gh = Gh(ii, jj), pr = Ph(ii, jj), g0 = G(ii, jj), p0 = P(ii, jj);
          if (l != 0.0) {
            t1 += l * ((gh - g0) + (dij / pr * (y - gh) - dij / p0 * (y - g0)));
            t3 += l * ((1.0 - dij / p0) * (gh - g0) - dij / (p0 * p0) * (y - g0) * (pr - p0));
          }
        }
        t21 += lambda.lambda[jh] * ph[1] - lambda.lambda[js] * ps[1];
        t22 += lambda.lambda[jh] * ph[0] - lambda.lambda[js] * ps[0];
      }
      const double scale = root_n / static_cast<double>(n);
      const double oracle_point = oracle_sum / static_cast<double>(n);
      d.push_back(root_n * (dml.point - oracle_point));
      d1.push_back(scale * t1);
      d21.push_back(scale * t21);
      d22.push_back(scale * t22);
      d2.push_back(scale * (t21 + t22));
      d3.push_back(scale * t3);
      plug_err.push_back(root_n * (plug.point - rep.gamma));
    }
    auto mean_abs = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += std::abs(x);
      return s / static_cast<double>(v.size());
    };
    const double sr = std::sqrt(static_cast<double>(reps));
    rep.n.push_back(n);
    rep.delta.push_back(mean_abs(d));
    rep.delta1.push_back(mean_abs(d1));
    rep.delta2.push_back(mean_abs(d2));
    rep.delta2_1.push_back(mean_abs(d21));
    rep.delta2_2.push_back(mean_abs(d22));
    rep.delta3.push_back(mean_abs(d3));
    rep.dml_bias.push_back(std::abs(stats::mean(d)));
    rep.dml_bias_se.push_back(stats::stddev(d) / sr);
    rep.plugin_bias.push_back(std::abs(stats::mean(plug_err)));
    rep.plugin_bias_se.push_back(stats::stddev(plug_err) / sr);
  }
  const std::pair<const char*, const std::vector<double>*> series[] = {
      {"delta", &rep.delta},       {"delta1", &rep.delta1},     {"delta2", &rep.delta2},
      {"delta2_1", &rep.delta2_1}, {"delta2_2", &rep.delta2_2}, {"delta3", &rep.delta3},
      {"dml_bias", &rep.dml_bias}, {"plugin_bias", &rep.plugin_bias}};
  for (const auto& [key, values] : series)
    if (auto s = maybe_slope(rep.n, *values)) rep.slopes.emplace_back(key, *s);
  for (const auto& [k, v] : rep.slopes)
    if (k == "delta2") rep.margin_flag = v >= -0.1;
  return rep;
}

void RegretTable::write_csv(std::ostream& out) const {
  out << "n,mean_regret,se,slope_so_far\n";
  for (const auto& r : rows)
    out << r.n << ',' << number(r.mean_regret) << ',' << number(r.se) << ',' << number(r.slope_so_far) << '\n';
}

RegretTable regret_experiment(const Dgp& dgp, const Weights& lambda, const std::vector<std::size_t>& n_ladder,
                              int reps, const FitOptions& learner, std::uint64_t seed) {
  if (!dgp.quadrature_1d() || dgp.roc || dgp.num_arms < 2)
    throw std::invalid_argument("population gamma is not computable for design " + dgp.name);
  if (reps < 1) throw std::invalid_argument("reps must be at least 1");
  if (n_ladder.empty()) throw std::invalid_argument("empty n ladder");
  const auto J1 = static_cast<std::size_t>(dgp.num_arms);
  if (lambda.size() != J1) throw std::invalid_argument("lambda arity mismatch");
  const double gamma = population_gamma(dgp, lambda);

  RegretTable table;
  table.min_regret = INFINITY;
  std::vector<double> ns, means;
  for (std::size_t a = 0; a < n_ladder.size(); ++a) {
    const std::size_t n = n_ladder[a];
    std::vector<double> regrets;
    for (int r = 0; r < reps; ++r) {
      const std::uint64_t rep_id = (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(r);
      const Sample s = dgp.sample(n, seed, rep_id);
      std::vector<RegressorFit> fits;
      for (std::size_t j = 0; j < J1; ++j) {
        FitOptions o = learner;
        if (o.kind == RegressorKind::oracle) o.oracle = dgp.g[j];
        fits.push_back(fit_regression(s, static_cast<int>(j), o));
      }
      auto arm_of = [&](double x) {
        const double p[1] = {x};
        std::vector<double> v(J1);
        for (std::size_t j = 0; j < J1; ++j) v[j] = fits[j].predict(p);
        return static_cast<int>(argmax_arm(lambda.lambda, v));
      };
      const double regret = gamma - population_policy_value(dgp, lambda, arm_of, 1024);
      table.min_regret = std::min(table.min_regret, regret);
      regrets.push_back(regret);
    }
    RegretRow row;
    row.n = n;
    row.mean_regret = stats::mean(regrets);
    row.se = stats::stddev(regrets) / std::sqrt(static_cast<double>(reps));
    row.sqrt_n_regret = std::sqrt(static_cast<double>(n)) * row.mean_regret;
    ns.push_back(static_cast<double>(n));
    means.push_back(row.mean_regret);
    bool positive = std::all_of(means.begin(), means.end(), [](double v) { return v > 0.0; });
    row.slope_so_far = ns.size() >= 2 && positive ? stats::loglog_slope(ns, means) : 0.0;
    table.rows.push_back(row);
  }
  table.slope = table.rows.back().slope_so_far;
  return table;
}

MarginReport margin_diagnostic(const Dgp& dgp, const Weights& lambda, const std::vector<double>& t_grid,
                               std::size_t n, std::uint64_t seed) {
  if (dgp.num_arms < 2) throw std::invalid_argument("margin diagnostic needs at least two arms");
  if (lambda.size() != static_cast<std::size_t>(dgp.num_arms)) throw std::invalid_argument("lambda arity mismatch");
  if (t_grid.empty() || n == 0) throw std::invalid_argument("margin diagnostic needs t values and n > 0");
  for (double t : t_grid)
    if (!(t > 0.0)) throw std::invalid_argument("margin t values must be positive");
  Rng rng(seed, "dml:margin");
  std::vector<double> x(dgp.d), gaps(n);
  for (std::size_t i = 0; i < n; ++i) {
    dgp.draw_x(rng, x);
    double top = -INFINITY, second = -INFINITY;
    for (std::size_t j = 0; j < dgp.g.size(); ++j) {
      const double v = lambda.lambda[j] * dgp.g[j](x);
      if (v > top) {
        second = top;
        top = v;
      } else if (v > second) {
        second = v;
      }
    }
    gaps[i] = top - second;
  }
  std::sort(gaps.begin(), gaps.end());
  MarginReport rep;
  rep.n = n;
  rep.t = t_grid;
  double lo = INFINITY, hi = 0.0;
  for (double t : t_grid) {
    const auto count = static_cast<double>(std::lower_bound(gaps.begin(), gaps.end(), t) - gaps.begin());
    const double ratio = count / static_cast<double>(n) / t;
    rep.ratio.push_back(ratio);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  if (!(lo > 0.0)) throw Error("no draws within the smallest t of the margin; increase n");
  rep.max_over_min = hi / lo;
  return rep;
}

}  // namespace optalloc
