#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "optalloc/constrained_roc.hpp"
#include "optalloc/dgp.hpp"
#include "optalloc/dml.hpp"
#include "optalloc/experiments.hpp"
#include "optalloc/harness.hpp"
#include "optalloc/stats.hpp"

#ifndef OPTALLOC_GIT_DESCRIBE
#define OPTALLOC_GIT_DESCRIBE "unknown"
#endif

namespace optalloc {

std::string git_describe() { return OPTALLOC_GIT_DESCRIBE; }

namespace {

using Metrics = std::vector<std::pair<std::string, double>>;

std::string key_of(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

std::vector<std::size_t> size_list(const Config& cfg, const std::string& key, const std::string& fallback) {
  std::vector<std::size_t> out;
  for (double v : parse_number_list(cfg.get_or(key, fallback))) {
    if (!(v >= 1.0) || v != std::floor(v)) throw std::invalid_argument(key + " entries must be positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

Weights lambda_of(const Config& cfg) { return Weights(parse_number_list(cfg.get_or("lambda", "1,1"))); }

FitOptions fit_options(const Config& cfg, const std::string& key, const std::string& fallback) {
  FitOptions o;
  o.kind = regressor_kind_from_string(cfg.get_or(key, fallback));
  if (cfg.has("bandwidth")) o.bandwidth = parse_number_list(cfg.get("bandwidth"));
  o.bandwidth_scale = cfg.get_double_or("bandwidth_scale", 1.0);
  o.cv_bandwidth = cfg.get_or("cv_bandwidth", "false") == "true";
  o.clip = cfg.get_double_or("clip", 1e-3);
  return o;
}

CsvSchema schema_of(const Config& cfg, const std::string& default_arm, bool want_cost) {
  CsvSchema s;
  if (cfg.has("x_columns")) {
    std::stringstream ss(cfg.get("x_columns"));
    std::string item;
    while (std::getline(ss, item, ',')) s.x_columns.push_back(item);
  }
  s.arm_column = cfg.get_or("arm_column", default_arm);
  s.y_column = cfg.get_or("y_column", "y");
  s.z_column = cfg.get_or("z_column", want_cost ? "z" : "");
  s.num_arms = static_cast<int>(cfg.get_int_or("num_arms", 2));
  return s;
}

// Sample from "input" or from "dgp" with "n".
Sample load_sample(const Config& cfg, std::uint64_t seed, const std::string& default_arm, bool want_cost,
                   const Dgp** dgp_out) {
  *dgp_out = nullptr;
  if (cfg.has("input") == cfg.has("dgp")) throw std::invalid_argument("set exactly one of 'input' and 'dgp'");
  if (cfg.has("input")) return ingest_csv(cfg.get("input"), schema_of(cfg, default_arm, want_cost));
  const Dgp& d = find_dgp(cfg.get("dgp"));
  *dgp_out = &d;
  const long long n = cfg.get_int("n");
  if (n < 1) throw std::invalid_argument("n must be positive");
  return d.sample(static_cast<std::size_t>(n), seed, 0, want_cost);
}

std::string roc_csv(const RocCurve& c) {
  std::ostringstream s;
  c.write_csv(s);
  return s.str();
}

Metrics task_roc(const Config& cfg, std::uint64_t seed, OutputDir& out) {
  const Dgp* dgp = nullptr;
  const Sample s = load_sample(cfg, seed, "", false, &dgp);
  std::vector<double> p_hat;
  if (cfg.has("score_column")) {
    if (!cfg.has("input")) throw std::invalid_argument("score_column needs an input file");
    p_hat = read_csv_column(cfg.get("input"), cfg.get("score_column"));
  } else {
    FitOptions o = fit_options(cfg, "first_stage", dgp && dgp->roc ? "oracle" : "logistic-index");
    if (o.kind == RegressorKind::oracle) {
      if (!dgp || !dgp->roc) throw std::invalid_argument("oracle scores need an ROC design");
      o.oracle = dgp->roc->p;
    }
    p_hat = fit_regression(s, 0, o).predict(s.x);
  }
  const auto grid = parse_grid(cfg.get_or("alpha_grid", "0.05:0.95:0.05"));
  const long long B = cfg.get_int_or("boot", 0);
  const RocCurve c = B > 0 ? roc_bootstrap(s.y, p_hat, grid, static_cast<int>(B), seed, cfg.get_double_or("level", 0.95))
                           : roc_estimate(s.y, p_hat, grid);
  out.write("roc.csv", roc_csv(c));
  out.write("roc.json", c.to_json());
  Metrics m{{"n", static_cast<double>(c.n)}, {"rows", static_cast<double>(grid.size())}, {"p_bar", c.p_bar}};
  for (std::size_t g = 0; g < grid.size(); ++g) m.emplace_back("beta_hat_" + key_of(grid[g]), c.beta_hat[g]);
  return m;
}

Metrics task_allocate(const Config& cfg, std::uint64_t seed, OutputDir& out) {
  const Dgp* dgp = nullptr;
  const Sample s = load_sample(cfg, seed, "d", true, &dgp);
  if (s.num_arms != 2) throw std::invalid_argument("allocation needs a two-arm sample");
  const auto [lo, hi] = parse_range(cfg.get_or("k_domain", "0:10"));
  const int K = static_cast<int>(cfg.get_int_or("folds", 5));
  FitOptions go = fit_options(cfg, "first_stage", "local-linear");
  FitOptions co = go;
  co.response = Response::cost;
  std::vector<std::vector<double>> fitted;  // g0, g1, c0, c1
  const bool oracle = go.kind == RegressorKind::oracle;
  if (oracle && !dgp) throw std::invalid_argument("oracle fits need a design");
  for (const auto& [opts, cost] : {std::pair{go, false}, std::pair{co, true}}) {
    for (int j = 0; j < 2; ++j) {
      FitOptions o = opts;
      if (oracle) o.oracle = cost ? dgp->c.at(static_cast<std::size_t>(j)) : dgp->g.at(static_cast<std::size_t>(j));
      if (K >= 2) {
        const FoldPlan plan = make_folds(s.size(), K, seed);
        fitted.push_back(cross_fit(s, plan, {FitTarget::regression, j, o}).predict_rows(s));
      } else {
        fitted.push_back(fit_regression(s, j, o).predict(s.x));
      }
    }
  }
  const ConstrainedProblem problem = make_constrained_problem(fitted[0], fitted[1], fitted[2], fitted[3], {lo, hi});
  const std::vector<double> alphas =
      cfg.has("alpha") ? std::vector<double>{cfg.get_double("alpha")} : parse_grid(cfg.get("alpha_grid"));
  const StepCurve curve(problem);
  std::ostringstream csv;
  csv << "alpha,k_hat,alpha_at_k,beta_at_k,treated_share\n";
  Metrics m;
  for (double a : alphas) {
    if (!(a > 0.0)) throw std::invalid_argument("alpha must be positive");
    const double k = curve.threshold(a);
    double treated = 0.0;
    for (std::size_t i = 0; i < problem.size(); ++i) treated += problem.gain[i] / problem.cost[i] > k ? 1.0 : 0.0;
    treated /= static_cast<double>(problem.size());
    csv << format_double(a) << ',' << format_double(k) << ',' << format_double(curve.alpha(k)) << ','
        << format_double(curve.beta(k)) << ',' << format_double(treated) << '\n';
    m.emplace_back("k_hat_" + key_of(a), k);
    m.emplace_back("beta_at_k_" + key_of(a), curve.beta(k));
  }
  out.write("allocation.csv", csv.str());
  return m;
}

Metrics task_dml(const Config& cfg, std::uint64_t seed, OutputDir& out) {
  const Dgp* dgp = nullptr;
  const Sample s = load_sample(cfg, seed, "d", false, &dgp);
  const Weights lambda = lambda_of(cfg);
  const int K = static_cast<int>(cfg.get_int_or("folds", 5));
  const std::string mode = cfg.get_or("first_stage", "kernel");
  FoldPlan plan;
  WelfareEstimate dml, plug;
  if (mode == "oracle") {
    if (!dgp) throw std::invalid_argument("oracle nuisances need a design");
    plan = make_folds(s.size(), K, seed);
    ArmValues G(static_cast<Eigen::Index>(s.size()), s.num_arms), P = G;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (int j = 0; j < s.num_arms; ++j) {
        G(static_cast<Eigen::Index>(i), j) = dgp->g[static_cast<std::size_t>(j)](s.point(i));
        P(static_cast<Eigen::Index>(i), j) = dgp->propensity[static_cast<std::size_t>(j)](s.point(i));
      }
    dml = dml_from_values(s, lambda, plan, G, P, cfg.get_double_or("clip", 1e-3));
    plug = plugin_from_values(s, lambda, plan, G);
  } else if (mode == "kernel") {
    const DmlFits fits = fit_dml_nuisances(s, K, seed, fit_options(cfg, "g_learner", "local-linear"),
                                           fit_options(cfg, "p_learner", "local-linear"));
    plan = fits.plan;
    dml = dml_estimate(s, lambda, plan, fits.g, fits.p, cfg.get_double_or("clip", 1e-3));
    plug = plugin_estimate(s, lambda, plan, fits.g);
  } else {
    throw std::invalid_argument("dml first_stage must be kernel or oracle");
  }
  nlohmann::ordered_json j;
  j["dml"] = nlohmann::json::parse(dml.to_json());
  j["plugin"] = nlohmann::json::parse(plug.to_json());
  Metrics m{{"dml_point", dml.point}, {"dml_se", dml.se}, {"plugin_point", plug.point}};
  if (dgp && dgp->quadrature_1d() && !dgp->roc) {
    const double gamma = population_gamma(*dgp, lambda);
    j["gamma"] = gamma;
    m.emplace_back("gamma", gamma);
    m.emplace_back("dml_z", dml.se > 0 ? (dml.point - gamma) / dml.se : 0.0);
  }
  out.write("dml.json", j.dump(2));
  std::ostringstream csv;
  csv << "row,fold,dml_score,plugin_score\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    csv << i << ',' << plan.assignment[i] << ',' << format_double(dml.score_values[i]) << ','
        << format_double(plug.score_values[i]) << '\n';
  out.write("scores.csv", csv.str());
  return m;
}

const Dgp& roc_dgp(const Config& cfg) {
  const Dgp& d = find_dgp(cfg.get("dgp"));
  if (!d.roc) throw std::invalid_argument("design " + d.name + " has no closed-form ROC");
  return d;
}

Metrics task_coverage(const Config& cfg, std::uint64_t seed, OutputDir& out) {
  const Dgp& d = roc_dgp(cfg);
  const auto grid = parse_grid(cfg.get_or("alpha_grid", "0.1,0.25,0.5"));
  const auto n = static_cast<std::size_t>(cfg.get_int_or("n", 2000));
  const int B = static_cast<int>(cfg.get_int_or("boot", 300));
  const int reps = static_cast<int>(cfg.get_int_or("reps", 200));
  const double level = cfg.get_double_or("level", 0.95);
  if (reps < 1) throw std::invalid_argument("reps must be at least 1");
  FitOptions o = fit_options(cfg, "first_stage", d.roc->theta ? "logistic-index" : "oracle");
  o.oracle = d.roc->p;
  const auto cov = roc_coverage(d, grid, n, B, reps, o, level, seed);
  std::ostringstream csv;
  csv << "alpha,truth,coverage_basic,coverage_sym,coverage_influence,median_width\n";
  Metrics m;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    csv << format_double(grid[g]) << ',' << format_double(cov.truth[g]) << ',' << format_double(cov.basic[g]) << ','
        << format_double(cov.symmetric[g]) << ',' << format_double(cov.influence[g]) << ','
        << format_double(cov.median_width[g]) << '\n';
    m.emplace_back("coverage_basic_" + key_of(grid[g]), cov.basic[g]);
    m.emplace_back("coverage_sym_" + key_of(grid[g]), cov.symmetric[g]);
  }
  m.emplace_back("coverage_basic_min", *std::min_element(cov.basic.begin(), cov.basic.end()));
  m.emplace_back("coverage_basic_max", *std::max_element(cov.basic.begin(), cov.basic.end()));
  out.write("coverage.csv", csv.str());
  return m;
}

Metrics task_regret(const Config& cfg, std::uint64_t seed, OutputDir& out) {
  const Dgp& d = find_dgp(cfg.get_or("dgp", "twoarm-margin"));
  const auto ladder = size_list(cfg, "ladder", "500,1000,2000,4000,8000,16000");
  FitOptions o = fit_options(cfg, "learner", "local-linear");
  const RegretTable t = regret_experiment(d, lambda_of(cfg), ladder, static_cast<int>(cfg.get_int_or("reps", 50)), o,
                                          seed);
  std::ostringstream csv;
  t.write_csv(csv);
  out.write("regret.csv", csv.str());
  std::vector<double> ns, rn;
  for (const auto& r : t.rows) {
    ns.push_back(static_cast<double>(r.n));
    rn.push_back(r.sqrt_n_regret);
  }
  Metrics m{{"slope", t.slope}, {"min_regret", t.min_regret}};
  if (std::all_of(rn.begin(), rn.end(), [](double v) { return v > 0.0; }) && rn.size() >= 2) {
    m.emplace_back("sqrt_n_slope", stats::loglog_slope(ns, rn));
    m.emplace_back("sqrt_n_last_over_first", rn.back() / rn.front());
  }
  return m;
}

Metrics task_limit(const Config& cfg, std::uint64_t seed, OutputDir& out) {
  const Dgp& d = roc_dgp(cfg);
  const auto grid = parse_grid(cfg.get_or("alpha_grid", "0.25"));
  LimitOptions o;
  o.seed = seed;
  o.B = static_cast<int>(cfg.get_int_or("draws", 2000));
  o.first_stage = cfg.get_or("first_stage", "none") == "parametric" ? FirstStage::parametric : FirstStage::none;
  o.covariance_draws = static_cast<std::size_t>(cfg.get_int_or("covariance_draws", 200000));
  o.plan.budget = static_cast<std::uint64_t>(cfg.get_int_or("budget", 1 << 22));
  o.plan.seed = seed;
  if (cfg.has("t_delta")) o.t_Delta = cfg.get_double("t_delta");
  if (cfg.has("t_q")) o.t_Q = cfg.get_double("t_q");
  const LimitProcessDraws L = simulate_limit_process(*d.roc, grid, o);

  std::ostringstream csv;
  csv << "draw,alpha,value,empirical_term,first_stage_term\n";
  for (Eigen::Index b = 0; b < L.draws.rows(); ++b)
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto gg = static_cast<Eigen::Index>(g);
      csv << b << ',' << format_double(grid[g]) << ',' << format_double(L.draws(b, gg)) << ','
          << format_double(L.empirical_term(b, gg)) << ',' << format_double(L.first_stage_term(b, gg)) << '\n';
    }
  out.write("limit_draws.csv", csv.str());

  Metrics m;
  nlohmann::ordered_json j;
  j["alpha"] = grid;
  j["k"] = L.k;
  j["beta"] = L.beta;
  j["f_alpha"] = L.f_alpha;
  j["f_beta"] = L.f_beta;
  j["if_variance"] = L.if_variance;
  j["t_Q"] = L.t_Q;
  j["t_Delta"] = L.t_Delta;
  std::vector<double> draw_var, ks;
  const long long reps = cfg.get_int_or("reps", 0);
  std::vector<std::vector<double>> mc(grid.size());
  if (reps > 0) {
    const auto n = static_cast<std::size_t>(cfg.get_int("n"));
    FitOptions fo = fit_options(cfg, "mc_first_stage", o.first_stage == FirstStage::parametric ? "logistic-index" : "oracle");
    fo.oracle = d.roc->p;
    for (long long r = 0; r < reps; ++r) {
      const Sample s = d.sample(n, seed, static_cast<std::uint64_t>(r));
      const RocCurve c = roc_estimate(s.y, fit_regression(s, 0, fo).predict(s.x), grid);
      for (std::size_t g = 0; g < grid.size(); ++g)
        mc[g].push_back(std::sqrt(static_cast<double>(n)) * (c.beta_hat[g] - L.beta[g]));
    }
  }
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> col(static_cast<std::size_t>(L.draws.rows()));
    for (Eigen::Index b = 0; b < L.draws.rows(); ++b) col[static_cast<std::size_t>(b)] = L.draws(b, static_cast<Eigen::Index>(g));
    draw_var.push_back(stats::variance(col));
    m.emplace_back("var_ratio_" + key_of(grid[g]), draw_var.back() / L.if_variance[g]);
    if (reps > 0) {
      ks.push_back(stats::ks_distance(mc[g], col));
      m.emplace_back("ks_" + key_of(grid[g]), ks.back());
    }
  }
  j["draw_variance"] = draw_var;
  if (reps > 0) j["ks"] = ks;
  out.write("limit.json", j.dump(2));
  return m;
}

Metrics task_orthogonality(const Config& cfg, std::uint64_t seed, OutputDir& out) {
  const Dgp& d = find_dgp(cfg.get_or("dgp", "twoarm-margin"));
  FirstStageSpec fs;
  fs.mode = first_stage_mode_from_string(cfg.get_or("first_stage", "injected"));
  fs.g_scale = cfg.get_double_or("g_scale", fs.g_scale);
  fs.p_scale = cfg.get_double_or("p_scale", fs.p_scale);
  fs.rate = cfg.get_double_or("rate", fs.rate);
  fs.folds = static_cast<int>(cfg.get_int_or("folds", 5));
  fs.g_options = fit_options(cfg, "g_learner", "local-linear");
  fs.p_options = fit_options(cfg, "p_learner", "local-linear");
  const auto rep = orthogonality_diagnostic(d, lambda_of(cfg), size_list(cfg, "ladder", "500,1000,2000,4000,8000,16000"),
                                            static_cast<int>(cfg.get_int_or("reps", 40)), fs, seed);
  out.write("orthogonality.json", rep.to_json());
  Metrics m;
  for (const auto& [k, v] : rep.slopes) m.emplace_back("slope_" + k, v);
  m.emplace_back("margin_flag", rep.margin_flag ? 1.0 : 0.0);
  return m;
}

Metrics task_margin(const Config& cfg, std::uint64_t seed, OutputDir& out) {
  const Dgp& d = find_dgp(cfg.get("dgp"));
  const auto t = parse_grid(cfg.get_or("t_grid", "0.01:0.2:0.01"));
  const auto rep = margin_diagnostic(d, lambda_of(cfg), t, static_cast<std::size_t>(cfg.get_int_or("n", 1000000)), seed);
  std::ostringstream csv;
  csv << "t,ratio\n";
  for (std::size_t i = 0; i < t.size(); ++i) csv << format_double(t[i]) << ',' << format_double(rep.ratio[i]) << '\n';
  out.write("margin.csv", csv.str());
  return {{"max_over_min", rep.max_over_min}};
}

Metrics task_geometry(const Config& cfg, std::uint64_t seed, OutputDir& out, RunRecord& rec) {
  const auto rows = geometry_suite(cfg.get_or("suite", "default"), seed);
  std::ostringstream csv;
  csv << "check,value,reference,error,tolerance,pass\n";
  Metrics m;
  for (const auto& r : rows) {
    csv << r.name << ',' << format_double(r.value) << ',' << format_double(r.reference) << ',' << format_double(r.error)
        << ',' << format_double(r.tolerance) << ',' << (r.pass ? 1 : 0) << '\n';
    m.emplace_back(r.name, r.value);
    rec.checks.emplace_back(r.name, r.pass);
  }
  out.write("geometry.csv", csv.str());
  return m;
}

}  // namespace

RunRecord run(const Config& cfg) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.task = cfg.get("task");
  rec.config_hash = cfg.hash();
  rec.git_describe = git_describe();
  const std::uint64_t seed = cfg.get_seed();
  OutputDir out(cfg.get("out"));
  try {
    Metrics m;
    if (rec.task == "roc") m = task_roc(cfg, seed, out);
    else if (rec.task == "allocate") m = task_allocate(cfg, seed, out);
    else if (rec.task == "dml") m = task_dml(cfg, seed, out);
    else if (rec.task == "coverage") m = task_coverage(cfg, seed, out);
    else if (rec.task == "regret") m = task_regret(cfg, seed, out);
    else if (rec.task == "limit") m = task_limit(cfg, seed, out);
    else if (rec.task == "orthogonality") m = task_orthogonality(cfg, seed, out);
    else if (rec.task == "margin") m = task_margin(cfg, seed, out);
    else if (rec.task == "geometry") m = task_geometry(cfg, seed, out, rec);
    else throw std::invalid_argument("unknown task '" + rec.task + "'");
    rec.metrics = std::move(m);

    for (const auto& [key, value] : cfg.entries()) {
      if (key.rfind("assert.", 0) != 0) continue;
      const std::string metric = key.substr(7);
      const auto [lo, hi] = parse_range(value);
      auto it = std::find_if(rec.metrics.begin(), rec.metrics.end(), [&](const auto& p) { return p.first == metric; });
      if (it == rec.metrics.end()) throw std::invalid_argument("assertion names unknown metric '" + metric + "'");
      rec.checks.emplace_back(key, it->second >= lo && it->second <= hi);
    }
    for (const auto& a : out.artifacts()) rec.artifacts.push_back(a);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.write("manifest.json", rec.to_json());
    out.commit();
  } catch (const std::exception& e) {
    throw Error("task " + rec.task + " failed: " + e.what());
  }
  return rec;
}

}  // namespace optalloc
