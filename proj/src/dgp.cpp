#include "optalloc/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "optalloc/stats.hpp"

namespace optalloc {

double integrate_1d(const std::function<double(double)>& f, double a, double b, double tol) {
  if (!(b > a)) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, tol);
}

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double logit(double p) { return std::log(p / (1.0 - p)); }

Dgp uniform_roc() {
  Dgp g;
  g.name = "uniform-roc";
  g.d = 1;
  g.num_arms = 1;
  g.support = Box::cube(1, 0.0, 1.0);
  g.density = [](Point) { return 1.0; };
  g.proposal = Proposal::uniform();
  g.draw_x = [](Rng& rng, std::span<double> x) { x[0] = rng.uniform(); };
  g.g = {[](Point x) { return x[0]; }};
  g.propensity = {[](Point) { return 1.0; }};

  RocModel m;
  m.name = g.name;
  m.domain = g.support;
  m.density = g.density;
  m.proposal = g.proposal;
  m.p = [](Point x) { return x[0]; };
  m.p_grad = [](Point, std::span<double> out) { out[0] = 1.0; };
  m.p_bar = 0.5;
  m.alpha_of_k = [](double k) { return (1.0 - k) * (1.0 - k); };
  m.beta_of_k = [](double k) { return 1.0 - k * k; };
  m.draw = [](Rng& rng, std::span<double> x, double& y) {
    x[0] = rng.uniform();
    y = rng.bernoulli(x[0]) ? 1.0 : 0.0;
  };
  g.roc = std::move(m);
  return g;
}

Dgp logistic_2d() {
  static const double theta[3] = {-0.5, 1.0, -0.75};
  const double tau = std::hypot(theta[1], theta[2]);
  auto index = [](Point x) { return theta[0] + theta[1] * x[0] + theta[2] * x[1]; };

  Dgp g;
  g.name = "logistic-2d";
  g.d = 2;
  g.num_arms = 1;
  g.support = Box::cube(2, -5.0, 5.0);
  g.density = std_normal_density_2d;
  g.proposal = Proposal::gaussian({0.0, 0.0}, {1.0, 1.0});
  g.draw_x = [](Rng& rng, std::span<double> x) {
    x[0] = rng.normal();
    x[1] = rng.normal();
  };
  g.g = {[index](Point x) { return stats::logistic(index(x)); }};
  g.propensity = {[](Point) { return 1.0; }};

  // The index is N(theta0, tau^2), so alpha(k) and beta(k) reduce to 1D integrals.
  auto index_density = [tau](double s) {
    const double z = (s - theta[0]) / tau;
    return kInvSqrt2Pi * std::exp(-0.5 * z * z) / tau;
  };
  const double lo = theta[0] - 12 * tau, hi = theta[0] + 12 * tau;
  const double p_bar = integrate_1d([&](double s) { return stats::logistic(s) * index_density(s); }, lo, hi);

  RocModel m;
  m.name = g.name;
  m.domain = g.support;
  m.density = g.density;
  m.proposal = g.proposal;
  m.p = g.g[0];
  m.p_grad = [index](Point x, std::span<double> out) {
    const double p = stats::logistic(index(x));
    out[0] = p * (1.0 - p) * theta[1];
    out[1] = p * (1.0 - p) * theta[2];
  };
  m.p_bar = p_bar;
  m.alpha_of_k = [=](double k) {
    if (k <= 0.0) return 1.0;
    if (k >= 1.0) return 0.0;
    return integrate_1d([&](double s) { return (1.0 - stats::logistic(s)) * index_density(s); },
                        std::max(lo, logit(k)), hi) /
           (1.0 - p_bar);
  };
  m.beta_of_k = [=](double k) {
    if (k <= 0.0) return 1.0;
    if (k >= 1.0) return 0.0;
    return integrate_1d([&](double s) { return stats::logistic(s) * index_density(s); }, std::max(lo, logit(k)),
                        hi) /
           p_bar;
  };
  m.draw = [index](Rng& rng, std::span<double> x, double& y) {
    x[0] = rng.normal();
    x[1] = rng.normal();
    y = rng.bernoulli(stats::logistic(index(x))) ? 1.0 : 0.0;
  };
  m.theta = std::vector<double>(theta, theta + 3);
  g.roc = std::move(m);
  return g;
}

void two_arm_common(Dgp& g) {
  g.d = 1;
  g.num_arms = 2;
  g.support = Box::cube(1, 0.0, 1.0);
  g.density = [](Point) { return 1.0; };
  g.proposal = Proposal::uniform();
  g.draw_x = [](Rng& rng, std::span<double> x) { x[0] = rng.uniform(); };
  g.propensity = {[](Point x) { return 0.65 - 0.3 * x[0]; }, [](Point x) { return 0.35 + 0.3 * x[0]; }};
  g.c = {[](Point) { return 0.2; }, [](Point x) { return 0.6 + 0.4 * x[0]; }};
  g.noise_sd = 0.3;
  g.cost_noise_sd = 0.1;
}

Dgp twoarm_margin() {
  Dgp g;
  g.name = "twoarm-margin";
  two_arm_common(g);
  g.g = {[](Point) { return 0.5; }, [](Point x) { return stats::logistic(4.0 * (x[0] - 0.5)); }};
  // Needs lambda_0 >= 0 and lambda_1 > 0.
  g.gamma_closed_form = [](const Weights& w) {
    if (w.size() != 2 || !(w.lambda[0] >= 0.0) || !(w.lambda[1] > 0.0))
      throw std::invalid_argument("twoarm-margin closed form needs lambda_0 >= 0 and lambda_1 > 0");
    const double l0 = w.lambda[0], l1 = w.lambda[1];
    // Antiderivative of logistic(4(x - 1/2)).
    auto F = [](double x) { return std::log1p(std::exp(4.0 * (x - 0.5))) / 4.0; };
    const double r = 0.5 * l0 / l1;
    double cross;
    if (r <= stats::logistic(-2.0)) cross = 0.0;
    else if (r >= stats::logistic(2.0)) cross = 1.0;
    else cross = 0.5 + logit(r) / 4.0;
    return 0.5 * l0 * cross + l1 * (F(1.0) - F(cross));
  };
  return g;
}

Dgp margin_violator() {
  Dgp g;
  g.name = "margin-violator";
  two_arm_common(g);
  g.g = {[](Point) { return 0.5; },
         [](Point x) {
           const double u = x[0] - 0.5;
           const double m = std::max(0.0, std::abs(u) - 0.15);
           return 0.5 + (u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0)) * 8.0 * m * m;
         }};
  // Declared for lambda proportional to (1, 1) only.
  g.gamma_closed_form = [](const Weights& w) {
    if (w.size() != 2 || w.lambda[0] != w.lambda[1] || !(w.lambda[0] >= 0.0))
      throw std::invalid_argument("margin-violator closed form needs lambda = (l, l), l >= 0");
    return w.lambda[0] * (0.5 + 8.0 * std::pow(0.35, 3) / 3.0);
  };
  return g;
}

std::map<std::string, Dgp> build_registry() {
  std::map<std::string, Dgp> reg;
  for (Dgp g : {uniform_roc(), logistic_2d(), twoarm_margin(), margin_violator()}) {
    for (const auto& row : dgp_self_check(g)) {
      if (!(row.abs_error <= 1e-3)) {
        std::ostringstream msg;
        msg << "design " << g.name << " failed its self-check on " << row.quantity << ": declared " << row.declared
            << ", quadrature " << row.oracle;
        throw std::logic_error(msg.str());
      }
    }
    reg.emplace(g.name, std::move(g));
  }
  return reg;
}

const std::map<std::string, Dgp>& registry() {
  static const std::map<std::string, Dgp> reg = build_registry();
  return reg;
}

}  // namespace

std::vector<std::string> dgp_names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : registry()) out.push_back(name);
  return out;
}

const Dgp& find_dgp(const std::string& name) {
  const auto& reg = registry();
  auto it = reg.find(name);
  if (it == reg.end()) {
    std::string known;
    for (const auto& [n, _] : reg) known += (known.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown design '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

ArmFunctions Dgp::arms() const { return ArmFunctions{g, c}; }

Sample Dgp::sample(std::size_t n, std::uint64_t seed, std::uint64_t replicate, bool with_cost) const {
  if (n == 0) throw std::invalid_argument("sample size must be positive");
  if (with_cost && c.empty()) throw std::invalid_argument("design " + name + " has no cost functions");
  Sample s;
  s.num_arms = num_arms;
  s.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  s.arm.resize(n);
  s.y.resize(n);
  if (with_cost) s.z.emplace(n);
  Rng rng(seed, "dgp:" + name, replicate);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    draw_x(rng, x);
    std::copy(x.begin(), x.end(), s.x.row(static_cast<Eigen::Index>(i)).data());
    if (roc) {
      s.arm[i] = 0;
      s.y[i] = rng.bernoulli(roc->p(x)) ? 1.0 : 0.0;
      continue;
    }
    int a = num_arms - 1;
    double u = rng.uniform(), acc = 0.0;
    for (int j = 0; j < num_arms; ++j) {
      acc += propensity[static_cast<std::size_t>(j)](x);
      if (u < acc) {
        a = j;
        break;
      }
    }
    s.arm[i] = a;
    s.y[i] = g[static_cast<std::size_t>(a)](x) + noise_sd * rng.normal();
    if (with_cost) (*s.z)[i] = c[static_cast<std::size_t>(a)](x) + cost_noise_sd * rng.normal();
  }
  return s;
}

double population_policy_value(const Dgp& dgp, const Weights& lambda, const std::function<int(double)>& arm_of,
                               std::size_t cells) {
  if (dgp.d != 1) throw std::invalid_argument("population values need a one-dimensional design");
  if (lambda.size() != static_cast<std::size_t>(dgp.num_arms)) throw std::invalid_argument("lambda arity mismatch");
  if (cells < 1) throw std::invalid_argument("need at least one cell");
  const double a = dgp.support.lower[0], b = dgp.support.upper[0];
  auto piece = [&](int arm, double lo, double hi) {
    const auto j = static_cast<std::size_t>(arm);
    if (lambda.lambda[j] == 0.0) return 0.0;
    return lambda.lambda[j] * integrate_1d(
                                  [&](double x) {
                                    const double p[1] = {x};
                                    return dgp.g[j](p) * dgp.density(p);
                                  },
                                  lo, hi);
  };
  double total = 0.0;
  double start = a;
  int current = arm_of(a);
  for (std::size_t c = 1; c <= cells; ++c) {
    const double x = c == cells ? b : a + (b - a) * static_cast<double>(c) / static_cast<double>(cells);
    const int next = arm_of(x);
    if (next == current) continue;
    double lo = a + (b - a) * static_cast<double>(c - 1) / static_cast<double>(cells), hi = x;
    for (int it = 0; it < 60 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      (arm_of(mid) == current ? lo : hi) = mid;
    }
    total += piece(current, start, hi);
    start = hi;
    current = next;
  }
  total += piece(current, start, b);
  return total;
}

double population_gamma(const Dgp& dgp, const Weights& lambda) {
  const std::size_t J1 = static_cast<std::size_t>(dgp.num_arms);
  return population_policy_value(dgp, lambda, [&](double x) {
    const double p[1] = {x};
    std::vector<double> v(J1);
    for (std::size_t j = 0; j < J1; ++j) v[j] = dgp.g[j](p);
    return static_cast<int>(argmax_arm(lambda.lambda, v));
  });
}

std::vector<SelfCheckRow> dgp_self_check(const Dgp& dgp) {
  std::vector<SelfCheckRow> rows;
  auto add = [&](std::string q, double declared, double oracle) {
    rows.push_back({std::move(q), declared, oracle, std::abs(declared - oracle)});
  };
  if (dgp.roc) {
    const RocModel& m = *dgp.roc;
    if (dgp.d == 1) {
      const double a = dgp.support.lower[0], b = dgp.support.upper[0];
      auto w = [&](double x, bool pos) {
        const double p[1] = {x};
        const double v = m.p(p);
        return (pos ? v : 1.0 - v) * dgp.density(p);
      };
      const double pb = integrate_1d([&](double x) { return w(x, true); }, a, b);
      add("p_bar", m.p_bar, pb);
      for (double k : {0.3, 0.5, 0.8}) {
        add("alpha(" + std::to_string(k) + ")", m.alpha_of_k(k),
            integrate_1d([&](double x) { return w(x, false); }, std::max(a, k), b) / (1.0 - pb));
        add("beta(" + std::to_string(k) + ")", m.beta_of_k(k),
            integrate_1d([&](double x) { return w(x, true); }, std::max(a, k), b) / pb);
      }
    } else if (dgp.d == 2 && m.theta) {
      // Nested quadrature over the box; the treated set is a half-plane.
      const auto& th = *m.theta;
      const double a = dgp.support.lower[0], b = dgp.support.upper[0];
      const double a2 = dgp.support.lower[1], b2 = dgp.support.upper[1];
      auto outer = [&](double k, bool pos, bool restrict) {
        return integrate_1d(
            [&](double x1) {
              double lo2 = a2, hi2 = b2;
              if (restrict) {
                const double cut = (logit(k) - th[0] - th[1] * x1) / th[2];
                if (th[2] < 0) hi2 = std::clamp(cut, a2, b2);
                else lo2 = std::clamp(cut, a2, b2);
              }
              return integrate_1d(
                  [&](double x2) {
                    const double p[2] = {x1, x2};
                    const double v = m.p(p);
                    return (pos ? v : 1.0 - v) * dgp.density(p);
                  },
                  lo2, hi2, 1e-10);
            },
            a, b, 1e-10);
      };
      const double pb = outer(0.5, true, false);
      add("p_bar", m.p_bar, pb);
      for (double k : {0.3, 0.5}) {
        add("alpha(" + std::to_string(k) + ")", m.alpha_of_k(k), outer(k, false, true) / (1.0 - pb));
        add("beta(" + std::to_string(k) + ")", m.beta_of_k(k), outer(k, true, true) / pb);
      }
    }
  }
  if (dgp.gamma_closed_form && dgp.quadrature_1d()) {
    for (const Weights& w : {Weights{1.0, 1.0}, Weights{2.0, 2.0}, Weights{1.0, 1.3}}) {
      double declared;
      try {
        declared = dgp.gamma_closed_form(w);
      } catch (const std::invalid_argument&) {
        continue;
      }
      std::ostringstream q;
      q << "gamma(" << w.lambda[0] << "," << w.lambda[1] << ")";
      add(q.str(), declared, population_gamma(dgp, w));
    }
  }
  return rows;
}

}  // namespace optalloc
