#include "optalloc/levelset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/random/sobol.hpp>

#include "optalloc/rng.hpp"
#include "optalloc/stats.hpp"

namespace optalloc {

Box Box::cube(std::size_t dim, double lo, double hi) {
  Box b{std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
  b.validate();
  return b;
}

double Box::volume() const {
  double v = 1.0;
  for (std::size_t j = 0; j < dim(); ++j) v *= upper[j] - lower[j];
  return v;
}

double Box::diameter() const {
  double s = 0.0;
  for (std::size_t j = 0; j < dim(); ++j) s += (upper[j] - lower[j]) * (upper[j] - lower[j]);
  return std::sqrt(s);
}

bool Box::contains(Point x) const {
  if (x.size() != dim()) return false;
  for (std::size_t j = 0; j < dim(); ++j)
    if (x[j] < lower[j] || x[j] > upper[j]) return false;
  return true;
}

void Box::validate() const {
  if (lower.empty()) throw std::invalid_argument("box has dimension zero");
  if (lower.size() != upper.size()) throw std::invalid_argument("box bounds differ in length");
  for (std::size_t j = 0; j < dim(); ++j) {
    if (!std::isfinite(lower[j]) || !std::isfinite(upper[j]))
      throw std::invalid_argument("box bounds must be finite");
    if (!(lower[j] < upper[j])) throw std::invalid_argument("box needs lower < upper on every axis");
  }
}

double Field::gradient_norm(Point x) const {
  std::vector<double> grad(dim());
  gradient(x, grad);
  double s = 0.0;
  for (double v : grad) s += v * v;
  return std::sqrt(s);
}

void check_field(const Field& field, std::uint64_t seed, int points) {
  field.domain.validate();
  if (!field.value || !field.gradient) throw std::invalid_argument("field needs value and gradient");
  const std::size_t d = field.dim();
  Rng rng(seed, "levelset:gradient-check");
  std::vector<double> x(d), grad(d), xp(d), xm(d);
  for (int p = 0; p < points; ++p) {
    for (std::size_t j = 0; j < d; ++j) {
      // Stay off the boundary so central differences remain inside the box.
      const double w = field.domain.upper[j] - field.domain.lower[j];
      x[j] = field.domain.lower[j] + w * (0.05 + 0.9 * rng.uniform());
    }
    field.gradient(x, grad);
    for (std::size_t j = 0; j < d; ++j) {
      const double step = 1e-6 * std::max(1.0, std::abs(x[j]));
      xp = x;
      xm = x;
      xp[j] += step;
      xm[j] -= step;
      const double fd = (field.value(xp) - field.value(xm)) / (2.0 * step);
      if (!std::isfinite(fd) || !std::isfinite(grad[j])) continue;
      if (std::abs(fd - grad[j]) > 1e-4 * std::max(1.0, std::abs(grad[j]))) {
        std::ostringstream msg;
        msg << "field '" << field.name << "': gradient component " << j << " disagrees with finite differences ("
            << grad[j] << " vs " << fd << ")";
        throw std::invalid_argument(msg.str());
      }
    }
  }
}

Proposal Proposal::gaussian(std::vector<double> mean, std::vector<double> sd) {
  if (mean.size() != sd.size()) throw std::invalid_argument("proposal mean and sd differ in length");
  for (double s : sd)
    if (!(s > 0.0)) throw std::invalid_argument("proposal sd must be positive");
  Proposal p;
  p.kind = Kind::gaussian;
  p.mean = std::move(mean);
  p.sd = std::move(sd);
  return p;
}

void SamplingPlan::validate(std::size_t dim) const {
  if (budget == 0) throw std::invalid_argument("sampling budget is zero");
  if (batches < 2) throw std::invalid_argument("sampling plan needs at least two batches");
  if (budget < static_cast<std::uint64_t>(batches)) throw std::invalid_argument("budget smaller than batch count");
  if (proposal.kind == Proposal::Kind::gaussian && proposal.mean.size() != dim)
    throw std::invalid_argument("gaussian proposal dimension differs from the domain");
}

namespace {

constexpr const char* kPointStream = "levelset:points";

/// Produces the weighted points of one batch: x drawn from the proposal q on
/// the box, together with 1/q(x).
class PointSource {
 public:
  PointSource(const Box& box, const SamplingPlan& plan, std::string_view stream)
      : box_(box), plan_(plan), stream_(stream), d_(box.dim()) {
    box_.validate();
    plan_.validate(d_);
    if (plan_.proposal.kind == Proposal::Kind::gaussian) {
      lo_cdf_.resize(d_);
      width_.resize(d_);
      log_norm_ = 0.0;
      for (std::size_t j = 0; j < d_; ++j) {
        const double m = plan_.proposal.mean[j], s = plan_.proposal.sd[j];
        lo_cdf_[j] = stats::normal_cdf((box_.lower[j] - m) / s);
        width_[j] = stats::normal_cdf((box_.upper[j] - m) / s) - lo_cdf_[j];
        if (!(width_[j] > 0.0)) throw std::invalid_argument("gaussian proposal puts no mass on the box");
        log_norm_ += std::log(s * width_[j] * std::sqrt(2.0 * std::numbers::pi));
      }
    } else {
      volume_ = box_.volume();
    }
  }

  std::uint64_t batch_size() const { return plan_.batch_size(); }
  int batches() const { return plan_.batches; }

  template <class Fn>
  void run_batch(int b, Fn&& fn) const {
    const std::uint64_t m = plan_.batch_size();
    std::vector<double> u(d_), x(d_);
    Rng rng(plan_.seed, stream_, static_cast<std::uint64_t>(b));
    if (plan_.scheme == SamplingScheme::sobol) {
      std::vector<std::uint64_t> shift(d_);
      for (auto& s : shift) s = rng.bits();
      boost::random::sobol gen(d_);
      for (std::uint64_t i = 0; i < m; ++i) {
        // boost starts after the origin; put it back so the first 2^m points form a net.
        for (std::size_t j = 0; j < d_; ++j) {
          const std::uint64_t v = i == 0 ? 0 : static_cast<std::uint64_t>(gen());
          u[j] = (static_cast<double>((v ^ shift[j]) >> 11) + 0.5) * 0x1.0p-53;
        }
        fn(Point(x), transform(u, x));
      }
    } else {
      for (std::uint64_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d_; ++j) u[j] = rng.uniform();
        fn(Point(x), transform(u, x));
      }
    }
  }

 private:
  // Maps u in (0,1)^d to x and returns 1/q(x).
  double transform(const std::vector<double>& u, std::vector<double>& x) const {
    if (plan_.proposal.kind == Proposal::Kind::uniform) {
      for (std::size_t j = 0; j < d_; ++j) x[j] = box_.lower[j] + (box_.upper[j] - box_.lower[j]) * u[j];
      return volume_;
    }
    double half_sq = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
      const double p = std::clamp(lo_cdf_[j] + u[j] * width_[j], 1e-300, 1.0 - 1e-16);
      const double z = stats::normal_quantile_approx(p);
      x[j] = std::clamp(plan_.proposal.mean[j] + plan_.proposal.sd[j] * z, box_.lower[j], box_.upper[j]);
      half_sq += 0.5 * z * z;
    }
    return std::exp(half_sq + log_norm_);
  }

  Box box_;
  SamplingPlan plan_;
  std::string stream_;
  std::size_t d_;
  std::vector<double> lo_cdf_, width_;
  double log_norm_ = 0.0;
  double volume_ = 1.0;
};

Estimate from_batches(const std::vector<double>& v) {
  return {stats::mean(v), stats::stddev(v) / std::sqrt(static_cast<double>(v.size()))};
}

double finite_or_throw(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + " is not finite");
  return v;
}

double density_or_throw(const ScalarFn& f, Point x) {
  const double v = f(x);
  if (!std::isfinite(v)) throw NonFiniteError("density weight is not finite");
  if (v < 0.0) throw std::invalid_argument("density weight is negative; pass signed integrands as two parts");
  return v;
}

double richardson(double b1, double b2, double b4) {
  const double r1 = (4.0 * b2 - b1) / 3.0;
  const double r2 = (4.0 * b4 - b2) / 3.0;
  return (16.0 * r2 - r1) / 15.0;
}

double band_eps(const Field& field, const BandOptions& band) {
  const double eps = band.eps.value_or(1e-2 * field.domain.diameter());
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("band eps must be positive");
  return eps;
}

// Per-batch band estimates shared by level_set_integral and the FD report.
struct BandAccumulator {
  double eps;
  double level;
  double tol;
  const Field* field;
  std::array<double, 3> sums{};
  double min_grad = INFINITY;
  std::uint64_t points = 0;
  std::vector<double> grad;

  void add(Point x, double hv, double gw) {
    const double dist = std::abs(hv - level);
    if (!(dist < eps)) return;
    field->gradient(x, grad);
    double s = 0.0;
    for (double v : grad) s += v * v;
    const double norm = std::sqrt(s);
    min_grad = std::min(min_grad, norm);
    if (!(norm >= tol)) {
      std::ostringstream msg;
      msg << "critical level " << level << " for field '" << field->name << "': |grad h| = " << norm
          << " below tolerance " << tol << " inside the band";
      throw CriticalLevelError(msg.str());
    }
    ++points;
    sums[0] += gw;
    if (dist < eps / 2) sums[1] += gw;
    if (dist < eps / 4) sums[2] += gw;
  }

  std::array<double, 3> bands(std::uint64_t m) const {
    const double n = static_cast<double>(m);
    return {sums[0] / (2 * eps * n), sums[1] / (eps * n), sums[2] / (0.5 * eps * n)};
  }

  void reset() { sums = {}; }
};

void validate_ladder(std::span<const double> t) {
  if (t.empty()) throw std::invalid_argument("empty t ladder");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0)) throw std::invalid_argument("t ladder entries must be positive");
    if (i > 0 && !(t[i] < t[i - 1])) throw std::invalid_argument("t ladder must be decreasing");
  }
}

void check_level(const VectorField& field, std::span<const double> level) {
  field.domain.validate();
  if (!field.value) throw std::invalid_argument("vector field has no value function");
  if (level.size() != field.k || field.k == 0) throw std::invalid_argument("level arity differs from the field");
}

void finish_ladder(FdConsistencyReport& r) {
  r.successive_diffs.clear();
  for (std::size_t i = 1; i < r.quotients.size(); ++i)
    r.successive_diffs.push_back(std::abs(r.quotients[i] - r.quotients[i - 1]));
  r.cauchy = r.successive_diffs.size() >= 1;
  for (std::size_t i = 1; i < r.successive_diffs.size(); ++i)
    if (!(r.successive_diffs[i] < r.successive_diffs[i - 1])) r.cauchy = false;
  r.gaps_decreasing = !r.gaps.empty();
  for (std::size_t i = 1; i < r.gaps.size(); ++i)
    if (!(r.gaps[i] < r.gaps[i - 1])) r.gaps_decreasing = false;
}

}  // namespace

Estimate sorting_operator(const Field& field, const ScalarFn& f, double level, const SamplingPlan& plan) {
  if (!f) throw std::invalid_argument("density weight not evaluable");
  PointSource src(field.domain, plan, kPointStream);
  std::vector<double> means(static_cast<std::size_t>(src.batches()));
  for (int b = 0; b < src.batches(); ++b) {
    double s = 0.0;
    src.run_batch(b, [&](Point x, double inv_q) {
      if (finite_or_throw(field.value(x), "h(x)") > level) s += density_or_throw(f, x) * inv_q;
    });
    means[static_cast<std::size_t>(b)] = s / static_cast<double>(src.batch_size());
  }
  return from_batches(means);
}

Estimate sorting_operator(const VectorField& field, const ScalarFn& f, std::span<const double> level,
                          const SamplingPlan& plan) {
  check_level(field, level);
  if (!f) throw std::invalid_argument("density weight not evaluable");
  PointSource src(field.domain, plan, kPointStream);
  std::vector<double> means(static_cast<std::size_t>(src.batches()));
  std::vector<double> hv(field.k);
  for (int b = 0; b < src.batches(); ++b) {
    double s = 0.0;
    src.run_batch(b, [&](Point x, double inv_q) {
      field.value(x, hv);
      bool above = true;
      for (std::size_t i = 0; i < field.k; ++i) above = above && finite_or_throw(hv[i], "h(x)") > level[i];
      if (above) s += density_or_throw(f, x) * inv_q;
    });
    means[static_cast<std::size_t>(b)] = s / static_cast<double>(src.batch_size());
  }
  return from_batches(means);
}

LevelSetEstimate level_set_integral(const Field& field, const ScalarFn& g, double level,
                                    const SamplingPlan& plan, const BandOptions& band) {
  if (!g) throw std::invalid_argument("integrand not evaluable");
  check_field(field, plan.seed);
  const double eps = band_eps(field, band);
  PointSource src(field.domain, plan, kPointStream);
  BandAccumulator acc{eps, level, band.regular_tol, &field, {}, INFINITY, 0, std::vector<double>(field.dim())};
  std::vector<double> extrapolated(static_cast<std::size_t>(src.batches()));
  std::array<double, 3> band_totals{};
  for (int b = 0; b < src.batches(); ++b) {
    acc.reset();
    src.run_batch(b, [&](Point x, double inv_q) {
      const double hv = finite_or_throw(field.value(x), "h(x)");
      if (std::abs(hv - level) < eps) acc.add(x, hv, finite_or_throw(g(x), "integrand") * inv_q);
    });
    const auto bands = acc.bands(src.batch_size());
    for (int m = 0; m < 3; ++m) band_totals[static_cast<std::size_t>(m)] += bands[static_cast<std::size_t>(m)];
    extrapolated[static_cast<std::size_t>(b)] = richardson(bands[0], bands[1], bands[2]);
  }
  const Estimate e = from_batches(extrapolated);
  LevelSetEstimate out;
  out.value = e.value;
  out.se = e.se;
  out.eps = {eps, eps / 2, eps / 4};
  for (std::size_t m = 0; m < 3; ++m) out.band_values[m] = band_totals[m] / src.batches();
  out.min_gradient_norm = acc.points > 0 ? acc.min_grad : 0.0;
  out.band_points = acc.points;
  return out;
}

LevelSetEstimate hadamard_derivative_k1(const Field& field, const ScalarFn& f, const ScalarFn& H,
                                        double level, const SamplingPlan& plan, const BandOptions& band) {
  if (!f || !H) throw std::invalid_argument("density and direction must be evaluable");
  return level_set_integral(field, [&](Point x) { return H(x) * f(x); }, level, plan, band);
}

FdConsistencyReport hadamard_fd_consistency(const Field& field, const ScalarFn& f, const ScalarFn& H,
                                            double level, std::span<const double> t_ladder,
                                            const SamplingPlan& plan, const BandOptions& band) {
  validate_ladder(t_ladder);
  if (!f || !H) throw std::invalid_argument("density and direction must be evaluable");
  check_field(field, plan.seed);
  const double eps = band_eps(field, band);
  PointSource src(field.domain, plan, kPointStream);
  const std::size_t nt = t_ladder.size();
  const auto nb = static_cast<std::size_t>(src.batches());
  const double m = static_cast<double>(src.batch_size());

  std::vector<std::vector<double>> q(nt, std::vector<double>(nb));
  std::vector<double> formula(nb);
  BandAccumulator acc{eps, level, band.regular_tol, &field, {}, INFINITY, 0, std::vector<double>(field.dim())};
  std::vector<double> sums(nt);
  for (std::size_t b = 0; b < nb; ++b) {
    acc.reset();
    std::fill(sums.begin(), sums.end(), 0.0);
    src.run_batch(static_cast<int>(b), [&](Point x, double inv_q) {
      const double hv = finite_or_throw(field.value(x), "h(x)");
      const bool in_band = std::abs(hv - level) < eps;
      const bool base = hv > level;
      double hd = 0.0;
      bool need = in_band;
      // Only points whose indicator can flip need the direction and density.
      double dir = 0.0;
      bool have_dir = false;
      for (std::size_t i = 0; i < nt && !need; ++i) {
        if (!have_dir) {
          dir = finite_or_throw(H(x), "H(x)");
          have_dir = true;
        }
        need = (hv + t_ladder[i] * dir > level) != base;
      }
      if (!need) return;
      if (!have_dir) dir = finite_or_throw(H(x), "H(x)");
      hd = density_or_throw(f, x) * inv_q;
      for (std::size_t i = 0; i < nt; ++i) {
        const bool moved = hv + t_ladder[i] * dir > level;
        sums[i] += (static_cast<double>(moved) - static_cast<double>(base)) * hd;
      }
      if (in_band) acc.add(x, hv, dir * hd);
    });
    for (std::size_t i = 0; i < nt; ++i) q[i][b] = sums[i] / (t_ladder[i] * m);
    const auto bands = acc.bands(src.batch_size());
    formula[b] = richardson(bands[0], bands[1], bands[2]);
  }

  FdConsistencyReport r;
  r.t.assign(t_ladder.begin(), t_ladder.end());
  const Estimate fe = from_batches(formula);
  r.formula = fe.value;
  r.formula_se = fe.se;
  for (std::size_t i = 0; i < nt; ++i) {
    const Estimate qe = from_batches(q[i]);
    r.quotients.push_back(qe.value);
    r.quotient_se.push_back(qe.se);
    std::vector<double> diff(nb);
    for (std::size_t b = 0; b < nb; ++b) diff[b] = q[i][b] - formula[b];
    const Estimate de = from_batches(diff);
    r.gaps.push_back(std::abs(de.value));
    r.gap_se.push_back(de.se);
  }
  finish_ladder(r);
  return r;
}

FdConsistencyReport hadamard_fd_consistency(const VectorField& field, const ScalarFn& f,
                                            const VectorFn& H, std::span<const double> level,
                                            std::span<const double> t_ladder, const SamplingPlan& plan) {
  validate_ladder(t_ladder);
  check_level(field, level);
  if (!f || !H) throw std::invalid_argument("density and direction must be evaluable");
  PointSource src(field.domain, plan, kPointStream);
  const std::size_t nt = t_ladder.size();
  const auto nb = static_cast<std::size_t>(src.batches());
  const double m = static_cast<double>(src.batch_size());
  std::vector<std::vector<double>> q(nt, std::vector<double>(nb));
  std::vector<double> hv(field.k), dir(field.k), sums(nt);
  std::vector<char> moved(nt);

  for (std::size_t b = 0; b < nb; ++b) {
    std::fill(sums.begin(), sums.end(), 0.0);
    src.run_batch(static_cast<int>(b), [&](Point x, double inv_q) {
      field.value(x, hv);
      H(x, dir);
      bool base = true;
      for (std::size_t c = 0; c < field.k; ++c) base = base && finite_or_throw(hv[c], "h(x)") > level[c];
      bool any = false;
      for (std::size_t i = 0; i < nt; ++i) {
        bool above = true;
        for (std::size_t c = 0; c < field.k; ++c)
          above = above && hv[c] + t_ladder[i] * finite_or_throw(dir[c], "H(x)") > level[c];
        moved[i] = above;
        any = any || above != base;
      }
      if (!any) return;
      const double hd = density_or_throw(f, x) * inv_q;
      for (std::size_t i = 0; i < nt; ++i)
        sums[i] += (static_cast<double>(moved[i]) - static_cast<double>(base)) * hd;
    });
    for (std::size_t i = 0; i < nt; ++i) q[i][b] = sums[i] / (t_ladder[i] * m);
  }

  FdConsistencyReport r;
  r.t.assign(t_ladder.begin(), t_ladder.end());
  for (std::size_t i = 0; i < nt; ++i) {
    const Estimate qe = from_batches(q[i]);
    r.quotients.push_back(qe.value);
    r.quotient_se.push_back(qe.se);
  }
  finish_ladder(r);
  return r;
}

Estimate sorting_fd_quotient(const Field& field, const ScalarFn& f, const ScalarFn& H, double level,
                             double t, const SamplingPlan& plan) {
  if (t == 0.0 || !std::isfinite(t)) throw std::invalid_argument("fd step t must be finite and nonzero");
  if (!f || !H) throw std::invalid_argument("density and direction must be evaluable");
  PointSource src(field.domain, plan, kPointStream);
  std::vector<double> q(static_cast<std::size_t>(src.batches()));
  for (int b = 0; b < src.batches(); ++b) {
    double s = 0.0;
    src.run_batch(b, [&](Point x, double inv_q) {
      const double hv = finite_or_throw(field.value(x), "h(x)");
      const bool base = hv > level;
      const bool moved = hv + t * finite_or_throw(H(x), "H(x)") > level;
      if (moved != base) s += (moved ? 1.0 : -1.0) * density_or_throw(f, x) * inv_q;
    });
    q[static_cast<std::size_t>(b)] = s / (t * static_cast<double>(src.batch_size()));
  }
  return from_batches(q);
}

Estimate sorting_fd_quotient(const VectorField& field, const ScalarFn& f, const VectorFn& H,
                             std::span<const double> level, double t, const SamplingPlan& plan) {
  if (t == 0.0 || !std::isfinite(t)) throw std::invalid_argument("fd step t must be finite and nonzero");
  check_level(field, level);
  if (!f || !H) throw std::invalid_argument("density and direction must be evaluable");
  PointSource src(field.domain, plan, kPointStream);
  std::vector<double> q(static_cast<std::size_t>(src.batches()));
  std::vector<double> hv(field.k), dir(field.k);
  for (int b = 0; b < src.batches(); ++b) {
    double s = 0.0;
    src.run_batch(b, [&](Point x, double inv_q) {
      field.value(x, hv);
      H(x, dir);
      bool base = true, moved = true;
      for (std::size_t c = 0; c < field.k; ++c) {
        base = base && finite_or_throw(hv[c], "h(x)") > level[c];
        moved = moved && hv[c] + t * finite_or_throw(dir[c], "H(x)") > level[c];
      }
      if (moved != base) s += (moved ? 1.0 : -1.0) * density_or_throw(f, x) * inv_q;
    });
    q[static_cast<std::size_t>(b)] = s / (t * static_cast<double>(src.batch_size()));
  }
  return from_batches(q);
}

AreaReport linear_area_check(const RowMatrix& A, const SamplingPlan& plan) {
  const auto n = static_cast<std::size_t>(A.rows());
  const auto k = static_cast<std::size_t>(A.cols());
  if (k == 0 || n == 0) throw std::invalid_argument("linear_area_check: empty matrix");
  if (k > n) throw std::invalid_argument("linear_area_check: need k <= n");
  if (!A.allFinite()) throw NonFiniteError("linear_area_check: matrix has non-finite entries");

  AreaReport r;
  r.n = n;
  r.k = k;
  const Eigen::MatrixXd gram = A.transpose() * A;
  r.formula = std::sqrt(std::max(0.0, gram.determinant()));

  if (k == n) {
    r.estimate = std::abs(Eigen::MatrixXd(A).determinant());
    r.method = "determinant";
  } else {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(A)};
    const Eigen::MatrixXd R = qr.matrixQR().topRows(static_cast<Eigen::Index>(k))
                                  .triangularView<Eigen::Upper>();
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    double min_diag = INFINITY;
    for (std::size_t i = 0; i < k; ++i) min_diag = std::min(min_diag, std::abs(R(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
    if (min_diag <= 1e-12 * scale) {
      // The image has dimension below k, so its k-dimensional measure is zero.
      r.estimate = 0.0;
      r.method = "rank-deficient";
    } else {
      // Bounding box of R [0,1]^k from its 2^k vertices.
      Box box{std::vector<double>(k, INFINITY), std::vector<double>(k, -INFINITY)};
      for (std::uint64_t mask = 0; mask < (1ULL << k); ++mask) {
        Eigen::VectorXd u(static_cast<Eigen::Index>(k));
        for (std::size_t i = 0; i < k; ++i) u(static_cast<Eigen::Index>(i)) = (mask >> i) & 1ULL ? 1.0 : 0.0;
        const Eigen::VectorXd y = R * u;
        for (std::size_t i = 0; i < k; ++i) {
          box.lower[i] = std::min(box.lower[i], y(static_cast<Eigen::Index>(i)));
          box.upper[i] = std::max(box.upper[i], y(static_cast<Eigen::Index>(i)));
        }
      }
      SamplingPlan uniform_plan = plan;
      uniform_plan.proposal = Proposal::uniform();
      PointSource src(box, uniform_plan, "levelset:area");
      const auto solver = R.triangularView<Eigen::Upper>();
      std::vector<double> means(static_cast<std::size_t>(src.batches()));
      Eigen::VectorXd y(static_cast<Eigen::Index>(k));
      for (int b = 0; b < src.batches(); ++b) {
        double hits = 0.0;
        src.run_batch(b, [&](Point x, double inv_q) {
          for (std::size_t i = 0; i < k; ++i) y(static_cast<Eigen::Index>(i)) = x[i];
          const Eigen::VectorXd u = solver.solve(y);
          bool inside = true;
          for (Eigen::Index i = 0; i < u.size(); ++i) inside = inside && u(i) >= 0.0 && u(i) <= 1.0;
          if (inside) hits += inv_q;
        });
        means[static_cast<std::size_t>(b)] = hits / static_cast<double>(src.batch_size());
      }
      const Estimate e = from_batches(means);
      r.estimate = e.value;
      r.se = e.se;
      r.method = "projected hit-or-miss";
    }
  }
  r.rel_error = r.formula > 0.0 ? std::abs(r.estimate - r.formula) / r.formula : std::abs(r.estimate - r.formula);
  return r;
}

ContinuityScan level_set_continuity_scan(const Field& field, const ScalarFn& g,
                                         std::span<const double> levels, const SamplingPlan& plan,
                                         const BandOptions& band) {
  if (levels.empty()) throw std::invalid_argument("continuity scan needs at least one level");
  ContinuityScan scan;
  const ContinuityRow* prev = nullptr;
  for (double c : levels) {
    ContinuityRow row{c, 0.0, 0.0, false, {}};
    try {
      const auto est = level_set_integral(field, g, c, plan, band);
      row.value = est.value;
      row.se = est.se;
    } catch (const CriticalLevelError& e) {
      row.critical = true;
      row.note = e.what();
    }
    scan.rows.push_back(row);
  }
  for (const auto& row : scan.rows) {
    if (row.critical) {
      prev = nullptr;
      continue;
    }
    if (prev) {
      const double jump = std::abs(row.value - prev->value);
      scan.max_jump = std::max(scan.max_jump, jump);
      const double ref = std::max(std::abs(prev->value), std::abs(row.value));
      if (ref > 0.0) scan.max_relative_jump = std::max(scan.max_relative_jump, jump / ref);
    }
    prev = &row;
  }
  return scan;
}

double std_normal_density_2d(Point x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::exp(-0.5 * s) / std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(x.size()));
}

std::vector<std::string> field_names() {
  return {"gaussian-halfspace", "radial-norm", "linear", "logistic-index"};
}

NamedField named_field(std::string_view name) {
  NamedField nf;
  const ScalarFn one = [](Point) { return 1.0; };
  if (name == "gaussian-halfspace") {
    nf.field = {"gaussian-halfspace", Box::cube(2, -5.0, 5.0), [](Point x) { return x[0]; },
                [](Point, std::span<double> g) {
                  g[0] = 1.0;
                  g[1] = 0.0;
                }};
    nf.density = std_normal_density_2d;
    nf.direction = one;
    nf.proposal = Proposal::gaussian({0.0, 0.0}, {1.0, 1.0});
    nf.level = 0.0;
    nf.exact_derivative = stats::normal_pdf(0.0);
  } else if (name == "radial-norm") {
    nf.field = {"radial-norm", Box::cube(2, -2.0, 2.0), [](Point x) { return std::hypot(x[0], x[1]); },
                [](Point x, std::span<double> g) {
                  const double r = std::hypot(x[0], x[1]);
                  g[0] = r > 0.0 ? x[0] / r : 0.0;
                  g[1] = r > 0.0 ? x[1] / r : 0.0;
                }};
    nf.density = one;
    nf.direction = one;
    nf.proposal = Proposal::uniform();
    nf.level = 1.0;
    nf.exact_derivative = 2.0 * std::numbers::pi;
  } else if (name == "linear") {
    // h = x1 + 2 x2 on [-1,1]^2: the zero set has length sqrt(5), |grad h| = sqrt(5).
    nf.field = {"linear", Box::cube(2, -1.0, 1.0), [](Point x) { return x[0] + 2.0 * x[1]; },
                [](Point, std::span<double> g) {
                  g[0] = 1.0;
                  g[1] = 2.0;
                }};
    nf.density = one;
    nf.direction = one;
    nf.proposal = Proposal::uniform();
    nf.level = 0.0;
    nf.exact_derivative = 1.0;
  } else if (name == "logistic-index") {
    constexpr double t0 = -0.5, t1 = 1.0, t2 = -0.75;
    nf.field = {"logistic-index", Box::cube(2, -5.0, 5.0),
                [](Point x) { return stats::logistic(t0 + t1 * x[0] + t2 * x[1]); },
                [](Point x, std::span<double> g) {
                  const double p = stats::logistic(t0 + t1 * x[0] + t2 * x[1]);
                  g[0] = p * (1 - p) * t1;
                  g[1] = p * (1 - p) * t2;
                }};
    nf.density = std_normal_density_2d;
    nf.direction = one;
    nf.proposal = Proposal::gaussian({0.0, 0.0}, {1.0, 1.0});
    nf.level = 0.5;
    // On the line p = 1/2, |grad h| = |theta|/4 and the Gaussian mass of the line is phi(t0/|theta|).
    const double norm = std::hypot(t1, t2);
    nf.exact_derivative = 4.0 * stats::normal_pdf(t0 / norm) / norm;
  } else {
    throw std::invalid_argument("unknown field '" + std::string(name) + "'");
  }
  return nf;
}

}  // namespace optalloc
