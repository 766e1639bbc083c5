#pragma once

// Independent reference computations for the tests. Everything here is
// written directly from the definitions, with loops instead of the library's
// sorted or vectorized paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }
inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// Composite Simpson rule with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 200000) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// (1/n) sum_i max_j lambda_j v_ij by direct loops; v is row-major n x J.
inline double welfare(const std::vector<double>& lambda, const std::vector<double>& v, std::size_t n) {
  const std::size_t J = lambda.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < J; ++j) best = std::max(best, lambda[j] * v[i * J + j]);
    total += best;
  }
  return total / static_cast<double>(n);
}

struct Binary {
  std::vector<double> gain, cost, a_treated, a_base, a_norm, b_treated, b_base, b_norm;
};

// gain - k cost > 0 with cost > 0, compared as a ratio so that k equal to a
// row's own ratio leaves that row untreated exactly.
inline bool treated(const Binary& p, std::size_t i, double k) { return p.gain[i] / p.cost[i] > k; }

inline double alpha_at(const Binary& p, double k) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.gain.size(); ++i) {
    num += (treated(p, i, k) ? p.a_treated[i] : 0.0) + p.a_base[i];
    den += p.a_norm[i];
  }
  return num / den;
}

inline double beta_at(const Binary& p, double k) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.gain.size(); ++i) {
    num += (treated(p, i, k) ? p.b_treated[i] : 0.0) + p.b_base[i];
    den += p.b_norm[i];
  }
  return num / den;
}

// inf{k in [lo, hi] : alpha(k) <= a} by scanning every candidate jump point.
// Returns NaN when even k = hi misses the budget.
inline double threshold(const Binary& p, double a, double lo, double hi) {
  if (alpha_at(p, hi) > a) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> cand{lo};
  for (std::size_t i = 0; i < p.gain.size(); ++i) {
    const double r = p.gain[i] / p.cost[i];
    if (r > lo && r <= hi) cand.push_back(r);
  }
  std::sort(cand.begin(), cand.end());
  for (double k : cand)
    if (alpha_at(p, k) <= a) return k;
  return hi;
}

// Uniform covariate with p(x) = x: alpha(k) = (1-k)^2, beta(k) = 1 - k^2.
inline double uniform_roc_k(double a) { return 1.0 - std::sqrt(a); }
inline double uniform_roc_beta(double a) {
  const double k = uniform_roc_k(a);
  return 1.0 - k * k;
}
inline double uniform_roc_f_alpha(double k) { return -2.0 * (1.0 - k); }

// sqrt(det(A^T A)) for a column-major list of k columns in R^n, by
// Gram-Schmidt: the product of the orthogonalized column norms.
inline double gram_volume(std::vector<std::vector<double>> cols) {
  double vol = 1.0;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (std::size_t l = 0; l < j; ++l) {
      double dot = 0.0, nn = 0.0;
      for (std::size_t r = 0; r < cols[j].size(); ++r) {
        dot += cols[j][r] * cols[l][r];
        nn += cols[l][r] * cols[l][r];
      }
      for (std::size_t r = 0; r < cols[j].size(); ++r) cols[j][r] -= dot / nn * cols[l][r];
    }
    double norm = 0.0;
    for (double v : cols[j]) norm += v * v;
    vol *= std::sqrt(norm);
  }
  return vol;
}

}  // namespace oracle
