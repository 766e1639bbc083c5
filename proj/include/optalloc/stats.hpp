#pragma once

#include <span>
#include <vector>

namespace optalloc::stats {

double mean(std::span<const double> x);
// Unbiased (n-1) sample variance; 0 for fewer than two values.
double variance(std::span<const double> x);
double stddev(std::span<const double> x);

// Linear-interpolation quantile (type 7). `x` need not be sorted.
double quantile(std::vector<double> x, double q);

// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|.
double ks_distance(std::vector<double> a, std::vector<double> b);

// Ordinary least squares slope of y on x.
double ols_slope(std::span<const double> x, std::span<const double> y);
// Slope of log(y) on log(x); all values must be positive.
double loglog_slope(std::span<const double> x, std::span<const double> y);

double normal_pdf(double x);
double normal_cdf(double x);
double normal_quantile(double p);
// Unrefined version for sampling transforms; p must lie in (0, 1).
double normal_quantile_approx(double p);
double logistic(double u);

// Weighted pool-adjacent-violators fit, nondecreasing.
std::vector<double> isotonic_increasing(std::span<const double> y,
                                        std::span<const double> w = {});

}  // namespace optalloc::stats
