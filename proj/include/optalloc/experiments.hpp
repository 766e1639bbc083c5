#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "optalloc/dgp.hpp"
#include "optalloc/first_stage.hpp"

namespace optalloc {

struct GeometryCheck {
  std::string name;
  double value = 0.0;
  double reference = 0.0;
  double error = 0.0;      // relative unless the tolerance says otherwise
  double tolerance = 0.0;
  bool pass = false;
};

/// "default": circle perimeters, five linear areas and three k = 1
/// derivative oracles. "full" adds the finite-difference consistency checks
/// for k = 1 (gaussian-halfspace) and k = 2 (identity field), which take
/// minutes.
std::vector<GeometryCheck> geometry_suite(const std::string& suite, std::uint64_t seed);
// One part of the suite: circle, area, derivative, fd-k1 or fd-k2.
std::vector<GeometryCheck> geometry_group(const std::string& group, std::uint64_t seed);

// The five fixed matrices of the area check, by name.
std::vector<std::pair<std::string, RowMatrix>> area_check_matrices();

struct CoverageTable {
  std::vector<double> alpha;
  std::vector<double> truth;
  std::vector<double> basic;       // basic percentile band
  std::vector<double> symmetric;   // symmetrized band
  std::vector<double> influence;   // beta_hat +- z se
  std::vector<double> median_width;
  int reps = 0;
};

/// Outer Monte Carlo over fresh samples from an ROC design. Each replicate
/// fits the first stage with `first_stage` and runs the refit-free bootstrap.
CoverageTable roc_coverage(const Dgp& dgp, const std::vector<double>& alpha_grid, std::size_t n, int B, int reps,
                           const FitOptions& first_stage, double level, std::uint64_t seed);

}  // namespace optalloc
