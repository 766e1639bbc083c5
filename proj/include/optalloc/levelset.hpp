#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optalloc/common.hpp"

namespace optalloc {

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  static Box cube(std::size_t dim, double lo, double hi);
  std::size_t dim() const { return lower.size(); }
  double volume() const;
  double diameter() const;
  bool contains(Point x) const;
  void validate() const;
};

/// Scalar C^1 field h on an axis-aligned box.
struct Field {
  std::string name;
  Box domain;
  ScalarFn value;
  GradientFn gradient;

  std::size_t dim() const { return domain.dim(); }
  double gradient_norm(Point x) const;
};

using VectorFn = std::function<void(Point, std::span<double>)>;

/// h: box -> R^k. Only values are needed; the k >= 2 derivative is checked
/// through finite differences alone.
struct VectorField {
  std::string name;
  Box domain;
  std::size_t k = 1;
  VectorFn value;

  std::size_t dim() const { return domain.dim(); }
};

/// Compares the analytic gradient with central differences at pseudo-random
/// domain points; throws std::invalid_argument beyond 1e-4 relative error.
void check_field(const Field& field, std::uint64_t seed = 0, int points = 16);

enum class SamplingScheme { pseudo_random, sobol };

/// Product proposal on the domain box: uniform, or independent normals
/// truncated to the box (drawn by inverse CDF so Sobol structure survives).
struct Proposal {
  enum class Kind { uniform, gaussian };
  Kind kind = Kind::uniform;
  std::vector<double> mean;
  std::vector<double> sd;

  static Proposal uniform() { return {}; }
  static Proposal gaussian(std::vector<double> mean, std::vector<double> sd);
};

/// Monte Carlo plan. The budget is split evenly over `batches` independent
/// replicates (fresh pseudo-random substreams or fresh digital shifts of one
/// Sobol sequence); standard errors come from the spread of batch means.
struct SamplingPlan {
  std::uint64_t budget = 1'000'000;
  std::uint64_t seed = 0;
  int batches = 16;
  SamplingScheme scheme = SamplingScheme::sobol;
  Proposal proposal;

  std::uint64_t batch_size() const { return budget / static_cast<std::uint64_t>(batches); }
  void validate(std::size_t dim) const;
};

struct BandOptions {
  // Defaults to 1e-2 times the domain diameter.
  std::optional<double> eps;
  double regular_tol = 1e-6;
};

struct LevelSetEstimate {
  double value = 0.0;
  double se = 0.0;
  std::array<double, 3> eps{};
  // Plain band estimates at eps, eps/2, eps/4.
  std::array<double, 3> band_values{};
  double min_gradient_norm = 0.0;
  std::uint64_t band_points = 0;
};

/// int 1(h(x) > c) f(x) dx over the domain, f >= 0.
Estimate sorting_operator(const Field& field, const ScalarFn& f, double level, const SamplingPlan& plan);
/// Componentwise version: int 1(h_1 > c_1, ..., h_k > c_k) f(x) dx.
Estimate sorting_operator(const VectorField& field, const ScalarFn& f, std::span<const double> level,
                          const SamplingPlan& plan);

/// int_{h = c} g / |grad h| dH_{d-1}, estimated as (1/2eps) int 1(|h - c| < eps) g
/// on the ladder {eps, eps/2, eps/4} and combined by two rounds of
/// Richardson extrapolation. g may be signed.
LevelSetEstimate level_set_integral(const Field& field, const ScalarFn& g, double level,
                                    const SamplingPlan& plan, const BandOptions& band = {});

/// The k = 1 derivative F'_{h,c}(H): level_set_integral with integrand H f.
LevelSetEstimate hadamard_derivative_k1(const Field& field, const ScalarFn& f, const ScalarFn& H,
                                        double level, const SamplingPlan& plan,
                                        const BandOptions& band = {});

/// [F(h + tH, c) - F(h, c)] / t; both terms are evaluated on the same draws.
Estimate sorting_fd_quotient(const Field& field, const ScalarFn& f, const ScalarFn& H, double level,
                             double t, const SamplingPlan& plan);
Estimate sorting_fd_quotient(const VectorField& field, const ScalarFn& f, const VectorFn& H,
                             std::span<const double> level, double t, const SamplingPlan& plan);

struct FdConsistencyReport {
  std::vector<double> t;
  std::vector<double> quotients;
  std::vector<double> quotient_se;
  // Scalar levels only.
  std::optional<double> formula;
  std::optional<double> formula_se;
  std::vector<double> gaps;
  // Standard error of (quotient - formula), from per-batch differences.
  std::vector<double> gap_se;
  bool gaps_decreasing = false;
  // |q_{i+1} - q_i| along the ladder, and whether they shrink.
  std::vector<double> successive_diffs;
  bool cauchy = false;
};

FdConsistencyReport hadamard_fd_consistency(const Field& field, const ScalarFn& f, const ScalarFn& H,
                                            double level, std::span<const double> t_ladder,
                                            const SamplingPlan& plan, const BandOptions& band = {});
FdConsistencyReport hadamard_fd_consistency(const VectorField& field, const ScalarFn& f,
                                            const VectorFn& H, std::span<const double> level,
                                            std::span<const double> t_ladder, const SamplingPlan& plan);

struct AreaReport {
  std::size_t n = 0;
  std::size_t k = 0;
  double estimate = 0.0;
  double se = 0.0;
  double formula = 0.0;  // sqrt(det(A^T A))
  double rel_error = 0.0;
  std::string method;
};

/// H_k(A([0,1]^k)) for an n x k matrix A, k <= n. k = n uses |det A|;
/// otherwise the image is expressed in an orthonormal basis of the column
/// space and its area found by hit-or-miss sampling of the bounding box.
AreaReport linear_area_check(const RowMatrix& A, const SamplingPlan& plan);

struct ContinuityRow {
  double level = 0.0;
  double value = 0.0;
  double se = 0.0;
  bool critical = false;
  std::string note;
};

struct ContinuityScan {
  std::vector<ContinuityRow> rows;
  double max_jump = 0.0;
  double max_relative_jump = 0.0;
};

/// level_set_integral on a grid of levels with the same seed at every level.
/// Critical levels are flagged and skipped rather than aborting the scan.
ContinuityScan level_set_continuity_scan(const Field& field, const ScalarFn& g,
                                         std::span<const double> levels, const SamplingPlan& plan,
                                         const BandOptions& band = {});

/// Analytic test problems addressable by name from the CLI.
struct NamedField {
  Field field;
  ScalarFn density;
  ScalarFn direction;
  Proposal proposal;
  double level = 0.0;
  std::optional<double> exact_derivative;
};

std::vector<std::string> field_names();
NamedField named_field(std::string_view name);

// Standard bivariate normal density and helpers shared with tests and the CLI.
double std_normal_density_2d(Point x);

}  // namespace optalloc
