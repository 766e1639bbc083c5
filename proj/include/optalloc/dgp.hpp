#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "optalloc/common.hpp"
#include "optalloc/constrained_roc.hpp"
#include "optalloc/levelset.hpp"
#include "optalloc/rng.hpp"
#include "optalloc/welfare.hpp"

namespace optalloc {

/// Simulation design with known truth. Binary-label (ROC) designs have a
/// single arm and y ~ Bernoulli(p(x)); treatment designs draw the arm from the
/// propensities and y = g_D(x) + noise_sd * N(0,1).
struct Dgp {
  std::string name;
  std::size_t d = 1;
  int num_arms = 1;
  Box support;
  ScalarFn density;
  Proposal proposal;
  std::function<void(Rng&, std::span<double>)> draw_x;

  std::vector<ScalarFn> g;
  std::vector<ScalarFn> c;            // empty when the design has no costs
  std::vector<ScalarFn> propensity;   // P(D = j | x), one per arm
  double noise_sd = 0.0;
  double cost_noise_sd = 0.0;

  std::optional<RocModel> roc;
  // Closed-form gamma(lambda, g) where available.
  std::function<double(const Weights&)> gamma_closed_form;

  bool closed_form_roc() const { return roc.has_value(); }
  bool closed_form_gamma() const { return static_cast<bool>(gamma_closed_form); }
  // Population gamma and policy values are computed by 1D quadrature.
  bool quadrature_1d() const { return d == 1; }

  Sample sample(std::size_t n, std::uint64_t seed, std::uint64_t replicate = 0, bool with_cost = false) const;
  ArmFunctions arms() const;
};

std::vector<std::string> dgp_names();
// Throws std::invalid_argument for unknown names. Registration runs the
// self-check, so a returned design has passed it.
const Dgp& find_dgp(const std::string& name);

struct SelfCheckRow {
  std::string quantity;
  double declared = 0.0;
  double oracle = 0.0;
  double abs_error = 0.0;
};

// Compares declared analytic quantities against independent quadrature.
std::vector<SelfCheckRow> dgp_self_check(const Dgp& dgp);

/// int_support sum_j lambda_j 1(arm(x) = j) g_j(x) density(x) dx for a 1D
/// design. The arm map is scanned on `cells` cells and switch points are
/// located by bisection.
double population_policy_value(const Dgp& dgp, const Weights& lambda, const std::function<int(double)>& arm_of,
                               std::size_t cells = 2048);
/// gamma(lambda, g) by quadrature.
double population_gamma(const Dgp& dgp, const Weights& lambda);

// Adaptive Gauss-Kronrod integral of a smooth 1D function.
double integrate_1d(const std::function<double(double)>& f, double a, double b, double tol = 1e-12);

}  // namespace optalloc
