#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "optalloc/constrained_roc.hpp"
#include "optalloc/dgp.hpp"
#include "optalloc/dml.hpp"
#include "optalloc/harness.hpp"
#include "optalloc/levelset.hpp"
#include "optalloc/welfare.hpp"

namespace py = pybind11;
using namespace optalloc;

namespace {

Sample make_sample(RowMatrix x, std::vector<int> arm, std::vector<double> y, int num_arms) {
  Sample s;
  s.x = std::move(x);
  s.arm = std::move(arm);
  s.y = std::move(y);
  s.num_arms = num_arms;
  s.validate();
  return s;
}

py::dict sample_dict(const Sample& s) {
  py::dict d;
  d["x"] = s.x;
  d["arm"] = s.arm;
  d["y"] = s.y;
  if (s.z) d["z"] = *s.z;
  d["num_arms"] = s.num_arms;
  return d;
}

}  // namespace

PYBIND11_MODULE(_optalloc, m) {
  py::register_exception<Error>(m, "OptallocError", PyExc_RuntimeError);

  m.def("welfare_potential", [](const std::vector<double>& lambda, const RowMatrix& values) {
    return welfare_potential(Weights(lambda), values);
  });
  m.def("subgradient", [](const std::vector<double>& lambda, const RowMatrix& values) {
    return subgradient(Weights(lambda), values);
  });
  m.def("argmax_arm", [](const std::vector<double>& lambda, const std::vector<double>& values) {
    return argmax_arm(lambda, values);
  });

  m.def("roc_curve_json",
        [](const std::vector<double>& y, const std::vector<double>& p_hat, const std::vector<double>& grid, int B,
           std::uint64_t seed, double level) {
          return B > 0 ? roc_bootstrap(y, p_hat, grid, B, seed, level).to_json() : roc_estimate(y, p_hat, grid).to_json();
        });
  m.def("threshold_search",
        [](const std::vector<double>& g0, const std::vector<double>& g1, const std::vector<double>& c0,
           const std::vector<double>& c1, double alpha, double k_lo, double k_hi) {
          const ConstrainedProblem p = make_constrained_problem(g0, g1, c0, c1, {k_lo, k_hi});
          const double k = threshold_search(p, alpha);
          return py::make_tuple(k, alpha_of_k(p, k), beta_of_k(p, k));
        });

  m.def("field_names", &field_names);
  m.def("level_set_integral", [](const std::string& name, double level, std::uint64_t budget, std::uint64_t seed,
                                  std::optional<double> eps) {
    const NamedField nf = named_field(name);
    SamplingPlan plan;
    plan.budget = budget;
    plan.seed = seed;
    plan.proposal = nf.proposal;
    const auto e = level_set_integral(nf.field, nf.density, level, plan, BandOptions{eps});
    return py::make_tuple(e.value, e.se);
  });
  m.def("linear_area", [](const RowMatrix& A, std::uint64_t budget, std::uint64_t seed) {
    SamplingPlan plan;
    plan.budget = budget;
    plan.seed = seed;
    const AreaReport r = linear_area_check(A, plan);
    return py::make_tuple(r.estimate, r.formula);
  });

  m.def("dgp_names", &dgp_names);
  m.def("sample_dgp", [](const std::string& name, std::size_t n, std::uint64_t seed, std::uint64_t replicate,
                         bool with_cost) { return sample_dict(find_dgp(name).sample(n, seed, replicate, with_cost)); });
  m.def("population_gamma", [](const std::string& name, const std::vector<double>& lambda) {
    return population_gamma(find_dgp(name), Weights(lambda));
  });

  m.def("dml_json", [](RowMatrix x, std::vector<int> arm, std::vector<double> y, int num_arms,
                       const std::vector<double>& lambda, int folds, std::uint64_t seed) {
    const Sample s = make_sample(std::move(x), std::move(arm), std::move(y), num_arms);
    const DmlFits fits = fit_dml_nuisances(s, folds, seed, FitOptions{}, FitOptions{});
    return dml_estimate(s, Weights(lambda), fits.plan, fits.g, fits.p).to_json();
  });

  m.def("run_json", [](const std::map<std::string, std::string>& entries) {
    Config cfg;
    for (const auto& [k, v] : entries) cfg.set(k, v);
    return run(cfg).to_json();
  });
}
