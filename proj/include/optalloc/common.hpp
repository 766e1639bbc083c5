#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace optalloc {

// Row-major so that a single observation is a contiguous span.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Point = std::span<const double>;
using ScalarFn = std::function<double(Point)>;
using GradientFn = std::function<void(Point, std::span<double>)>;

inline Point row(const RowMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ||grad h|| fell below the regularity tolerance inside the integration band.
class CriticalLevelError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Threshold landed where the influence factor k/(1-k) is undefined.
class BoundaryThresholdError : public Error {
 public:
  using Error::Error;
};

class LeakageError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// A Monte Carlo quantity with its standard error.
struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

}  // namespace optalloc
