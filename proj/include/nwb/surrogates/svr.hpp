#pragma once

// Epsilon-insensitive support vector regression with an RBF kernel. One
// machine per output; all machines share the kernel matrix.

#include <cstdint>
#include <vector>

#include "nwb/matrix.hpp"

namespace nwb::surrogates {

struct SvrConfig {
  double c = 10.0;
  double epsilon = 0.1;
  double gamma = 0.2;
  std::size_t max_rows = 4000;  // larger training sets are subsampled
  double tolerance = 1e-3;      // maximal violating pair gap at convergence
  std::size_t max_iterations = 10'000'000;

  void validate() const;
};

/// Solution of the dual for one output.
struct SvrDual {
  Vector beta;  // alpha - alpha*, one per training row
  double bias = 0.0;
  std::size_t iterations = 0;
  double gap = 0.0;  // final maximal violating pair gap
};

/// Kernel matrix exp(-gamma |a_i - b_j|^2).
Matrix rbf_kernel(const Matrix& a, const Matrix& b, double gamma);

/// SMO with second order working set selection on the 2l-variable dual.
/// Throws NumericalError when the iteration cap is reached.
SvrDual solve_svr_dual(const Matrix& kernel, const Vector& y, double c, double epsilon, double tolerance,
                       std::size_t max_iterations);

struct SvrModel {
  double gamma = 0.0;
  Matrix support;  // rows with a nonzero coefficient in any output
  Matrix coef;     // support x outputs
  Vector bias;
  std::vector<std::size_t> iterations;

  Matrix predict(const Matrix& x) const;
};

SvrModel fit_svr(const Matrix& x, const Matrix& y, const SvrConfig& config, std::uint64_t seed);

}  // namespace nwb::surrogates
