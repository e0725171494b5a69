#pragma once

#include <array>
#include <vector>

#include "nwb/homogeneity.hpp"
#include "nwb/matrix.hpp"

namespace nwb::surrogates {

struct OutputMetrics {
  double mape = 0.0;  // percent
  double mse = 0.0;
  double r2 = 0.0;
};

/// Pooled over all samples and outputs (m samples x n outputs):
///   MAPE = 100 / (m n) * sum |(Y - P) / Y|
///   MSE  = 1 / (m n) * sum (Y - P)^2
///   R2   = 1 - sum (Y - P)^2 / sum (Y - mean_col(Y))^2
/// plus the same three per output column.
struct Metrics {
  double mape = 0.0;
  double mse = 0.0;
  double r2 = 0.0;
  std::vector<OutputMetrics> per_output;
};

/// R2 is NaN when the targets have no variance. Throws ValidationError on
/// shape mismatch, empty input or a zero actual value (named by row and column).
Metrics evaluate_predictions(const Matrix& actual, const Matrix& predicted);

/// Pooled MSE only; no restriction on zero actual values.
double mean_squared_error(const Matrix& actual, const Matrix& predicted);

}  // namespace nwb::surrogates
