#include "nwb/surrogates/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "nwb/error.hpp"

namespace nwb::surrogates {

Metrics evaluate_predictions(const Matrix& y, const Matrix& p) {
  if (y.rows() != p.rows() || y.cols() != p.cols())
    throw ValidationError("actual and predicted matrices differ in shape", {"predicted"});
  if (y.size() == 0) throw ValidationError("cannot evaluate an empty split", {"split"});
  const Eigen::Index m = y.rows(), n = y.cols();
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (y(i, j) == 0.0)
        throw ValidationError("MAPE undefined: actual value is zero at row " + std::to_string(i) + ", output " +
                                  std::to_string(j),
                              {"row " + std::to_string(i)});

  Metrics out;
  out.per_output.resize(static_cast<std::size_t>(n));
  double ape = 0.0, sse = 0.0, sst = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double mean = y.col(j).mean();
    double ape_j = 0.0, sse_j = 0.0, sst_j = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double e = y(i, j) - p(i, j);
      ape_j += std::fabs(e / y(i, j));
      sse_j += e * e;
      sst_j += (y(i, j) - mean) * (y(i, j) - mean);
    }
    auto& o = out.per_output[static_cast<std::size_t>(j)];
    o.mape = 100.0 * ape_j / static_cast<double>(m);
    o.mse = sse_j / static_cast<double>(m);
    o.r2 = sst_j > 0.0 ? 1.0 - sse_j / sst_j : std::numeric_limits<double>::quiet_NaN();
    ape += ape_j;
    sse += sse_j;
    sst += sst_j;
  }
  const auto mn = static_cast<double>(m * n);
  out.mape = 100.0 * ape / mn;
  out.mse = sse / mn;
  out.r2 = sst > 0.0 ? 1.0 - sse / sst : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double mean_squared_error(const Matrix& y, const Matrix& p) {
  if (y.rows() != p.rows() || y.cols() != p.cols())
    throw ValidationError("actual and predicted matrices differ in shape", {"predicted"});
  if (y.size() == 0) throw ValidationError("cannot evaluate an empty split", {"split"});
  return (y - p).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace nwb::surrogates
