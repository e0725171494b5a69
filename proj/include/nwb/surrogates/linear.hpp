#pragma once

// Linear-in-parameters regressors: least squares with optional
// regularization, full polynomial expansions and Bayesian ridge. All outputs
// share one design matrix and get independent coefficient columns; the
// intercept is never penalized (inputs and targets are centered first).

#include <cstdint>
#include <string_view>
#include <vector>

#include "nwb/matrix.hpp"

namespace nwb::surrogates {

enum class Regularization { none, l1, l2, elastic_net };
std::string_view to_string(Regularization r) noexcept;
Regularization parse_regularization(std::string_view s);

/// Minimizes 1/2 |y - Xw - b|^2 + lambda * r * |w|_1 + lambda * (1 - r) / 2 * |w|^2
/// with r = 1 for l1, 0 for l2 and l1_ratio for elastic_net.
struct LinearConfig {
  Regularization regularization = Regularization::none;
  double strength = 0.0;
  double l1_ratio = 0.5;
  std::size_t max_iterations = 100000;  // coordinate descent sweeps
  double tolerance = 1e-12;             // max coefficient change relative to max coefficient

  void validate() const;
};

struct LinearModel {
  Matrix coef;  // features x outputs
  Vector intercept;
  std::size_t iterations = 0;

  Matrix predict(const Matrix& x) const;
};

/// none/l2 solve the normal equations; l1/elastic_net use cyclic coordinate
/// descent. Throws NumericalError on a singular system or non-convergence.
LinearModel fit_linear(const Matrix& x, const Matrix& y, const LinearConfig& config);

/// Monomials of total degree 1..degree in `inputs` variables, graded order.
class PolynomialFeatures {
 public:
  PolynomialFeatures() = default;
  PolynomialFeatures(std::size_t inputs, unsigned degree);

  Matrix transform(const Matrix& x) const;
  std::size_t size() const noexcept { return exponents_.size(); }
  unsigned degree() const noexcept { return degree_; }
  std::size_t inputs() const noexcept { return inputs_; }
  const std::vector<std::vector<unsigned>>& exponents() const noexcept { return exponents_; }

  /// Number of monomials of degree 1..degree in n variables.
  static std::size_t count(std::size_t inputs, unsigned degree);

 private:
  std::size_t inputs_ = 0;
  unsigned degree_ = 0;
  std::vector<std::vector<unsigned>> exponents_;
};

/// Unregularized least squares on the expanded features via column-pivoted
/// QR on scaled columns. Throws NumericalError when the expanded design is
/// rank deficient or the result is not finite.
LinearModel fit_polynomial(const PolynomialFeatures& features, const Matrix& x, const Matrix& y);

struct BayesConfig {
  double alpha = 1.0;           // prior precision
  double noise_variance = 1.0;  // sigma^2
  bool evidence = false;        // re-estimate alpha and sigma^2 per output
  std::size_t max_iterations = 300;
  double tolerance = 1e-8;

  void validate() const;
};

struct BayesModel {
  LinearModel map;
  Vector alpha;           // per output
  Vector noise_variance;  // per output
  Vector feature_mean;
  std::vector<Matrix> covariance;  // posterior weight covariance per output

  Matrix predict(const Matrix& x) const { return map.predict(x); }
  /// Predictive variance sigma^2 + x^T S x per sample and output.
  Matrix predictive_variance(const Matrix& x) const;
};

/// MAP weights minimize |y - Xw - b|^2 / (2 sigma^2) + alpha / 2 |w|^2, i.e.
/// ridge with lambda = alpha * sigma^2.
BayesModel fit_bayes(const Matrix& x, const Matrix& y, const BayesConfig& config);

}  // namespace nwb::surrogates
