#include "nwb/surrogates/linear.hpp"

#include <cmath>
#include <string>

#include "nwb/error.hpp"
#include "nwb/simd/kernels.hpp"

namespace nwb::surrogates {

namespace {

void check_xy(const Matrix& x, const Matrix& y) {
  if (x.rows() == 0) throw ValidationError("training set is empty", {"x"});
  if (x.rows() != y.rows()) throw ValidationError("x and y have different row counts", {"y"});
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("training data contains non-finite values", {"x"});
}

struct Centered {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  Vector x_mean;
  Vector y_mean;
};

Centered center(const Matrix& x, const Matrix& y) {
  Centered c;
  c.x_mean = x.colwise().mean().transpose();
  c.y_mean = y.colwise().mean().transpose();
  c.x = x.rowwise() - c.x_mean.transpose();
  c.y = y.rowwise() - c.y_mean.transpose();
  return c;
}

std::string format_condition(double c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", c);
  return buf;
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

std::string_view to_string(Regularization r) noexcept {
  switch (r) {
    case Regularization::none: return "none";
    case Regularization::l1: return "l1";
    case Regularization::l2: return "l2";
    case Regularization::elastic_net: return "elastic_net";
  }
  return "none";
}

Regularization parse_regularization(std::string_view s) {
  if (s == "none") return Regularization::none;
  if (s == "l1") return Regularization::l1;
  if (s == "l2") return Regularization::l2;
  if (s == "elastic_net") return Regularization::elastic_net;
  throw ValidationError("unknown regularization '" + std::string(s) + "'", {"regularization"});
}

void LinearConfig::validate() const {
  if (!(strength >= 0.0) || !std::isfinite(strength))
    throw ValidationError("regularization strength must be >= 0", {"strength"});
  if (!(l1_ratio >= 0.0 && l1_ratio <= 1.0)) throw ValidationError("l1_ratio must lie in [0, 1]", {"l1_ratio"});
  if (max_iterations == 0) throw ValidationError("max_iterations must be positive", {"max_iterations"});
  if (!(tolerance > 0.0)) throw ValidationError("tolerance must be positive", {"tolerance"});
}

Matrix LinearModel::predict(const Matrix& x) const {
  if (x.cols() != coef.rows()) throw ValidationError("feature count does not match the model", {"x"});
  // Row-major copy of the weights; the kernel sums every output in the same
  // order whatever the batch size, so batched and single-row calls agree.
  const Matrix w = coef;
  Matrix out(x.rows(), w.cols());
  simd::gemm(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(w.cols()), static_cast<std::size_t>(x.cols()),
             x.data(), static_cast<std::size_t>(x.cols()), w.data(), static_cast<std::size_t>(w.cols()), out.data(),
             static_cast<std::size_t>(out.cols()), false);
  out.rowwise() += intercept.transpose();
  return out;
}

LinearModel fit_linear(const Matrix& x, const Matrix& y, const LinearConfig& config) {
  config.validate();
  check_xy(x, y);
  const Centered c = center(x, y);
  const Eigen::Index p = x.cols();

  double ratio = 0.0;
  if (config.regularization == Regularization::l1) ratio = 1.0;
  if (config.regularization == Regularization::elastic_net) ratio = config.l1_ratio;
  const double lambda = config.regularization == Regularization::none ? 0.0 : config.strength;
  const double l1 = lambda * ratio;
  const double l2 = lambda * (1.0 - ratio);

  LinearModel model;
  if (l1 == 0.0) {
    Eigen::MatrixXd gram = c.x.transpose() * c.x;
    gram.diagonal().array() += l2;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > hi * 1e-13 * static_cast<double>(p)))
      throw NumericalError("singular normal equations (condition number " +
                           format_condition(lo > 0.0 ? hi / lo : INFINITY) + ")");
    model.coef = gram.ldlt().solve(c.x.transpose() * c.y);
  } else {
    const Eigen::Index n_out = y.cols();
    model.coef = Matrix::Zero(p, n_out);
    const Eigen::VectorXd colsq = c.x.colwise().squaredNorm().transpose();
    for (Eigen::Index k = 0; k < n_out; ++k) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
      Eigen::VectorXd resid = c.y.col(k);
      bool converged = false;
      std::size_t sweep = 0;
      while (sweep < config.max_iterations) {
        ++sweep;
        double max_delta = 0.0, max_w = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
          if (colsq[j] == 0.0) continue;
          const double rho = c.x.col(j).dot(resid) + colsq[j] * w[j];
          const double next = soft_threshold(rho, l1) / (colsq[j] + l2);
          const double delta = next - w[j];
          if (delta != 0.0) {
            resid -= delta * c.x.col(j);
            w[j] = next;
          }
          max_delta = std::max(max_delta, std::fabs(delta));
          max_w = std::max(max_w, std::fabs(next));
        }
        if (max_delta <= config.tolerance * max_w || max_delta == 0.0) {
          converged = true;
          break;
        }
      }
      if (!converged)
        throw NumericalError("coordinate descent did not converge after " + std::to_string(sweep) + " sweeps");
      model.iterations = std::max(model.iterations, sweep);
      model.coef.col(k) = w;
    }
  }
  model.intercept = c.y_mean - model.coef.transpose() * c.x_mean;
  if (!model.coef.allFinite()) throw NumericalError("linear fit produced non-finite coefficients");
  return model;
}

PolynomialFeatures::PolynomialFeatures(std::size_t inputs, unsigned degree) : inputs_(inputs), degree_(degree) {
  if (inputs == 0) throw ValidationError("polynomial features need at least one input", {"inputs"});
  if (degree == 0) throw ValidationError("polynomial degree must be >= 1", {"degree"});
  std::vector<unsigned> e(inputs, 0);
  // Multisets of size d over the inputs, in lexicographic order of the
  // nondecreasing index sequence.
  for (unsigned d = 1; d <= degree; ++d) {
    std::vector<std::size_t> idx(d, 0);
    for (;;) {
      std::fill(e.begin(), e.end(), 0u);
      for (auto i : idx) ++e[i];
      exponents_.push_back(e);
      std::size_t pos = d;
      while (pos > 0 && idx[pos - 1] == inputs - 1) --pos;
      if (pos == 0) break;
      const std::size_t v = idx[pos - 1] + 1;
      for (std::size_t q = pos - 1; q < d; ++q) idx[q] = v;
    }
  }
}

std::size_t PolynomialFeatures::count(std::size_t inputs, unsigned degree) {
  // C(inputs + degree, degree) - 1
  double c = 1.0;
  for (unsigned k = 1; k <= degree; ++k) c = c * static_cast<double>(inputs + k) / k;
  return static_cast<std::size_t>(std::llround(c)) - 1;
}

Matrix PolynomialFeatures::transform(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != inputs_)
    throw ValidationError("feature count does not match the polynomial expansion", {"x"});
  Matrix out(x.rows(), static_cast<Eigen::Index>(exponents_.size()));
  std::vector<double> pw(inputs_ * (degree_ + 1));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (std::size_t i = 0; i < inputs_; ++i) {
      double v = 1.0;
      for (unsigned e = 0; e <= degree_; ++e) {
        pw[i * (degree_ + 1) + e] = v;
        v *= x(r, static_cast<Eigen::Index>(i));
      }
    }
    for (std::size_t f = 0; f < exponents_.size(); ++f) {
      double v = 1.0;
      for (std::size_t i = 0; i < inputs_; ++i)
        if (exponents_[f][i] != 0) v *= pw[i * (degree_ + 1) + exponents_[f][i]];
      out(r, static_cast<Eigen::Index>(f)) = v;
    }
  }
  return out;
}

LinearModel fit_polynomial(const PolynomialFeatures& features, const Matrix& x, const Matrix& y) {
  check_xy(x, y);
  const Matrix phi = features.transform(x);
  if (!phi.allFinite()) throw NumericalError("polynomial features overflowed");
  Centered c = center(phi, y);
  const Eigen::Index p = phi.cols();
  Eigen::VectorXd scale = c.x.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(scale[j] > 0.0))
      throw NumericalError("polynomial design is rank deficient (constant monomial column " + std::to_string(j) + ")");
    c.x.col(j) /= scale[j];
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(c.x);
  if (qr.rank() < p)
    throw NumericalError("polynomial design is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                         std::to_string(p) + " columns)");
  Eigen::MatrixXd coef = qr.solve(c.y);
  for (Eigen::Index j = 0; j < p; ++j) coef.row(j) /= scale[j];
  LinearModel model;
  model.coef = coef;
  model.intercept = c.y_mean - model.coef.transpose() * c.x_mean;
  if (!model.coef.allFinite() || !model.intercept.allFinite())
    throw NumericalError("polynomial fit produced non-finite coefficients");
  return model;
}

void BayesConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("prior precision alpha must be > 0", {"alpha"});
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance))
    throw ValidationError("noise variance must be > 0", {"noise_variance"});
  if (max_iterations == 0) throw ValidationError("max_iterations must be positive", {"max_iterations"});
}

BayesModel fit_bayes(const Matrix& x, const Matrix& y, const BayesConfig& config) {
  config.validate();
  check_xy(x, y);
  const Centered c = center(x, y);
  const Eigen::Index p = x.cols(), n_out = y.cols();
  const auto n = static_cast<double>(x.rows());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.x.transpose() * c.x);
  const Eigen::MatrixXd& v = eig.eigenvectors();
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd xty = c.x.transpose() * c.y;

  BayesModel model;
  model.map.coef = Matrix::Zero(p, n_out);
  model.alpha = Vector::Constant(n_out, config.alpha);
  model.noise_variance = Vector::Constant(n_out, config.noise_variance);
  model.feature_mean = c.x_mean;
  model.covariance.resize(static_cast<std::size_t>(n_out));

  for (Eigen::Index k = 0; k < n_out; ++k) {
    double alpha = config.alpha, s2 = config.noise_variance;
    const Eigen::VectorXd proj = v.transpose() * xty.col(k);
    Eigen::VectorXd w;
    std::size_t it = 0;
    for (;;) {
      w = v * (proj.array() / (lam.array() + alpha * s2)).matrix();
      if (!config.evidence) break;
      if (++it > config.max_iterations)
        throw NumericalError("evidence re-estimation did not converge after " +
                             std::to_string(config.max_iterations) + " iterations");
      const double gamma = ((lam.array() / s2) / (alpha + lam.array() / s2)).sum();
      const double wn = w.squaredNorm();
      const double rss = (c.y.col(k) - c.x * w).squaredNorm();
      const double a_next = wn > 0.0 ? gamma / wn : alpha;
      const double s_next = n - gamma > 0.0 ? std::max(rss / (n - gamma), 1e-300) : s2;
      const bool done = std::fabs(a_next - alpha) <= config.tolerance * alpha &&
                        std::fabs(s_next - s2) <= config.tolerance * s2;
      alpha = a_next;
      s2 = s_next;
      if (done) {
        w = v * (proj.array() / (lam.array() + alpha * s2)).matrix();
        break;
      }
    }
    model.map.coef.col(k) = w;
    model.alpha[k] = alpha;
    model.noise_variance[k] = s2;
    model.covariance[static_cast<std::size_t>(k)] =
        v * (1.0 / (alpha + lam.array() / s2)).matrix().asDiagonal() * v.transpose();
  }
  model.map.intercept = c.y_mean - model.map.coef.transpose() * c.x_mean;
  if (!model.map.coef.allFinite()) throw NumericalError("Bayesian fit produced non-finite weights");
  return model;
}

Matrix BayesModel::predictive_variance(const Matrix& x) const {
  if (x.cols() != feature_mean.size()) throw ValidationError("feature count does not match the model", {"x"});
  const Eigen::MatrixXd xc = x.rowwise() - feature_mean.transpose();
  Matrix out(x.rows(), static_cast<Eigen::Index>(covariance.size()));
  for (std::size_t k = 0; k < covariance.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    out.col(kk) = ((xc * covariance[k]).cwiseProduct(xc)).rowwise().sum().array() + noise_variance[kk];
  }
  return out;
}

}  // namespace nwb::surrogates
