#include "nwb/surrogates/svr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "nwb/error.hpp"
#include "nwb/rng.hpp"
#include "nwb/simd/kernels.hpp"

namespace nwb::surrogates {

namespace {
constexpr double kTau = 1e-12;
}

void SvrConfig::validate() const {
  if (!(c > 0.0) || !std::isfinite(c)) throw ValidationError("SVR penalty C must be > 0", {"c"});
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ValidationError("SVR epsilon must be > 0", {"epsilon"});
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ValidationError("RBF gamma must be > 0", {"gamma"});
  if (max_rows == 0) throw ValidationError("max_rows must be positive", {"max_rows"});
  if (!(tolerance > 0.0)) throw ValidationError("tolerance must be positive", {"tolerance"});
  if (max_iterations == 0) throw ValidationError("max_iterations must be positive", {"max_iterations"});
}

Matrix rbf_kernel(const Matrix& a, const Matrix& b, double gamma) {
  if (a.cols() != b.cols()) throw ValidationError("kernel operands disagree in feature count", {"x"});
  Matrix k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) k(i, j) = std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
  return k;
}

SvrDual solve_svr_dual(const Matrix& kernel, const Vector& target, double c, double epsilon, double tolerance,
                       std::size_t max_iterations) {
  const Eigen::Index l = kernel.rows();
  if (kernel.cols() != l || target.size() != l) throw ValidationError("kernel and targets disagree in size", {"y"});
  const Eigen::Index n = 2 * l;
  std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
  std::vector<double> grad(static_cast<std::size_t>(n));
  std::vector<signed char> sign(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < l; ++t) {
    grad[t] = epsilon - target[t];
    grad[t + l] = epsilon + target[t];
    sign[t] = 1;
    sign[t + l] = -1;
  }
  auto q = [&](Eigen::Index s, Eigen::Index t) {
    return static_cast<double>(sign[s] * sign[t]) * kernel(s % l, t % l);
  };

  SvrDual out;
  std::size_t it = 0;
  for (;; ++it) {
    // Maximal violating i, then j by second order gain.
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (sign[t] > 0) {
        if (alpha[t] < c && -grad[t] >= gmax) gmax = -grad[t], i = t;
      } else {
        if (alpha[t] > 0.0 && grad[t] >= gmax) gmax = grad[t], i = t;
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    const double qii = i >= 0 ? kernel(i % l, i % l) : 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (sign[t] > 0) {
        if (alpha[t] <= 0.0) continue;
        const double diff = gmax + grad[t];
        gmax2 = std::max(gmax2, grad[t]);
        if (diff > 0.0) {
          double quad = qii + kernel(t % l, t % l) - 2.0 * sign[i] * q(i, t);
          if (quad <= 0.0) quad = kTau;
          const double gain = -diff * diff / quad;
          if (gain <= best) best = gain, j = t;
        }
      } else {
        if (alpha[t] >= c) continue;
        const double diff = gmax - grad[t];
        gmax2 = std::max(gmax2, -grad[t]);
        if (diff > 0.0) {
          double quad = qii + kernel(t % l, t % l) + 2.0 * sign[i] * q(i, t);
          if (quad <= 0.0) quad = kTau;
          const double gain = -diff * diff / quad;
          if (gain <= best) best = gain, j = t;
        }
      }
    }
    out.gap = gmax + gmax2;
    if (i < 0 || j < 0 || out.gap < tolerance) break;
    if (it >= max_iterations)
      throw NumericalError("SVR solver did not converge after " + std::to_string(it) + " iterations (gap " +
                           std::to_string(out.gap) + ")");

    const double ai = alpha[i], aj = alpha[j];
    const double qij = q(i, j);
    const double qd_i = kernel(i % l, i % l), qd_j = kernel(j % l, j % l);
    if (sign[i] != sign[j]) {
      double quad = qd_i + qd_j + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) alpha[j] = 0.0, alpha[i] = diff;
      } else {
        if (alpha[i] < 0.0) alpha[i] = 0.0, alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) alpha[i] = c, alpha[j] = c - diff;
      } else {
        if (alpha[j] > c) alpha[j] = c, alpha[i] = c + diff;
      }
    } else {
      double quad = qd_i + qd_j - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) alpha[i] = c, alpha[j] = sum - c;
      } else {
        if (alpha[j] < 0.0) alpha[j] = 0.0, alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) alpha[j] = c, alpha[i] = sum - c;
      } else {
        if (alpha[i] < 0.0) alpha[i] = 0.0, alpha[j] = sum;
      }
    }
    const double di = alpha[i] - ai, dj = alpha[j] - aj;
    const double* ki = kernel.data() + (i % l) * l;
    const double* kj = kernel.data() + (j % l) * l;
    const double ci = sign[i] * di, cj = sign[j] * dj;
    for (Eigen::Index t = 0; t < l; ++t) {
      const double v = ki[t] * ci + kj[t] * cj;
      grad[t] += v;
      grad[t + l] -= v;
    }
  }

  // Offset from free variables, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = sign[t] * grad[t];
    if (alpha[t] >= c) {
      if (sign[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0.0) {
      if (sign[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++free;
      sum_free += yg;
    }
  }
  const double rho = free > 0 ? sum_free / static_cast<double>(free) : 0.5 * (ub + lb);
  out.bias = -rho;
  out.beta.resize(l);
  for (Eigen::Index t = 0; t < l; ++t) out.beta[t] = alpha[t] - alpha[t + l];
  out.iterations = it;
  return out;
}

Matrix SvrModel::predict(const Matrix& x) const {
  if (x.cols() != support.cols()) throw ValidationError("feature count does not match the model", {"x"});
  Matrix out = Matrix::Zero(x.rows(), bias.size());
  if (support.rows() > 0) {
    const Matrix k = rbf_kernel(x, support, gamma);
    const Matrix c = coef;
    simd::gemm(static_cast<std::size_t>(k.rows()), static_cast<std::size_t>(c.cols()), static_cast<std::size_t>(k.cols()),
               k.data(), static_cast<std::size_t>(k.cols()), c.data(), static_cast<std::size_t>(c.cols()), out.data(),
               static_cast<std::size_t>(out.cols()), false);
  }
  out.rowwise() += bias.transpose();
  return out;
}

SvrModel fit_svr(const Matrix& x, const Matrix& y, const SvrConfig& config, std::uint64_t seed) {
  config.validate();
  if (x.rows() == 0 || x.rows() != y.rows()) throw ValidationError("SVR needs matching nonempty x and y", {"x"});
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  if (rows.size() > config.max_rows) {
    rng::Engine eng(rng::derive(seed, {0x5F7}));
    eng.shuffle(std::span(rows));
    rows.resize(config.max_rows);
    std::sort(rows.begin(), rows.end());
  }
  const Matrix xs = x(rows, Eigen::all);
  const Matrix ys = y(rows, Eigen::all);
  const Matrix k = rbf_kernel(xs, xs, config.gamma);

  const Eigen::Index l = xs.rows(), n_out = y.cols();
  Matrix beta(l, n_out);
  SvrModel model;
  model.gamma = config.gamma;
  model.bias.resize(n_out);
  for (Eigen::Index o = 0; o < n_out; ++o) {
    const SvrDual d =
        solve_svr_dual(k, ys.col(o), config.c, config.epsilon, config.tolerance, config.max_iterations);
    beta.col(o) = d.beta;
    model.bias[o] = d.bias;
    model.iterations.push_back(d.iterations);
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index t = 0; t < l; ++t)
    if ((beta.row(t).array() != 0.0).any()) keep.push_back(t);
  model.support = xs(keep, Eigen::all);
  model.coef = beta(keep, Eigen::all);
  return model;
}

}  // namespace nwb::surrogates
