#include <algorithm>
#include <array>
#include <cmath>

#include "nwb/rng.hpp"
#include "nwb/simd/fastmath.hpp"
#include "nwb/simd/kernels.hpp"

namespace nwb::simd::detail::scalar {

namespace {

inline std::uint64_t next(OuLanes& l, std::size_t lane) noexcept {
  std::uint64_t* s[4] = {&l.state[0][lane], &l.state[1][lane], &l.state[2][lane], &l.state[3][lane]};
  const std::uint64_t result = *s[0] + *s[3];
  const std::uint64_t t = *s[1] << 17;
  *s[2] ^= *s[0];
  *s[3] ^= *s[1];
  *s[1] ^= *s[2];
  *s[0] ^= *s[3];
  *s[2] ^= t;
  *s[3] = rng::rotl(*s[3], 45);
  return result;
}

inline void box_muller(OuLanes& l, std::size_t lane, double& z1, double& z2) noexcept {
  const double u1 = fastmath::uniform_open0(next(l, lane));
  const double u2 = fastmath::uniform_open1(next(l, lane));
  const double r = std::sqrt(-2.0 * fastmath::log(u1));
  double s, c;
  fastmath::sincos_2pi(u2, s, c);
  z1 = r * c;
  z2 = r * s;
}

}  // namespace

void normal_pairs(OuLanes& lanes, std::size_t steps, double* z1_out, double* z2_out) {
  for (std::size_t k = 0; k < steps; ++k)
    for (std::size_t lane = 0; lane < kLanes; ++lane)
      box_muller(lanes, lane, z1_out[k * kLanes + lane], z2_out[k * kLanes + lane]);
}

void ou_advance(const OuCoefficients& c, OuLanes& lanes, std::size_t steps, double* xi1_out,
                double* xi2_out) {
  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t lane = 0; lane < kLanes; ++lane) {
      double z1, z2;
      box_muller(lanes, lane, z1, z2);
      const double x1 = c.rho * lanes.xi1[lane] + c.scale1 * z1;
      const double x2 = c.rho * lanes.xi2[lane] + c.scale2 * z2;
      lanes.xi1[lane] = x1;
      lanes.xi2[lane] = x2;
      xi1_out[k * kLanes + lane] = x1;
      xi2_out[k * kLanes + lane] = x2;
    }
  }
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * ldc;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * lda + p];
      const double* bp = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

double sum(const double* x, std::size_t n) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double sum_sq_dev(const double* x, std::size_t n, double center) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - center;
    s += d * d;
  }
  return s;
}

}  // namespace nwb::simd::detail::scalar
