#pragma once

// Polynomial log and sin/cos used by the laydown noise generator.
//
// The scalar functions below and the AVX2 kernels evaluate the exact same
// sequence of IEEE-754 operations (no fused multiply-add, contraction is
// disabled project-wide), so both code paths produce bit-identical normals.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>

namespace nwb::simd::fastmath {

inline constexpr double kLn2 = 0.6931471805599453094172321;
inline constexpr double kSqrt2 = 1.4142135623730950488016887;
inline constexpr double kHalfPi = 1.5707963267948966192313217;

inline constexpr int kLogTerms = 11;  // atanh series, s^0 .. s^20
inline constexpr int kSinTerms = 11;  // y^1 .. y^21
inline constexpr int kCosTerms = 12;  // y^0 .. y^22

inline constexpr std::array<double, kLogTerms> kLogCoeff = [] {
  std::array<double, kLogTerms> c{};
  for (int k = 0; k < kLogTerms; ++k) c[k] = 1.0 / (2.0 * k + 1.0);
  return c;
}();

inline constexpr std::array<double, kSinTerms> kSinCoeff = [] {
  std::array<double, kSinTerms> c{};
  double fact = 1.0;  // (2k+1)!
  for (int k = 0; k < kSinTerms; ++k) {
    if (k > 0) fact *= (2.0 * k) * (2.0 * k + 1.0);
    c[k] = (k % 2 == 0 ? 1.0 : -1.0) / fact;
  }
  return c;
}();

inline constexpr std::array<double, kCosTerms> kCosCoeff = [] {
  std::array<double, kCosTerms> c{};
  double fact = 1.0;  // (2k)!
  for (int k = 0; k < kCosTerms; ++k) {
    if (k > 0) fact *= (2.0 * k - 1.0) * (2.0 * k);
    c[k] = (k % 2 == 0 ? 1.0 : -1.0) / fact;
  }
  return c;
}();

/// Natural log for finite x > 0 (normal range only).
inline double log(double x) noexcept {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  double e = static_cast<double>((bits >> 52) & 0x7FF) - 1023.0;
  double m = std::bit_cast<double>((bits & 0x000FFFFFFFFFFFFFull) | 0x3FF0000000000000ull);
  if (m > kSqrt2) {
    m = m * 0.5;
    e = e + 1.0;
  }
  const double s = (m - 1.0) / (m + 1.0);
  const double s2 = s * s;
  double p = kLogCoeff[kLogTerms - 1];
  for (int k = kLogTerms - 2; k >= 0; --k) p = p * s2 + kLogCoeff[k];
  return e * kLn2 + (s + s) * p;
}

/// sin and cos of 2*pi*u for u in [0, 1).
inline void sincos_2pi(double u, double& sin_out, double& cos_out) noexcept {
  const double t = u * 4.0;
  const double q = std::floor(t);
  const double y = (t - q) * kHalfPi;
  const double y2 = y * y;
  double ps = kSinCoeff[kSinTerms - 1];
  for (int k = kSinTerms - 2; k >= 0; --k) ps = ps * y2 + kSinCoeff[k];
  double pc = kCosCoeff[kCosTerms - 1];
  for (int k = kCosTerms - 2; k >= 0; --k) pc = pc * y2 + kCosCoeff[k];
  const double s = y * ps;
  const double c = pc;
  if (q == 0.0) {
    sin_out = s;
    cos_out = c;
  } else if (q == 1.0) {
    sin_out = c;
    cos_out = -s;
  } else if (q == 2.0) {
    sin_out = -s;
    cos_out = -c;
  } else {
    sin_out = -c;
    cos_out = s;
  }
}

/// Open-closed uniform (0, 1] from 64 random bits.
inline double uniform_open0(std::uint64_t r) noexcept {
  return 1.0 - static_cast<double>(r >> 12) * 0x1p-52;
}

/// Closed-open uniform [0, 1) from 64 random bits.
inline double uniform_open1(std::uint64_t r) noexcept {
  return static_cast<double>(r >> 12) * 0x1p-52;
}

}  // namespace nwb::simd::fastmath
