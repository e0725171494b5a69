#pragma once

// Data-parallel inner loops with a scalar reference and an AVX2 variant.
//
// The variant is chosen at runtime from CPU capabilities; NWB_SIMD=scalar in
// the environment (or set_active_isa) forces the reference path. The OU lane
// kernel is bit-identical across variants; the floating point reductions and
// GEMM agree to rounding.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace nwb::simd {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa) noexcept;

/// Best variant supported by this CPU and build.
Isa detected_isa() noexcept;
/// Variant used by the dispatched entry points.
Isa active_isa() noexcept;
/// Throws ValidationError when `isa` is not supported here.
void set_active_isa(Isa isa);

/// Restores the previous active variant on destruction.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

inline constexpr std::size_t kLanes = 4;

/// One exact OU step: xi <- rho * xi + scale * eta, eta ~ N(0, 1) per axis.
struct OuCoefficients {
  double rho = 0.0;
  double scale1 = 0.0;
  double scale2 = 0.0;
};

/// Four independent fibers advanced in lock-step. Structure of arrays.
struct alignas(32) OuLanes {
  std::uint64_t state[4][kLanes] = {};  // xoshiro256+ words, state[word][lane]
  double xi1[kLanes] = {};
  double xi2[kLanes] = {};

  /// Seeds lane `lane` from a 64-bit stream seed.
  void seed(std::size_t lane, std::uint64_t stream_seed) noexcept;
};

/// Advances all lanes `steps` times. Outputs are interleaved [step][lane],
/// i.e. each array holds steps * kLanes values.
void ou_advance(Isa isa, const OuCoefficients& c, OuLanes& lanes, std::size_t steps,
                double* xi1_out, double* xi2_out);

/// Raw standard normal pairs (Box-Muller) in the same [step][lane] layout.
void normal_pairs(Isa isa, OuLanes& lanes, std::size_t steps, double* z1_out, double* z2_out);

/// C = A * B (or C += A * B when `accumulate`), row-major with leading dimensions.
void gemm(Isa isa, std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);

double sum(Isa isa, std::span<const double> x) noexcept;
/// Sum of (x_i - center)^2.
double sum_sq_dev(Isa isa, std::span<const double> x, double center) noexcept;

// Dispatched shorthands.
inline void ou_advance(const OuCoefficients& c, OuLanes& lanes, std::size_t steps, double* xi1,
                       double* xi2) {
  ou_advance(active_isa(), c, lanes, steps, xi1, xi2);
}
inline void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  gemm(active_isa(), m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline double sum(std::span<const double> x) noexcept { return sum(active_isa(), x); }
inline double sum_sq_dev(std::span<const double> x, double center) noexcept {
  return sum_sq_dev(active_isa(), x, center);
}

namespace detail {
// Per-variant entry points; dispatch.cpp routes to these.
namespace scalar {
void ou_advance(const OuCoefficients&, OuLanes&, std::size_t, double*, double*);
void normal_pairs(OuLanes&, std::size_t, double*, double*);
void gemm(std::size_t, std::size_t, std::size_t, const double*, std::size_t, const double*,
          std::size_t, double*, std::size_t, bool);
double sum(const double*, std::size_t) noexcept;
double sum_sq_dev(const double*, std::size_t, double) noexcept;
}  // namespace scalar
namespace avx2 {
void ou_advance(const OuCoefficients&, OuLanes&, std::size_t, double*, double*);
void normal_pairs(OuLanes&, std::size_t, double*, double*);
void gemm(std::size_t, std::size_t, std::size_t, const double*, std::size_t, const double*,
          std::size_t, double*, std::size_t, bool);
double sum(const double*, std::size_t) noexcept;
double sum_sq_dev(const double*, std::size_t, double) noexcept;
}  // namespace avx2
}  // namespace detail

}  // namespace nwb::simd
