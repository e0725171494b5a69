#include <atomic>
#include <cstdlib>
#include <cstring>

#include "nwb/error.hpp"
#include "nwb/rng.hpp"
#include "nwb/simd/kernels.hpp"

namespace nwb::simd {

namespace {

Isa probe() noexcept {
#if defined(NWB_HAVE_AVX2)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
  return Isa::scalar;
}

Isa initial() noexcept {
  const Isa best = probe();
  if (const char* env = std::getenv("NWB_SIMD"); env && std::strcmp(env, "scalar") == 0)
    return Isa::scalar;
  return best;
}

std::atomic<Isa>& active() noexcept {
  static std::atomic<Isa> isa{initial()};
  return isa;
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::avx2: return "avx2";
    case Isa::scalar: break;
  }
  return "scalar";
}

Isa detected_isa() noexcept {
  static const Isa best = probe();
  return best;
}

Isa active_isa() noexcept { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2)
    throw ValidationError("AVX2 kernels are not available on this CPU or build", {"isa"});
  active().store(isa, std::memory_order_relaxed);
}

void OuLanes::seed(std::size_t lane, std::uint64_t stream_seed) noexcept {
  const auto s = rng::xoshiro_state(stream_seed);
  for (std::size_t w = 0; w < 4; ++w) state[w][lane] = s[w];
  xi1[lane] = 0.0;
  xi2[lane] = 0.0;
}

#if defined(NWB_HAVE_AVX2)
#define NWB_DISPATCH(fn, ...)                                             \
  (isa == Isa::avx2 ? detail::avx2::fn(__VA_ARGS__) : detail::scalar::fn(__VA_ARGS__))
#else
#define NWB_DISPATCH(fn, ...) ((void)isa, detail::scalar::fn(__VA_ARGS__))
#endif

void ou_advance(Isa isa, const OuCoefficients& c, OuLanes& lanes, std::size_t steps,
                double* xi1_out, double* xi2_out) {
  NWB_DISPATCH(ou_advance, c, lanes, steps, xi1_out, xi2_out);
}

void normal_pairs(Isa isa, OuLanes& lanes, std::size_t steps, double* z1_out, double* z2_out) {
  NWB_DISPATCH(normal_pairs, lanes, steps, z1_out, z2_out);
}

void gemm(Isa isa, std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  NWB_DISPATCH(gemm, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

double sum(Isa isa, std::span<const double> x) noexcept {
  return NWB_DISPATCH(sum, x.data(), x.size());
}

double sum_sq_dev(Isa isa, std::span<const double> x, double center) noexcept {
  return NWB_DISPATCH(sum_sq_dev, x.data(), x.size(), center);
}

#undef NWB_DISPATCH

}  // namespace nwb::simd
