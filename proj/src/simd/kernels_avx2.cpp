// AVX2 + FMA variants. This file is compiled with -mavx2 -mfma and only
// reached through runtime dispatch.

#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "nwb/simd/fastmath.hpp"
#include "nwb/simd/kernels.hpp"

namespace nwb::simd::detail::avx2 {

namespace {

namespace fm = fastmath;

struct Xoshiro4 {
  __m256i s0, s1, s2, s3;

  explicit Xoshiro4(const OuLanes& l)
      : s0(_mm256_load_si256(reinterpret_cast<const __m256i*>(l.state[0]))),
        s1(_mm256_load_si256(reinterpret_cast<const __m256i*>(l.state[1]))),
        s2(_mm256_load_si256(reinterpret_cast<const __m256i*>(l.state[2]))),
        s3(_mm256_load_si256(reinterpret_cast<const __m256i*>(l.state[3]))) {}

  void store(OuLanes& l) const {
    _mm256_store_si256(reinterpret_cast<__m256i*>(l.state[0]), s0);
    _mm256_store_si256(reinterpret_cast<__m256i*>(l.state[1]), s1);
    _mm256_store_si256(reinterpret_cast<__m256i*>(l.state[2]), s2);
    _mm256_store_si256(reinterpret_cast<__m256i*>(l.state[3]), s3);
  }

  __m256i next() {
    const __m256i result = _mm256_add_epi64(s0, s3);
    const __m256i t = _mm256_slli_epi64(s1, 17);
    s2 = _mm256_xor_si256(s2, s0);
    s3 = _mm256_xor_si256(s3, s1);
    s1 = _mm256_xor_si256(s1, s2);
    s0 = _mm256_xor_si256(s0, s3);
    s2 = _mm256_xor_si256(s2, t);
    s3 = _mm256_or_si256(_mm256_slli_epi64(s3, 45), _mm256_srli_epi64(s3, 19));
    return result;
  }
};

// Exact conversion of integers below 2^52 to double.
inline __m256d small_u64_to_pd(__m256i x) {
  const __m256i magic_bits = _mm256_set1_epi64x(0x4330000000000000ll);
  const __m256d magic = _mm256_castsi256_pd(magic_bits);
  return _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(x, magic_bits)), magic);
}

inline __m256d uniform_open0(__m256i r) {
  const __m256d v = small_u64_to_pd(_mm256_srli_epi64(r, 12));
  return _mm256_sub_pd(_mm256_set1_pd(1.0), _mm256_mul_pd(v, _mm256_set1_pd(0x1p-52)));
}

inline __m256d uniform_open1(__m256i r) {
  const __m256d v = small_u64_to_pd(_mm256_srli_epi64(r, 12));
  return _mm256_mul_pd(v, _mm256_set1_pd(0x1p-52));
}

inline __m256d log_pd(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i expo = _mm256_and_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x7FF));
  __m256d e = _mm256_sub_pd(small_u64_to_pd(expo), _mm256_set1_pd(1023.0));
  __m256d m = _mm256_castsi256_pd(
      _mm256_or_si256(_mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFll)),
                      _mm256_set1_epi64x(0x3FF0000000000000ll)));
  const __m256d big = _mm256_cmp_pd(m, _mm256_set1_pd(fm::kSqrt2), _CMP_GT_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), big);
  e = _mm256_blendv_pd(e, _mm256_add_pd(e, _mm256_set1_pd(1.0)), big);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d s = _mm256_div_pd(_mm256_sub_pd(m, one), _mm256_add_pd(m, one));
  const __m256d s2 = _mm256_mul_pd(s, s);
  __m256d p = _mm256_set1_pd(fm::kLogCoeff[fm::kLogTerms - 1]);
  for (int k = fm::kLogTerms - 2; k >= 0; --k)
    p = _mm256_add_pd(_mm256_mul_pd(p, s2), _mm256_set1_pd(fm::kLogCoeff[k]));
  return _mm256_add_pd(_mm256_mul_pd(e, _mm256_set1_pd(fm::kLn2)),
                       _mm256_mul_pd(_mm256_add_pd(s, s), p));
}

inline void sincos_2pi_pd(__m256d u, __m256d& sin_out, __m256d& cos_out) {
  const __m256d t = _mm256_mul_pd(u, _mm256_set1_pd(4.0));
  const __m256d q = _mm256_floor_pd(t);
  const __m256d y = _mm256_mul_pd(_mm256_sub_pd(t, q), _mm256_set1_pd(fm::kHalfPi));
  const __m256d y2 = _mm256_mul_pd(y, y);
  __m256d ps = _mm256_set1_pd(fm::kSinCoeff[fm::kSinTerms - 1]);
  for (int k = fm::kSinTerms - 2; k >= 0; --k)
    ps = _mm256_add_pd(_mm256_mul_pd(ps, y2), _mm256_set1_pd(fm::kSinCoeff[k]));
  __m256d pc = _mm256_set1_pd(fm::kCosCoeff[fm::kCosTerms - 1]);
  for (int k = fm::kCosTerms - 2; k >= 0; --k)
    pc = _mm256_add_pd(_mm256_mul_pd(pc, y2), _mm256_set1_pd(fm::kCosCoeff[k]));
  const __m256d s = _mm256_mul_pd(y, ps);
  const __m256d c = pc;
  const __m256d zero = _mm256_setzero_pd();
  const __m256d ns = _mm256_sub_pd(zero, s);
  const __m256d nc = _mm256_sub_pd(zero, c);
  const __m256d q1 = _mm256_cmp_pd(q, _mm256_set1_pd(1.0), _CMP_EQ_OQ);
  const __m256d q2 = _mm256_cmp_pd(q, _mm256_set1_pd(2.0), _CMP_EQ_OQ);
  const __m256d q3 = _mm256_cmp_pd(q, _mm256_set1_pd(3.0), _CMP_EQ_OQ);
  __m256d so = s, co = c;
  so = _mm256_blendv_pd(so, c, q1);
  co = _mm256_blendv_pd(co, ns, q1);
  so = _mm256_blendv_pd(so, ns, q2);
  co = _mm256_blendv_pd(co, nc, q2);
  so = _mm256_blendv_pd(so, nc, q3);
  co = _mm256_blendv_pd(co, s, q3);
  sin_out = so;
  cos_out = co;
}

inline void box_muller(Xoshiro4& g, __m256d& z1, __m256d& z2) {
  const __m256d u1 = uniform_open0(g.next());
  const __m256d u2 = uniform_open1(g.next());
  const __m256d r = _mm256_sqrt_pd(_mm256_mul_pd(_mm256_set1_pd(-2.0), log_pd(u1)));
  __m256d s, c;
  sincos_2pi_pd(u2, s, c);
  z1 = _mm256_mul_pd(r, c);
  z2 = _mm256_mul_pd(r, s);
}

}  // namespace

void normal_pairs(OuLanes& lanes, std::size_t steps, double* z1_out, double* z2_out) {
  Xoshiro4 g(lanes);
  for (std::size_t k = 0; k < steps; ++k) {
    __m256d z1, z2;
    box_muller(g, z1, z2);
    _mm256_storeu_pd(z1_out + k * kLanes, z1);
    _mm256_storeu_pd(z2_out + k * kLanes, z2);
  }
  g.store(lanes);
}

void ou_advance(const OuCoefficients& c, OuLanes& lanes, std::size_t steps, double* xi1_out,
                double* xi2_out) {
  Xoshiro4 g(lanes);
  __m256d x1 = _mm256_load_pd(lanes.xi1);
  __m256d x2 = _mm256_load_pd(lanes.xi2);
  const __m256d rho = _mm256_set1_pd(c.rho);
  const __m256d a1 = _mm256_set1_pd(c.scale1);
  const __m256d a2 = _mm256_set1_pd(c.scale2);
  for (std::size_t k = 0; k < steps; ++k) {
    __m256d z1, z2;
    box_muller(g, z1, z2);
    x1 = _mm256_add_pd(_mm256_mul_pd(rho, x1), _mm256_mul_pd(a1, z1));
    x2 = _mm256_add_pd(_mm256_mul_pd(rho, x2), _mm256_mul_pd(a2, z2));
    _mm256_storeu_pd(xi1_out + k * kLanes, x1);
    _mm256_storeu_pd(xi2_out + k * kLanes, x2);
  }
  _mm256_store_pd(lanes.xi1, x1);
  _mm256_store_pd(lanes.xi2, x2);
  g.store(lanes);
}

namespace {

constexpr std::size_t kPanel = 8;
constexpr std::size_t kRowBlock = 64;

template <int R>
inline void micro_kernel(const double* a, std::size_t lda, const double* panel, std::size_t k,
                         double* c, std::size_t ldc, std::size_t ncols, bool accumulate) {
  __m256d lo[R], hi[R];
  for (int r = 0; r < R; ++r) lo[r] = hi[r] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(panel + p * kPanel);
    const __m256d b1 = _mm256_loadu_pd(panel + p * kPanel + 4);
    for (int r = 0; r < R; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
      lo[r] = _mm256_fmadd_pd(av, b0, lo[r]);
      hi[r] = _mm256_fmadd_pd(av, b1, hi[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    double* cr = c + r * ldc;
    if (ncols == kPanel) {
      if (accumulate) {
        lo[r] = _mm256_add_pd(lo[r], _mm256_loadu_pd(cr));
        hi[r] = _mm256_add_pd(hi[r], _mm256_loadu_pd(cr + 4));
      }
      _mm256_storeu_pd(cr, lo[r]);
      _mm256_storeu_pd(cr + 4, hi[r]);
    } else {
      alignas(32) double tmp[kPanel];
      _mm256_store_pd(tmp, lo[r]);
      _mm256_store_pd(tmp + 4, hi[r]);
      for (std::size_t j = 0; j < ncols; ++j) cr[j] = accumulate ? cr[j] + tmp[j] : tmp[j];
    }
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    return;
  }
  const std::size_t panels = (n + kPanel - 1) / kPanel;
  thread_local std::vector<double> packed;
  packed.assign(panels * k * kPanel, 0.0);
  for (std::size_t jp = 0; jp < panels; ++jp) {
    const std::size_t j0 = jp * kPanel;
    const std::size_t w = std::min(kPanel, n - j0);
    double* dst = packed.data() + jp * k * kPanel;
    for (std::size_t p = 0; p < k; ++p) std::memcpy(dst + p * kPanel, b + p * ldb + j0, w * sizeof(double));
  }
  for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
    const std::size_t i1 = std::min(m, i0 + kRowBlock);
    for (std::size_t jp = 0; jp < panels; ++jp) {
      const std::size_t j0 = jp * kPanel;
      const std::size_t w = std::min(kPanel, n - j0);
      const double* panel = packed.data() + jp * k * kPanel;
      std::size_t i = i0;
      for (; i + 4 <= i1; i += 4)
        micro_kernel<4>(a + i * lda, lda, panel, k, c + i * ldc + j0, ldc, w, accumulate);
      for (; i < i1; ++i)
        micro_kernel<1>(a + i * lda, lda, panel, k, c + i * ldc + j0, ldc, w, accumulate);
    }
  }
}

namespace {
inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}
}  // namespace

double sum(const double* x, std::size_t n) noexcept {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i];
  return s;
}

double sum_sq_dev(const double* x, std::size_t n, double center) noexcept {
  const __m256d c = _mm256_set1_pd(center);
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(x + i), c);
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(x + i + 4), c);
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = x[i] - center;
    s += d * d;
  }
  return s;
}

}  // namespace nwb::simd::detail::avx2
