#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "nwb/rng.hpp"
#include "nwb/simd/fastmath.hpp"
#include "nwb/simd/kernels.hpp"

using namespace nwb;
using simd::Isa;

namespace {

bool have_avx2() { return simd::detected_isa() == Isa::avx2; }

std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  rng::Engine e(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = e.uniform(lo, hi);
  return v;
}

// Reference xoshiro256+ / Box-Muller written directly against the rng header.
void reference_normals(std::uint64_t seed, std::size_t steps, std::vector<double>& z1, std::vector<double>& z2) {
  auto s = rng::xoshiro_state(seed);
  for (std::size_t k = 0; k < steps; ++k) {
    const double u1 = simd::fastmath::uniform_open0(rng::xoshiro_next(s));
    const double u2 = simd::fastmath::uniform_open1(rng::xoshiro_next(s));
    const double r = std::sqrt(-2.0 * simd::fastmath::log(u1));
    double sn, cs;
    simd::fastmath::sincos_2pi(u2, sn, cs);
    z1.push_back(r * cs);
    z2.push_back(r * sn);
  }
}

}  // namespace

TEST_CASE("fastmath log matches std::log") {
  rng::Engine e(11);
  for (int i = 0; i < 200000; ++i) {
    const double x = simd::fastmath::uniform_open0(e());
    CHECK(std::fabs(simd::fastmath::log(x) - std::log(x)) <= 1e-14 * std::max(1.0, std::fabs(std::log(x))));
  }
  CHECK(simd::fastmath::log(1.0) == 0.0);
  CHECK(simd::fastmath::log(0x1p-52) == doctest::Approx(-52.0 * std::numbers::ln2).epsilon(1e-15));
}

TEST_CASE("fastmath sincos matches std on [0, 1)") {
  rng::Engine e(12);
  for (int i = 0; i < 200000; ++i) {
    const double u = simd::fastmath::uniform_open1(e());
    double s, c;
    simd::fastmath::sincos_2pi(u, s, c);
    CHECK(std::fabs(s - std::sin(2.0 * std::numbers::pi * u)) <= 1e-14);
    CHECK(std::fabs(c - std::cos(2.0 * std::numbers::pi * u)) <= 1e-14);
  }
  double s, c;
  simd::fastmath::sincos_2pi(0.25, s, c);
  CHECK(s == 1.0);
  CHECK(c == 0.0);
}

TEST_CASE("scalar normal pairs follow the reference generator") {
  simd::OuLanes lanes;
  for (std::size_t l = 0; l < simd::kLanes; ++l) lanes.seed(l, 100 + l);
  const std::size_t steps = 257;
  std::vector<double> z1(steps * simd::kLanes), z2(steps * simd::kLanes);
  simd::normal_pairs(Isa::scalar, lanes, steps, z1.data(), z2.data());
  // Lane seeding is xoshiro_state of the stream seed.
  for (std::size_t l = 0; l < simd::kLanes; ++l) {
    std::vector<double> r1, r2;
    reference_normals(100 + l, steps, r1, r2);
    for (std::size_t k = 0; k < steps; ++k) {
      REQUIRE(z1[k * simd::kLanes + l] == r1[k]);
      REQUIRE(z2[k * simd::kLanes + l] == r2[k]);
    }
  }
}

TEST_CASE("OU lanes are bit-identical across variants") {
  if (!have_avx2()) return;
  for (std::uint64_t seed : {1ull, 42ull, 0xDEADBEEFull}) {
    const simd::OuCoefficients c{0.97, 0.3, 1.7};
    simd::OuLanes a, b;
    for (std::size_t l = 0; l < simd::kLanes; ++l) {
      a.seed(l, rng::derive(seed, {l}));
      b.seed(l, rng::derive(seed, {l}));
    }
    // Several calls with odd step counts exercise state carry-over.
    for (std::size_t steps : {1u, 3u, 1000u, 17u}) {
      std::vector<double> a1(steps * 4), a2(steps * 4), b1(steps * 4), b2(steps * 4);
      simd::ou_advance(Isa::scalar, c, a, steps, a1.data(), a2.data());
      simd::ou_advance(Isa::avx2, c, b, steps, b1.data(), b2.data());
      CHECK(a1 == b1);
      CHECK(a2 == b2);
    }
  }
}

TEST_CASE("normal pairs are bit-identical across variants") {
  if (!have_avx2()) return;
  simd::OuLanes a, b;
  for (std::size_t l = 0; l < simd::kLanes; ++l) {
    a.seed(l, 7 * l + 1);
    b.seed(l, 7 * l + 1);
  }
  std::vector<double> a1(4000), a2(4000), b1(4000), b2(4000);
  simd::normal_pairs(Isa::scalar, a, 1000, a1.data(), a2.data());
  simd::normal_pairs(Isa::avx2, b, 1000, b1.data(), b2.data());
  CHECK(a1 == b1);
  CHECK(a2 == b2);
}

TEST_CASE("normal pairs have unit variance") {
  simd::OuLanes lanes;
  for (std::size_t l = 0; l < simd::kLanes; ++l) lanes.seed(l, l + 5);
  const std::size_t steps = 250000;
  std::vector<double> z1(steps * 4), z2(steps * 4);
  simd::normal_pairs(Isa::scalar, lanes, steps, z1.data(), z2.data());
  double m = 0, v = 0;
  for (double z : z1) m += z;
  m /= static_cast<double>(z1.size());
  for (double z : z1) v += (z - m) * (z - m);
  v /= static_cast<double>(z1.size());
  CHECK(std::fabs(m) < 0.005);
  CHECK(v == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("gemm variants agree with a naive product") {
  const std::array<std::array<int, 3>, 5> shapes{{{1, 1, 1}, {5, 3, 7}, {64, 64, 64}, {130, 17, 33}, {3, 1024, 5}}};
  for (auto [m, n, k] : shapes) {
    const auto a = random_vector(static_cast<std::size_t>(m * k), 1);
    const auto b = random_vector(static_cast<std::size_t>(k * n), 2);
    std::vector<double> ref(static_cast<std::size_t>(m * n), 0.0);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        long double s = 0;
        for (int p = 0; p < k; ++p) s += static_cast<long double>(a[i * k + p]) * b[p * n + j];
        ref[i * n + j] = static_cast<double>(s);
      }
    for (Isa isa : {Isa::scalar, Isa::avx2}) {
      if (isa == Isa::avx2 && !have_avx2()) continue;
      std::vector<double> c(ref.size(), 0.5);
      simd::gemm(isa, m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12).scale(k));
      std::vector<double> acc(ref.size(), 0.5);
      simd::gemm(isa, m, n, k, a.data(), k, b.data(), n, acc.data(), n, true);
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(acc[i] == doctest::Approx(ref[i] + 0.5).epsilon(1e-12).scale(k));
    }
  }
}

TEST_CASE("gemm honours leading dimensions") {
  // A is a 2x2 view into a 2x3 buffer, C a 2x2 view into a 2x4 buffer.
  const double a[] = {1, 2, 99, 3, 4, 99};
  const double b[] = {5, 6, 7, 8};
  for (Isa isa : {Isa::scalar, Isa::avx2}) {
    if (isa == Isa::avx2 && !have_avx2()) continue;
    double c[8] = {-1, -1, -1, -1, -1, -1, -1, -1};
    simd::gemm(isa, 2, 2, 2, a, 3, b, 2, c, 4, false);
    CHECK(c[0] == 19);
    CHECK(c[1] == 22);
    CHECK(c[2] == -1);
    CHECK(c[4] == 43);
    CHECK(c[5] == 50);
  }
}

TEST_CASE("reductions agree across variants") {
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 1000u, 100003u}) {
    const auto x = random_vector(n, n + 3, 0.0, 10.0);
    long double s = 0;
    for (double v : x) s += v;
    const double mean = n ? static_cast<double>(s / n) : 0.0;
    long double q = 0;
    for (double v : x) q += (static_cast<long double>(v) - mean) * (v - mean);
    for (Isa isa : {Isa::scalar, Isa::avx2}) {
      if (isa == Isa::avx2 && !have_avx2()) continue;
      CHECK(simd::sum(isa, x) == doctest::Approx(static_cast<double>(s)).epsilon(1e-12));
      CHECK(simd::sum_sq_dev(isa, x, mean) == doctest::Approx(static_cast<double>(q)).epsilon(1e-12));
    }
  }
}

TEST_CASE("isa selection") {
  CHECK(simd::to_string(Isa::scalar) == "scalar");
  {
    simd::ScopedIsa guard(Isa::scalar);
    CHECK(simd::active_isa() == Isa::scalar);
  }
  if (!have_avx2()) CHECK_THROWS(simd::set_active_isa(Isa::avx2));
}
