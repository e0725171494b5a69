#pragma once

// Counter-based seed derivation and a small, portable generator.
//
// Every random stream in the workbench is addressed by a path of integers
// (campaign seed, setting, replicate, fiber, ...). The stream seed is a pure
// function of that path, so results never depend on scheduling.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <utility>

namespace nwb::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed of the stream addressed by `base` followed by `path`.
inline constexpr std::uint64_t derive(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(base ^ 0x6A09E667F3BCC909ull);
  for (auto p : path) h = splitmix64(h ^ splitmix64(p + 0x3C6EF372FE94F82Bull));
  return h;
}

inline constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

/// xoshiro256+ state seeded from a single 64-bit value through splitmix64.
inline std::array<std::uint64_t, 4> xoshiro_state(std::uint64_t seed) noexcept {
  std::array<std::uint64_t, 4> s{};
  std::uint64_t x = seed;
  for (auto& w : s) {
    w = splitmix64(x);
    x += 0x9E3779B97F4A7C15ull;
  }
  if ((s[0] | s[1] | s[2] | s[3]) == 0) s[0] = 1;
  return s;
}

inline std::uint64_t xoshiro_next(std::array<std::uint64_t, 4>& s) noexcept {
  const std::uint64_t result = s[0] + s[3];
  const std::uint64_t t = s[1] << 17;
  s[2] ^= s[0];
  s[3] ^= s[1];
  s[1] ^= s[2];
  s[0] ^= s[3];
  s[2] ^= t;
  s[3] = rotl(s[3], 45);
  return result;
}

/// UniformRandomBitGenerator over xoshiro256+, usable with <algorithm>.
class Engine {
 public:
  using result_type = std::uint64_t;

  explicit Engine(std::uint64_t seed) noexcept : s_(xoshiro_state(seed)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
  result_type operator()() noexcept { return xoshiro_next(s_); }

  /// Uniform double in [0, 1) with 52 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 12) * 0x1p-52; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do r = (*this)(); while (r >= limit);
    return r % n;
  }

  template <class T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_;
};

}  // namespace nwb::rng
