#pragma once

// Stochastic fiber laydown.
//
// Each spin position deposits one fiber. Relative to its spin position the
// deposition offset xi follows a stationary 2D Ornstein-Uhlenbeck process in
// arc length, discretized exactly:
//
//   xi_{k+1} = rho * xi_k + sqrt(1 - rho^2) * (sigma1 * eta1, sigma2 * eta2)
//   rho      = exp(-A * ds / reference_length)
//
// while the belt carries the deposition point v * ds further in machine
// direction per step. A -> 0 gives straight lines, large A white noise.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nwb/params.hpp"
#include "nwb/simd/kernels.hpp"

namespace nwb::laydown {

struct Point {
  double machine_mm = 0.0;
  double cross_mm = 0.0;

  bool operator==(const Point&) const = default;
};

struct FiberCurve {
  std::vector<Point> points;
  double point_mass = 0.0;

  double mass() const noexcept { return point_mass * static_cast<double>(points.size()); }
  bool operator==(const FiberCurve&) const = default;
};

struct VirtualNonwoven {
  std::vector<FiberCurve> fibers;  // fibers without retained points are dropped
  SampleWindow window;
  ProcessParams params;
  std::uint64_t seed = 0;

  double total_mass() const noexcept;
  std::size_t point_count() const noexcept;
  bool operator==(const VirtualNonwoven&) const = default;
};

struct RunOptions {
  unsigned workers = 1;
  /// Called with the completed fraction in [0, 1], from worker threads.
  std::function<void(double)> progress;
};

/// OU step coefficients for the given parameters (A = 0 gives rho = 1).
simd::OuCoefficients ou_coefficients(const ProcessParams& params, const LaydownConfig& config);

/// Cross-direction spin positions whose fibers can reach the window.
std::vector<double> plan_spin_positions(const ProcessParams& params, const SampleWindow& window,
                                        const LaydownConfig& config = {});

/// Everything needed to generate one sample, derived from its inputs.
struct SamplePlan {
  ProcessParams params;
  SampleWindow window;
  LaydownConfig config;
  std::uint64_t seed = 0;
  std::vector<double> spin_positions;
  double machine_start = 0.0;  // machine offset of every fiber's first point
  double drift = 0.0;          // machine advance per step, v * ds
  std::size_t steps = 0;       // points per fiber minus one
  double point_mass = 0.0;
  simd::OuCoefficients step;   // stationary OU step
  simd::OuCoefficients start;  // draw from the stationary law

  std::size_t fiber_count() const noexcept { return spin_positions.size(); }
};

SamplePlan plan_sample(const ProcessParams& params, const SampleWindow& window, std::uint64_t seed,
                       const LaydownConfig& config = {});

/// Seed of fiber `index` within a sample.
std::uint64_t fiber_seed(std::uint64_t sample_seed, std::size_t index) noexcept;

/// Receives consecutive blocks of unclipped points of one fiber at a time.
class PointSink {
 public:
  virtual ~PointSink() = default;
  virtual void consume(std::size_t fiber, std::span<const double> machine_mm,
                       std::span<const double> cross_mm) = 0;
};

/// Generates every fiber of `plan`. Worker w feeds sinks[w]; a fiber's blocks
/// always reach one sink in order. Requires sinks.size() >= options.workers.
void generate(const SamplePlan& plan, const RunOptions& options, std::span<PointSink* const> sinks);

/// One fiber's full deposition trace (not clipped). belt_travel > 0.
FiberCurve simulate_fiber(const ProcessParams& params, double spin_position_mm, double belt_travel_mm,
                          std::uint64_t seed, const LaydownConfig& config = {},
                          double machine_start_mm = 0.0);

/// A full virtual sample with points clipped to the window.
VirtualNonwoven simulate_sample(const ProcessParams& params, const SampleWindow& window,
                                std::uint64_t seed, const LaydownConfig& config = {},
                                const RunOptions& options = {});

/// Retained mass per window area (mass units per mm^2).
double basis_weight(const VirtualNonwoven& nw);

}  // namespace nwb::laydown
