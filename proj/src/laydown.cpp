#include "nwb/laydown.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>

#include "nwb/error.hpp"
#include "nwb/parallel.hpp"
#include "nwb/rng.hpp"

namespace nwb::laydown {

namespace {

constexpr std::size_t kBlock = 1024;
constexpr std::size_t kMaxStepsPerFiber = std::size_t{1} << 31;

void require_params(const ProcessParams& p) {
  // Range checks are the caller's business (unchecked params are allowed);
  // the generator itself only needs a well-defined process.
  (void)ProcessParams::unchecked(p.sigma1_mm, p.sigma2_mm, p.noise_amplitude, p.speed_ratio,
                                 p.spin_density_per_m, p.step_size_m);
}

// Fills the per-fiber stepping fields of `plan` for a given belt travel.
void set_fiber_geometry(SamplePlan& plan, double belt_travel) {
  const double ds = plan.params.step_mm();
  plan.drift = plan.params.speed_ratio * ds;
  const double steps = std::ceil(belt_travel / plan.drift);
  if (!(steps < static_cast<double>(kMaxStepsPerFiber)))
    throw ValidationError("fiber would need too many discretization steps", {"v", "step_size_m"});
  plan.steps = static_cast<std::size_t>(steps);
  while (static_cast<double>(plan.steps) * plan.drift < belt_travel) ++plan.steps;
  plan.point_mass = plan.config.fiber_mass_per_length * ds;
  plan.step = ou_coefficients(plan.params, plan.config);
  plan.start = {0.0, plan.params.sigma1_mm, plan.params.sigma2_mm};
}

}  // namespace

double VirtualNonwoven::total_mass() const noexcept {
  double m = 0.0;
  for (const auto& f : fibers) m += f.mass();
  return m;
}

std::size_t VirtualNonwoven::point_count() const noexcept {
  std::size_t n = 0;
  for (const auto& f : fibers) n += f.points.size();
  return n;
}

simd::OuCoefficients ou_coefficients(const ProcessParams& params, const LaydownConfig& config) {
  const double x = params.noise_amplitude * params.step_mm() / config.reference_length_mm;
  const double rho = std::exp(-x);
  const double innovation = std::sqrt(-std::expm1(-2.0 * x));
  return {rho, innovation * params.sigma1_mm, innovation * params.sigma2_mm};
}

std::vector<double> plan_spin_positions(const ProcessParams& params, const SampleWindow& window,
                                        const LaydownConfig& config) {
  require_params(params);
  config.validate();
  if (!(window.cross_extent_mm >= 0.0) || !(window.machine_extent_mm >= 0.0))
    throw ValidationError("window extents must be non-negative", {"window"});
  const double margin = config.margin_sigmas * params.sigma2_mm;
  const double lo = -margin;
  const double hi = window.cross_extent_mm + margin;
  const double spacing = params.spin_spacing_mm();
  // span * n / 1000 avoids the rounding of dividing by a non-representable spacing.
  const double intervals = (hi - lo) * params.spin_density_per_m / 1000.0;
  const auto count = static_cast<std::size_t>(std::floor(intervals + 1e-9)) + 1;
  std::vector<double> pos(count);
  for (std::size_t i = 0; i < count; ++i) pos[i] = lo + static_cast<double>(i) * spacing;
  return pos;
}

std::uint64_t fiber_seed(std::uint64_t sample_seed, std::size_t index) noexcept {
  return rng::derive(sample_seed, {0xF1BE5ull, index});
}

SamplePlan plan_sample(const ProcessParams& params, const SampleWindow& window, std::uint64_t seed,
                       const LaydownConfig& config) {
  window.validate();
  SamplePlan plan;
  plan.params = params;
  plan.window = window;
  plan.config = config;
  plan.seed = seed;
  plan.spin_positions = plan_spin_positions(params, window, config);
  const double margin = config.margin_sigmas * params.sigma1_mm;
  const double belt_travel = window.machine_extent_mm + 2.0 * margin;
  plan.machine_start = -margin;
  set_fiber_geometry(plan, belt_travel);
  return plan;
}

namespace {

// Generates the fibers [first, first + active) of a lane group.
void generate_group(const SamplePlan& plan, std::size_t first, std::size_t active,
                    const std::uint64_t* seeds, PointSink& sink) {
  simd::OuLanes lanes;
  for (std::size_t l = 0; l < simd::kLanes; ++l) lanes.seed(l, l < active ? seeds[l] : 0);

  alignas(32) double xi1[kBlock * simd::kLanes];
  alignas(32) double xi2[kBlock * simd::kLanes];
  std::vector<double> machine(kBlock), cross(kBlock);

  const std::size_t total = plan.steps + 1;
  std::size_t k0 = 0;
  while (k0 < total) {
    const std::size_t n = std::min(kBlock, total - k0);
    if (k0 == 0) {
      // Point 0 is drawn from the stationary law.
      simd::ou_advance(plan.start, lanes, 1, xi1, xi2);
      if (n > 1) simd::ou_advance(plan.step, lanes, n - 1, xi1 + simd::kLanes, xi2 + simd::kLanes);
    } else {
      simd::ou_advance(plan.step, lanes, n, xi1, xi2);
    }
    for (std::size_t l = 0; l < active; ++l) {
      const double spin = plan.spin_positions[first + l];
      for (std::size_t k = 0; k < n; ++k) {
        machine[k] = (plan.machine_start + static_cast<double>(k0 + k) * plan.drift) +
                     xi1[k * simd::kLanes + l];
        cross[k] = spin + xi2[k * simd::kLanes + l];
      }
      sink.consume(first + l, std::span<const double>(machine.data(), n),
                   std::span<const double>(cross.data(), n));
    }
    k0 += n;
  }
}

class CollectSink final : public PointSink {
 public:
  CollectSink(std::vector<FiberCurve>& fibers, const SampleWindow& window) : fibers_(fibers), window_(window) {}

  void consume(std::size_t fiber, std::span<const double> machine, std::span<const double> cross) override {
    auto& pts = fibers_[fiber].points;
    for (std::size_t k = 0; k < machine.size(); ++k) {
      const double m = machine[k], c = cross[k];
      if (m >= 0.0 && m <= window_.machine_extent_mm && c >= 0.0 && c <= window_.cross_extent_mm)
        pts.push_back({m, c});
    }
  }

 private:
  std::vector<FiberCurve>& fibers_;
  SampleWindow window_;
};

class TraceSink final : public PointSink {
 public:
  explicit TraceSink(FiberCurve& out) : out_(out) {}
  void consume(std::size_t, std::span<const double> machine, std::span<const double> cross) override {
    for (std::size_t k = 0; k < machine.size(); ++k) out_.points.push_back({machine[k], cross[k]});
  }

 private:
  FiberCurve& out_;
};

}  // namespace

void generate(const SamplePlan& plan, const RunOptions& options, std::span<PointSink* const> sinks) {
  const unsigned workers = std::max(1u, options.workers);
  if (sinks.size() < workers) throw ValidationError("need one point sink per worker", {"workers"});
  const std::size_t fibers = plan.fiber_count();
  const std::size_t groups = (fibers + simd::kLanes - 1) / simd::kLanes;
  std::atomic<std::size_t> done{0};
  parallel_for(groups, workers, [&](std::size_t g, unsigned w) {
    const std::size_t first = g * simd::kLanes;
    const std::size_t active = std::min(simd::kLanes, fibers - first);
    std::uint64_t seeds[simd::kLanes] = {};
    for (std::size_t l = 0; l < active; ++l) seeds[l] = fiber_seed(plan.seed, first + l);
    generate_group(plan, first, active, seeds, *sinks[w]);
    const std::size_t finished = done.fetch_add(1) + 1;
    if (options.progress) options.progress(static_cast<double>(finished) / static_cast<double>(groups));
  });
}

FiberCurve simulate_fiber(const ProcessParams& params, double spin_position_mm, double belt_travel_mm,
                          std::uint64_t seed, const LaydownConfig& config, double machine_start_mm) {
  require_params(params);
  config.validate();
  if (!(belt_travel_mm > 0.0) || !std::isfinite(belt_travel_mm))
    throw ValidationError("belt travel must be positive", {"belt_travel"});
  SamplePlan plan;
  plan.params = params;
  plan.config = config;
  plan.spin_positions = {spin_position_mm};
  plan.machine_start = machine_start_mm;
  set_fiber_geometry(plan, belt_travel_mm);

  FiberCurve curve;
  curve.point_mass = plan.point_mass;
  curve.points.reserve(plan.steps + 1);
  TraceSink sink(curve);
  generate_group(plan, 0, 1, &seed, sink);
  return curve;
}

VirtualNonwoven simulate_sample(const ProcessParams& params, const SampleWindow& window,
                                std::uint64_t seed, const LaydownConfig& config,
                                const RunOptions& options) {
  const SamplePlan plan = plan_sample(params, window, seed, config);
  std::vector<FiberCurve> fibers(plan.fiber_count());
  for (auto& f : fibers) f.point_mass = plan.point_mass;
  const unsigned workers = std::max(1u, options.workers);
  std::vector<std::unique_ptr<PointSink>> owned;
  std::vector<PointSink*> sinks;
  for (unsigned w = 0; w < workers; ++w) {
    owned.push_back(std::make_unique<CollectSink>(fibers, window));
    sinks.push_back(owned.back().get());
  }
  generate(plan, options, sinks);

  VirtualNonwoven nw;
  nw.window = window;
  nw.params = params;
  nw.seed = seed;
  for (auto& f : fibers)
    if (!f.points.empty()) nw.fibers.push_back(std::move(f));
  return nw;
}

double basis_weight(const VirtualNonwoven& nw) {
  const double area = nw.window.area_mm2();
  if (!(area > 0.0)) throw ValidationError("basis weight needs a window with positive area", {"window"});
  return nw.total_mass() / area;
}

}  // namespace nwb::laydown
