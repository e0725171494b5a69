#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nwb {

/// Number of process inputs fed to the surrogates (sigma1, sigma2, A, v, n).
inline constexpr std::size_t kNumFeatures = 5;

/// Canonical feature names, also used as CSV / JSON keys.
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "sigma1_mm", "sigma2_mm", "A", "v", "n_per_m"};

/// Default discretization step along the fiber, in meters.
inline constexpr double kDefaultStepSizeM = 2.5e-5;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  double width() const noexcept { return hi - lo; }
};

/// Closed per-parameter intervals for the five inputs.
struct ParamRanges {
  std::array<Interval, kNumFeatures> bounds{{
      {1.0, 50.0},      // sigma1 [mm]
      {1.0, 50.0},      // sigma2 [mm]
      {1.0, 50.0},      // noise amplitude A
      {0.01, 0.25},     // speed ratio v
      {200.0, 10000.0}  // spin positions per meter
  }};

  /// Throws ValidationError when any interval has lo > hi or is not finite.
  void validate() const;

  const Interval& operator[](std::size_t i) const { return bounds[i]; }
  Interval& operator[](std::size_t i) { return bounds[i]; }
};

/// A point of the process parameter space.
///
/// Values outside the default ranges are rejected by checked(); unchecked()
/// skips range checks but still requires finite values and a positive step.
struct ProcessParams {
  double sigma1_mm = 10.0;
  double sigma2_mm = 10.0;
  double noise_amplitude = 10.0;
  double speed_ratio = 0.1;
  double spin_density_per_m = 1000.0;
  std::optional<double> step_size_m;  // d_s; kDefaultStepSizeM when absent

  static ProcessParams checked(double sigma1_mm, double sigma2_mm, double a, double v,
                               double n_per_m, std::optional<double> step_size_m = {});
  static ProcessParams unchecked(double sigma1_mm, double sigma2_mm, double a, double v,
                                 double n_per_m, std::optional<double> step_size_m = {});
  static ProcessParams from_features(const std::array<double, kNumFeatures>& f,
                                     bool check_ranges = true);

  /// Names of fields outside `ranges` (or otherwise invalid).
  std::vector<std::string> violations(const ParamRanges& ranges = {}) const;

  double step_mm() const noexcept { return step_size_m.value_or(kDefaultStepSizeM) * 1000.0; }
  double spin_spacing_mm() const noexcept { return 1000.0 / spin_density_per_m; }

  std::array<double, kNumFeatures> features() const noexcept {
    return {sigma1_mm, sigma2_mm, noise_amplitude, speed_ratio, spin_density_per_m};
  }

  bool operator==(const ProcessParams&) const = default;
};

/// Rectangular sample window on the belt: machine direction x cross direction.
struct SampleWindow {
  double machine_extent_mm = 50.0;
  double cross_extent_mm = 50.0;

  static SampleWindow make(double machine_mm, double cross_mm);
  /// Parses "MxC" in millimetres, e.g. "500x250".
  static SampleWindow parse(std::string_view text);

  void validate() const;
  double area_mm2() const noexcept { return machine_extent_mm * cross_extent_mm; }
  std::string to_string() const;

  bool operator==(const SampleWindow&) const = default;
};

/// Constants the laydown model needs but the process parameters do not fix.
struct LaydownConfig {
  double reference_length_mm = 1.0e4;  // converts A into an OU rate per unit arc length
  double fiber_mass_per_length = 1.0;  // arbitrary mass units per mm
  double margin_sigmas = 3.0;          // simulated margin around the window, in sigmas

  void validate() const;
};

}  // namespace nwb
