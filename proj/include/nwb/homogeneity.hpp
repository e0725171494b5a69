#pragma once

// Mass rasterization and coefficient-of-variation homogeneity profiles.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nwb/laydown.hpp"
#include "nwb/params.hpp"

namespace nwb::homogeneity {

inline constexpr std::size_t kNumResolutions = 7;
inline constexpr std::array<double, kNumResolutions> kResolutionsMm = {0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0};
/// Finest bin size; every standard resolution is an integer multiple of it.
inline constexpr double kQuantumMm = 0.5;

/// Fiber mass per bin. Rows run along the machine direction.
///
/// Bins are half-open [i*r, (i+1)*r) and cover exactly the window, so the last
/// row/column is partial when an extent is not a multiple of the resolution.
/// Points on the window's far edge fall into the last bin.
struct MassGrid {
  double resolution_mm = 1.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double machine_extent_mm = 0.0;
  double cross_extent_mm = 0.0;
  std::vector<double> cell_mass;  // row-major, rows * cols

  /// Grid of full cells holding the given masses.
  static MassGrid from_values(std::size_t rows, std::size_t cols, double resolution_mm,
                              std::vector<double> values);

  double& at(std::size_t row, std::size_t col) { return cell_mass[row * cols + col]; }
  double at(std::size_t row, std::size_t col) const { return cell_mass[row * cols + col]; }
  double cell_area(std::size_t row, std::size_t col) const noexcept;
  /// True when every cell has the full resolution^2 area.
  bool uniform_cells() const noexcept;
  double total_mass() const noexcept;
};

/// Seven CV values, one per standard resolution, finest first.
struct CVProfile {
  std::array<double, kNumResolutions> values{};

  static constexpr const std::array<double, kNumResolutions>& resolutions() noexcept { return kResolutionsMm; }
  bool operator==(const CVProfile&) const = default;
};

/// Number of bins covering `extent` at bin size `r` (exact ceil(extent / r), at least 1).
std::size_t bin_count(double extent_mm, double r_mm);
/// Exact floor(x / r) clamped to [0, bins - 1].
std::size_t bin_index(double x_mm, double r_mm, std::size_t bins);

/// Requires 0 < resolution <= min(window extents).
MassGrid rasterize(const laydown::VirtualNonwoven& nw, double resolution_mm);

/// Population standard deviation over mean of the cell values. Partial bins
/// enter as mass per area. Throws DegenerateSampleError for zero mean.
double cv(const MassGrid& grid);

/// Resolution actually rasterized for a standard resolution: unchanged unless
/// it exceeds the window or would produce a single cell, in which case half
/// the shorter window extent is used.
double effective_resolution(const SampleWindow& window, double resolution_mm);

CVProfile cv_profile(const laydown::VirtualNonwoven& nw);

/// Binary PGM (P5, maxval 255); pixel = floor(255 * mass / max_mass).
void render_image(const MassGrid& grid, const std::filesystem::path& path);

/// Point counts on the kQuantumMm grid of a window. Coarser grids at integer
/// multiples of the quantum are exact aggregates of it.
class QuantumCounts {
 public:
  explicit QuantumCounts(const SampleWindow& window);

  /// Counts points inside the closed window; others are ignored.
  void add(std::span<const double> machine_mm, std::span<const double> cross_mm) noexcept;
  void merge(const QuantumCounts& other);

  const SampleWindow& window() const noexcept { return window_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::uint64_t total() const noexcept;
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }

  /// True when `resolution_mm` is an integer multiple of the quantum.
  static bool aggregable(double resolution_mm) noexcept;
  /// Mass grid at an aggregable resolution, each point weighing `point_mass`.
  MassGrid to_grid(double resolution_mm, double point_mass) const;

 private:
  SampleWindow window_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// Summary of one simulated sample, computed without materializing points.
struct SampleMeasurement {
  CVProfile profile;
  double basis_weight = 0.0;  // mass units per mm^2
  std::uint64_t retained_points = 0;
  double point_mass = 0.0;
  QuantumCounts counts;
};

/// Simulates a sample and measures it on the fly. Produces exactly
/// cv_profile(simulate_sample(...)) for the same inputs.
SampleMeasurement simulate_and_measure(const ProcessParams& params, const SampleWindow& window,
                                       std::uint64_t seed, const LaydownConfig& config = {},
                                       const laydown::RunOptions& options = {});

/// CV profile from quantum counts (all points of equal mass).
CVProfile profile_from_counts(const QuantumCounts& counts, double point_mass);

}  // namespace nwb::homogeneity
