#include "nwb/homogeneity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include "nwb/error.hpp"
#include "nwb/simd/kernels.hpp"

namespace nwb::homogeneity {

namespace {

// floor(x / r) in exact arithmetic. The quotient is off by at most one unit
// near integers; the sign of fma(q, r, -x) is exact and settles it.
double exact_floor_div(double x, double r) {
  const double t = x / r;
  double q = std::floor(t);
  const double frac = t - q;
  if (frac < 1e-6 || frac > 1.0 - 1e-6) {
    if (std::fma(q, r, -x) > 0.0)
      q -= 1.0;
    else if (std::fma(q + 1.0, r, -x) <= 0.0)
      q += 1.0;
  }
  return q;
}

bool is_multiple(double extent, double r, std::size_t bins) {
  return std::fma(static_cast<double>(bins), r, -extent) == 0.0;
}

}  // namespace

std::size_t bin_count(double extent_mm, double r_mm) {
  if (!(r_mm > 0.0)) throw ValidationError("resolution must be positive", {"resolution"});
  const double q = exact_floor_div(extent_mm, r_mm);
  const auto bins = static_cast<std::size_t>(q) + (std::fma(q, r_mm, -extent_mm) == 0.0 ? 0 : 1);
  return std::max<std::size_t>(bins, 1);
}

std::size_t bin_index(double x_mm, double r_mm, std::size_t bins) {
  if (!(x_mm > 0.0)) return 0;
  const double q = exact_floor_div(x_mm, r_mm);
  return std::min(static_cast<std::size_t>(q), bins - 1);
}

MassGrid MassGrid::from_values(std::size_t rows, std::size_t cols, double resolution_mm,
                               std::vector<double> values) {
  if (values.size() != rows * cols) throw ValidationError("grid value count must be rows * cols", {"cell_mass"});
  if (!(resolution_mm > 0.0)) throw ValidationError("resolution must be positive", {"resolution"});
  for (double v : values)
    if (!(v >= 0.0)) throw ValidationError("cell masses must be non-negative", {"cell_mass"});
  MassGrid g;
  g.resolution_mm = resolution_mm;
  g.rows = rows;
  g.cols = cols;
  g.machine_extent_mm = static_cast<double>(rows) * resolution_mm;
  g.cross_extent_mm = static_cast<double>(cols) * resolution_mm;
  g.cell_mass = std::move(values);
  return g;
}

double MassGrid::cell_area(std::size_t row, std::size_t col) const noexcept {
  const double r = resolution_mm;
  const double h = row + 1 == rows ? machine_extent_mm - static_cast<double>(row) * r : r;
  const double w = col + 1 == cols ? cross_extent_mm - static_cast<double>(col) * r : r;
  return h * w;
}

bool MassGrid::uniform_cells() const noexcept {
  return is_multiple(machine_extent_mm, resolution_mm, rows) && is_multiple(cross_extent_mm, resolution_mm, cols);
}

double MassGrid::total_mass() const noexcept {
  double s = 0.0;
  for (double m : cell_mass) s += m;
  return s;
}

MassGrid rasterize(const laydown::VirtualNonwoven& nw, double resolution_mm) {
  const auto& w = nw.window;
  w.validate();
  if (!(resolution_mm > 0.0)) throw ValidationError("resolution must be positive", {"resolution"});
  if (resolution_mm > std::min(w.machine_extent_mm, w.cross_extent_mm))
    throw ValidationError("resolution larger than the sample window", {"resolution"});

  MassGrid g;
  g.resolution_mm = resolution_mm;
  g.rows = bin_count(w.machine_extent_mm, resolution_mm);
  g.cols = bin_count(w.cross_extent_mm, resolution_mm);
  g.machine_extent_mm = w.machine_extent_mm;
  g.cross_extent_mm = w.cross_extent_mm;
  g.cell_mass.assign(g.rows * g.cols, 0.0);

  const bool equal_mass =
      std::all_of(nw.fibers.begin(), nw.fibers.end(),
                  [&](const auto& f) { return f.point_mass == nw.fibers.front().point_mass; });
  auto cell_of = [&](const laydown::Point& p) {
    return bin_index(p.machine_mm, resolution_mm, g.rows) * g.cols + bin_index(p.cross_mm, resolution_mm, g.cols);
  };
  if (equal_mass && !nw.fibers.empty()) {
    // Integer counts keep the result independent of accumulation order.
    std::vector<std::uint64_t> counts(g.cell_mass.size(), 0);
    for (const auto& f : nw.fibers)
      for (const auto& p : f.points) ++counts[cell_of(p)];
    const double pm = nw.fibers.front().point_mass;
    for (std::size_t i = 0; i < counts.size(); ++i) g.cell_mass[i] = static_cast<double>(counts[i]) * pm;
  } else {
    for (const auto& f : nw.fibers)
      for (const auto& p : f.points) g.cell_mass[cell_of(p)] += f.point_mass;
  }
  return g;
}

double cv(const MassGrid& grid) {
  if (grid.cell_mass.empty()) throw DegenerateSampleError("empty grid has no coefficient of variation");
  std::vector<double> density;
  std::span<const double> values = grid.cell_mass;
  if (!grid.uniform_cells()) {
    density.resize(grid.cell_mass.size());
    for (std::size_t i = 0; i < grid.rows; ++i)
      for (std::size_t j = 0; j < grid.cols; ++j)
        density[i * grid.cols + j] = grid.at(i, j) / grid.cell_area(i, j);
    values = density;
  }
  const double n = static_cast<double>(values.size());
  const double mean = simd::sum(values) / n;
  if (!(mean > 0.0)) throw DegenerateSampleError("sample has no mass; coefficient of variation undefined");
  const double var = simd::sum_sq_dev(values, mean) / n;
  return std::sqrt(var) / mean;
}

double effective_resolution(const SampleWindow& window, double resolution_mm) {
  const double shorter = std::min(window.machine_extent_mm, window.cross_extent_mm);
  const std::size_t cells =
      bin_count(window.machine_extent_mm, resolution_mm) * bin_count(window.cross_extent_mm, resolution_mm);
  if (resolution_mm <= shorter && cells >= 2) return resolution_mm;
  return shorter / 2.0;
}

CVProfile cv_profile(const laydown::VirtualNonwoven& nw) {
  CVProfile p;
  for (std::size_t i = 0; i < kNumResolutions; ++i)
    p.values[i] = cv(rasterize(nw, effective_resolution(nw.window, kResolutionsMm[i])));
  return p;
}

void render_image(const MassGrid& grid, const std::filesystem::path& path) {
  if (grid.rows == 0 || grid.cols == 0) throw ValidationError("cannot render an empty grid", {"grid"});
  const double max_mass = *std::max_element(grid.cell_mass.begin(), grid.cell_mass.end());
  std::vector<unsigned char> pixels(grid.cell_mass.size(), 0);
  if (max_mass > 0.0)
    for (std::size_t i = 0; i < pixels.size(); ++i)
      pixels[i] = static_cast<unsigned char>(std::floor(255.0 * grid.cell_mass[i] / max_mass));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open image file for writing: " + path.string());
  out << "P5\n" << grid.cols << ' ' << grid.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing image file: " + path.string());
}

QuantumCounts::QuantumCounts(const SampleWindow& window)
    : window_(window),
      rows_(bin_count(window.machine_extent_mm, kQuantumMm)),
      cols_(bin_count(window.cross_extent_mm, kQuantumMm)),
      counts_(rows_ * cols_, 0) {}

void QuantumCounts::add(std::span<const double> machine_mm, std::span<const double> cross_mm) noexcept {
  const double em = window_.machine_extent_mm, ec = window_.cross_extent_mm;
  for (std::size_t k = 0; k < machine_mm.size(); ++k) {
    const double m = machine_mm[k], c = cross_mm[k];
    if (!(m >= 0.0 && m <= em && c >= 0.0 && c <= ec)) continue;
    // x / 0.5 == 2x exactly, so floor gives the exact bin.
    const auto i = std::min(static_cast<std::size_t>(m * 2.0), rows_ - 1);
    const auto j = std::min(static_cast<std::size_t>(c * 2.0), cols_ - 1);
    ++counts_[i * cols_ + j];
  }
}

void QuantumCounts::merge(const QuantumCounts& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) throw ValidationError("count grids differ in shape", {"counts"});
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t QuantumCounts::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

bool QuantumCounts::aggregable(double resolution_mm) noexcept {
  const double k = resolution_mm / kQuantumMm;
  return k >= 1.0 && std::floor(k) == k && k * kQuantumMm == resolution_mm;
}

MassGrid QuantumCounts::to_grid(double resolution_mm, double point_mass) const {
  if (!aggregable(resolution_mm)) throw ValidationError("resolution is not a multiple of the count quantum", {"resolution"});
  const auto k = static_cast<std::size_t>(resolution_mm / kQuantumMm);
  MassGrid g;
  g.resolution_mm = resolution_mm;
  g.rows = (rows_ + k - 1) / k;
  g.cols = (cols_ + k - 1) / k;
  g.machine_extent_mm = window_.machine_extent_mm;
  g.cross_extent_mm = window_.cross_extent_mm;
  std::vector<std::uint64_t> agg(g.rows * g.cols, 0);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) agg[(i / k) * g.cols + j / k] += counts_[i * cols_ + j];
  g.cell_mass.resize(agg.size());
  for (std::size_t i = 0; i < agg.size(); ++i) g.cell_mass[i] = static_cast<double>(agg[i]) * point_mass;
  return g;
}

CVProfile profile_from_counts(const QuantumCounts& counts, double point_mass) {
  CVProfile p;
  for (std::size_t i = 0; i < kNumResolutions; ++i)
    p.values[i] = cv(counts.to_grid(effective_resolution(counts.window(), kResolutionsMm[i]), point_mass));
  return p;
}

namespace {

class CountSink final : public laydown::PointSink {
 public:
  explicit CountSink(const SampleWindow& w) : counts(w) {}
  void consume(std::size_t, std::span<const double> machine, std::span<const double> cross) override {
    counts.add(machine, cross);
  }
  QuantumCounts counts;
};

bool streaming_exact(const SampleWindow& w) {
  if (bin_count(w.machine_extent_mm, kQuantumMm) * kQuantumMm != w.machine_extent_mm) return false;
  if (bin_count(w.cross_extent_mm, kQuantumMm) * kQuantumMm != w.cross_extent_mm) return false;
  for (double r : kResolutionsMm)
    if (!QuantumCounts::aggregable(effective_resolution(w, r))) return false;
  return true;
}

}  // namespace

SampleMeasurement simulate_and_measure(const ProcessParams& params, const SampleWindow& window,
                                       std::uint64_t seed, const LaydownConfig& config,
                                       const laydown::RunOptions& options) {
  const auto plan = laydown::plan_sample(params, window, seed, config);
  const unsigned workers = std::max(1u, options.workers);
  std::vector<std::unique_ptr<CountSink>> owned;
  std::vector<laydown::PointSink*> sinks;
  for (unsigned w = 0; w < workers; ++w) {
    owned.push_back(std::make_unique<CountSink>(window));
    sinks.push_back(owned.back().get());
  }
  laydown::generate(plan, options, sinks);
  for (unsigned w = 1; w < workers; ++w) owned[0]->counts.merge(owned[w]->counts);

  SampleMeasurement m{.profile = {},
                      .basis_weight = 0.0,
                      .retained_points = owned[0]->counts.total(),
                      .point_mass = plan.point_mass,
                      .counts = std::move(owned[0]->counts)};
  m.basis_weight = static_cast<double>(m.retained_points) * plan.point_mass / window.area_mm2();
  if (streaming_exact(window)) {
    m.profile = profile_from_counts(m.counts, plan.point_mass);
  } else {
    // Windows off the quantum lattice: rasterize the materialized sample.
    m.profile = cv_profile(laydown::simulate_sample(params, window, seed, config, options));
  }
  return m;
}

}  // namespace nwb::homogeneity
