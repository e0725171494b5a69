#pragma once

// Simulation campaigns and the ML-ready datasets built from them.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nwb/homogeneity.hpp"
#include "nwb/matrix.hpp"
#include "nwb/params.hpp"

namespace nwb::dataset {

/// k points, one per equal-width stratum in every dimension, strata
/// permuted independently per dimension and jittered uniformly inside.
std::vector<ProcessParams> latin_hypercube(const ParamRanges& ranges, std::size_t k, std::uint64_t seed);

/// Full factorial over explicit per-feature values (feature order as kFeatureNames).
std::vector<ProcessParams> expert_grid(const std::array<std::vector<double>, kNumFeatures>& values);
/// Full factorial over evenly spaced levels spanning each range; one level
/// means the interval midpoint.
std::vector<ProcessParams> expert_grid(const ParamRanges& ranges, const std::array<std::size_t, kNumFeatures>& levels);

enum class Split { none, train, val, test };
std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view s);

struct Row {
  std::size_t setting_id = 0;
  std::size_t replicate = 0;
  ProcessParams params;
  std::uint64_t seed = 0;
  homogeneity::CVProfile profile;
  Split split = Split::none;
  std::string error;  // empty for successful simulations

  bool ok() const noexcept { return error.empty(); }
  bool operator==(const Row&) const = default;
};

/// Rows sorted by (setting_id, replicate).
struct CampaignDataset {
  std::vector<Row> rows;

  std::size_t setting_count() const;
  bool operator==(const CampaignDataset&) const = default;
};

/// Features (n x 5) and CV targets (n x 7) of the successful rows in a split
/// (Split::none selects every successful row), with their setting ids.
struct Xy {
  Matrix x;
  Matrix y;
  std::vector<std::size_t> groups;
};
Xy select(const CampaignDataset& ds, std::optional<Split> split);

/// Row seed for replicate `replicate` of setting `setting_id`.
std::uint64_t row_seed(std::uint64_t campaign_seed, std::size_t setting_id, std::size_t replicate) noexcept;

void write_csv(const CampaignDataset& ds, const std::filesystem::path& path);
CampaignDataset read_csv(const std::filesystem::path& path);
std::string to_csv(const CampaignDataset& ds);
CampaignDataset parse_csv(std::string_view text);

/// Any simulator mapping (params, window, seed) to a profile. Must be thread safe.
using Simulator = std::function<homogeneity::CVProfile(const ProcessParams&, const SampleWindow&, std::uint64_t)>;
/// The laydown simulator measured on the fly.
Simulator laydown_simulator(const LaydownConfig& config = {});

struct CampaignOptions {
  SampleWindow window{};
  std::size_t replicates = 5;
  std::uint64_t seed = 1;
  LaydownConfig config{};
  unsigned workers = 1;
  /// When set, the CSV is written here (plus a .manifest.json sibling),
  /// rewritten every `checkpoint_every` finished rows, and rows already on
  /// disk are reused instead of simulated.
  std::optional<std::filesystem::path> output;
  std::size_t checkpoint_every = 25;
  std::string design = "custom";
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Simulates every setting `replicates` times. Failed simulations become
/// rows with an error message; the campaign continues.
CampaignDataset run_campaign(const std::vector<ProcessParams>& points, const CampaignOptions& options,
                             const Simulator& simulator = {});

std::filesystem::path manifest_path(const std::filesystem::path& csv);

struct SplitFractions {
  double test = 0.2;
  double val = 0.2;  // of the non-test settings
};
/// Labels every successful row by shuffling setting ids. Failed rows keep
/// Split::none. Requires at least 5 settings.
void grouped_split(CampaignDataset& ds, std::uint64_t seed, SplitFractions fractions = {});

/// Per-feature z-scores with population standard deviation.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(Vector mean, Vector sd);

  /// Throws ValidationError naming any constant column (names optional).
  static Standardizer fit(const Matrix& x, const std::vector<std::string>& names = {});

  Matrix transform(const Matrix& x) const;
  Matrix inverse_transform(const Matrix& z) const;
  const Vector& mean() const noexcept { return mean_; }
  const Vector& sd() const noexcept { return sd_; }
  Eigen::Index size() const noexcept { return mean_.size(); }

 private:
  Vector mean_;
  Vector sd_;
};

/// Population CV of each resolution's values across runs, per window.
struct UncertaintyReport {
  std::vector<SampleWindow> windows;
  std::vector<homogeneity::CVProfile> cv_of_cv;  // one per window
  std::vector<std::vector<homogeneity::CVProfile>> runs;
};
UncertaintyReport uncertainty_report(const ProcessParams& params, const std::vector<SampleWindow>& windows,
                                     std::size_t runs, std::uint64_t seed, const Simulator& simulator,
                                     unsigned workers = 1);

/// Step-size significance study. Per setting three runs share a design:
/// a = (ds_low, seed_a), b = (ds_low, seed_b), c = (ds_high, seed_a).
/// dev(x, y) = mean over resolutions of |x - y| / x.
struct StepSizeStudy {
  std::vector<double> noise_devs;  // dev(a, b)
  std::vector<double> ds_devs;     // dev(a, c)
  double threshold = 0.0;          // quantile of noise_devs
  double exceedance = 0.0;         // fraction of ds_devs above threshold
};
struct StepSizeOptions {
  double ds_low_m = 2.5e-5;
  double ds_high_m = 5e-5;
  double quantile = 0.9975;
  SampleWindow window{};
  std::uint64_t seed = 1;
  unsigned workers = 1;
};
StepSizeStudy step_size_study(const std::vector<ProcessParams>& points, const StepSizeOptions& options,
                              const Simulator& simulator);

double profile_deviation(const homogeneity::CVProfile& reference, const homogeneity::CVProfile& other);
/// Linear-interpolation quantile (q in [0, 1]) of a nonempty sample.
double quantile(std::vector<double> values, double q);

/// Replicate averaging check: per resolution, pooled across settings,
/// the relative standard deviation (Bessel-corrected) of single runs and of
/// means over consecutive groups of `group_size` runs.
struct AveragingStudy {
  std::array<double, homogeneity::kNumResolutions> single{};
  std::array<double, homogeneity::kNumResolutions> of_means{};
  /// of_means / (single / sqrt(group_size)); 1 when averaging is ideal.
  std::array<double, homogeneity::kNumResolutions> ratio{};
};
/// `runs[s]` holds the replicate profiles of setting s; each needs at least
/// two full groups.
AveragingStudy averaging_study(const std::vector<std::vector<homogeneity::CVProfile>>& runs, std::size_t group_size = 5);

}  // namespace nwb::dataset
