#pragma once

// Surrogate-driven navigation of the parameter space: objective, search
// strategies, one-at-a-time sensitivity sweeps and shortlisting.

#include <array>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "nwb/homogeneity.hpp"
#include "nwb/matrix.hpp"
#include "nwb/params.hpp"

namespace nwb::surrogates {
class TrainedSurrogate;
}

namespace nwb::explorer {

using homogeneity::CVProfile;
using homogeneity::kNumResolutions;

/// Weighted mean of the seven CV values.
struct Objective {
  std::array<double, kNumResolutions> weights = [] {
    std::array<double, kNumResolutions> w{};
    w.fill(1.0);
    return w;
  }();

  /// Throws ValidationError for negative, non-finite or all-zero weights.
  void validate() const;
  double operator()(const CVProfile& p) const;
};

/// Raw features (n x 5) to CV values (n x 7). Must be thread safe.
using Predictor = std::function<Matrix(const Matrix&)>;
Predictor predictor_for(const surrogates::TrainedSurrogate& model);

struct Setting {
  ProcessParams params;
  CVProfile predicted;
  double objective = 0.0;
};

/// Predicts and scores a batch, preserving order.
std::vector<Setting> evaluate_settings(const Predictor& predictor, const std::vector<ProcessParams>& params,
                                       const Objective& objective);

enum class Strategy { grid, random, local };
std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view s);

struct ExploreRequest {
  Strategy strategy = Strategy::random;
  std::size_t budget = 1000;  // maximum surrogate evaluations
  std::array<std::size_t, kNumFeatures> levels{5, 5, 5, 5, 5};  // grid
  std::optional<ProcessParams> start;                            // local
  Objective objective;
  std::uint64_t seed = 1;
  ParamRanges ranges;
  double initial_step = 0.25;    // local, normalized units
  double step_tolerance = 1e-3;  // local, normalized units
};

struct ExploreResult {
  std::vector<Setting> settings;  // every evaluated setting, objective ascending
  std::size_t evaluations = 0;
  bool converged = false;  // local: step fell below the tolerance
};

/// grid: full factorial at the requested levels (must fit the budget).
/// random: `budget` uniform samples. local: coordinate descent on
/// normalized parameters from `start`, halving the step after a sweep
/// without improvement.
ExploreResult explore(const Predictor& predictor, const ExploreRequest& request);

struct SensitivitySweep {
  std::size_t parameter = 0;
  std::vector<double> values;
  std::vector<double> objective;
  std::vector<CVProfile> profiles;
};

/// Evenly spaced values of one parameter over its range, endpoints exact,
/// the others fixed at `params`.
SensitivitySweep sensitivity(const Predictor& predictor, const ProcessParams& params, std::size_t parameter,
                             std::size_t samples, const Objective& objective, const ParamRanges& ranges = {});

/// Index of a feature by name (kFeatureNames) or decimal index.
std::size_t parse_parameter(std::string_view s);

struct Shortlist {
  std::vector<Setting> settings;
  bool short_of_request = false;  // fewer distinct settings than requested
};

/// Top-n distinct settings by objective. Ties are ordered by the feature
/// vector, so the result does not depend on input order.
Shortlist shortlist(std::vector<Setting> settings, std::size_t n);

}  // namespace nwb::explorer
