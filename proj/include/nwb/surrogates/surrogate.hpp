#pragma once

// Trained surrogates: one of six regression families behind a common
// interface that takes raw process parameters and returns CV profiles.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "nwb/dataset.hpp"
#include "nwb/homogeneity.hpp"
#include "nwb/surrogates/forest.hpp"
#include "nwb/surrogates/linear.hpp"
#include "nwb/surrogates/metrics.hpp"
#include "nwb/surrogates/mlp.hpp"
#include "nwb/surrogates/svr.hpp"

namespace nwb::surrogates {

enum class Family { linear, svr, polynomial, bayesian, random_forest, mlp };
inline constexpr std::array<Family, 6> kFamilies = {Family::linear,   Family::svr,           Family::polynomial,
                                                    Family::bayesian, Family::random_forest, Family::mlp};
std::string_view to_string(Family f) noexcept;
Family parse_family(std::string_view s);

struct PolyConfig {
  unsigned degree = 5;
  void validate() const;
};

struct ModelSpec {
  Family family = Family::mlp;
  LinearConfig linear;
  SvrConfig svr;
  PolyConfig polynomial;
  BayesConfig bayesian;
  ForestConfig random_forest;
  MlpConfig mlp;
  std::uint64_t seed = 1;

  /// Validates the configuration of the selected family.
  void validate() const;
};

nlohmann::json to_json(const ModelSpec& spec);
/// Overrides fields of `base` with the keys present in `j`. Unknown keys
/// and ill-typed values raise ValidationError.
ModelSpec spec_from_json(const nlohmann::json& j, ModelSpec base = {});

struct TrainingMeta {
  double train_seconds = 0.0;
  std::size_t iterations = 0;  // epochs, SMO iterations or coordinate sweeps (max over outputs)
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
};

struct PolyModel {
  PolynomialFeatures features;
  LinearModel fit;
};

class TrainedSurrogate {
 public:
  using Model = std::variant<std::monostate, LinearModel, SvrModel, PolyModel, BayesModel, ForestModel, Mlp>;

  TrainedSurrogate() = default;
  TrainedSurrogate(ModelSpec spec, dataset::Standardizer x_scale, dataset::Standardizer y_scale, Model model,
                   TrainingMeta meta);

  bool trained() const noexcept { return model_.index() != 0; }
  Family family() const noexcept { return spec_.family; }
  const ModelSpec& spec() const noexcept { return spec_; }
  const TrainingMeta& meta() const noexcept { return meta_; }
  const dataset::Standardizer& x_scale() const noexcept { return x_scale_; }
  const dataset::Standardizer& y_scale() const noexcept { return y_scale_; }
  const Model& model() const noexcept { return model_; }

  /// Raw features (n x 5) to CV values (n x 7). Throws StateError when untrained.
  Matrix predict(const Matrix& x) const;
  homogeneity::CVProfile predict(const ProcessParams& params) const;
  /// Bayesian family only: per-output predictive variance in CV units.
  Matrix predictive_variance(const Matrix& x) const;

 private:
  ModelSpec spec_;
  dataset::Standardizer x_scale_;
  dataset::Standardizer y_scale_;
  Model model_;
  TrainingMeta meta_;
};

/// Fits on (x, y); (x_val, y_val) is used only for MLP early stopping.
TrainedSurrogate train(const ModelSpec& spec, const Matrix& x, const Matrix& y, const Matrix& x_val,
                       const Matrix& y_val);
/// Uses the dataset's train and val splits, which must both be nonempty.
TrainedSurrogate train(const ModelSpec& spec, const dataset::CampaignDataset& ds);

Metrics evaluate(const TrainedSurrogate& model, const Matrix& x, const Matrix& y);
Metrics evaluate(const TrainedSurrogate& model, const dataset::CampaignDataset& ds, dataset::Split split);

/// {family, split, mape, mse, r2, per_resolution, train_seconds,
///  predict_microseconds_per_sample}; latency is measured one row at a time.
nlohmann::json evaluation_report(const TrainedSurrogate& model, const dataset::CampaignDataset& ds,
                                 dataset::Split split);

inline constexpr std::string_view kModelFormat = "nwb-surrogate";
inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const TrainedSurrogate& model);
/// Throws FormatError for malformed content or a version mismatch and
/// FamilyMismatchError when `expected` differs from the stored family.
TrainedSurrogate surrogate_from_json(const nlohmann::json& j, std::optional<Family> expected = {});
void save(const TrainedSurrogate& model, const std::filesystem::path& path);
TrainedSurrogate load(const std::filesystem::path& path, std::optional<Family> expected = {});

struct DegreeResult {
  unsigned degree = 0;
  bool ok = false;
  double train_mse = 0.0;  // in target units
  double val_mse = 0.0;
  std::size_t features = 0;
  std::string error;  // set when !ok
};
/// Unregularized polynomial fits of degree 1..max_degree. Failed degrees are
/// recorded, not thrown.
std::vector<DegreeResult> degree_sweep(const Matrix& x, const Matrix& y, const Matrix& x_val, const Matrix& y_val,
                                       unsigned max_degree);

struct MlpSearchBounds {
  std::size_t min_layers = 1;
  std::size_t max_layers = 5;
  std::size_t min_width = 8;
  std::size_t max_width = 1024;
  std::size_t width_step = 8;
  std::vector<Activation> activations{Activation::relu, Activation::sigmoid, Activation::tanh};

  void validate() const;
};

struct MlpSearchEntry {
  MlpConfig config;
  double val_mse = 0.0;  // standardized targets, best epoch
  std::size_t epochs = 0;
  std::string error;
};

struct MlpSearchResult {
  MlpConfig best;
  std::size_t best_index = 0;
  std::vector<MlpSearchEntry> log;
  TrainedSurrogate model;  // trained with `best`
};

/// Samples `samples` architectures uniformly within `bounds` (optimizer
/// settings from `base`), trains each with early stopping and keeps the one
/// with the lowest validation error.
MlpSearchResult mlp_random_search(const MlpSearchBounds& bounds, std::size_t samples, const Matrix& x,
                                  const Matrix& y, const Matrix& x_val, const Matrix& y_val, std::uint64_t seed,
                                  const MlpConfig& base = {});

}  // namespace nwb::surrogates
