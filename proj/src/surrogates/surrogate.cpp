#include "nwb/surrogates/surrogate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "nwb/error.hpp"
#include "nwb/io.hpp"
#include "nwb/rng.hpp"

namespace nwb::surrogates {

using nlohmann::json;

std::string_view to_string(Family f) noexcept {
  switch (f) {
    case Family::linear: return "linear";
    case Family::svr: return "svr";
    case Family::polynomial: return "polynomial";
    case Family::bayesian: return "bayesian";
    case Family::random_forest: return "random_forest";
    case Family::mlp: return "mlp";
  }
  return "mlp";
}

Family parse_family(std::string_view s) {
  for (auto f : kFamilies)
    if (to_string(f) == s) return f;
  throw ValidationError("unknown model family '" + std::string(s) + "'", {"family"});
}

void PolyConfig::validate() const {
  if (degree < 1) throw ValidationError("polynomial degree must be >= 1", {"degree"});
}

void ModelSpec::validate() const {
  switch (family) {
    case Family::linear: linear.validate(); break;
    case Family::svr: svr.validate(); break;
    case Family::polynomial: polynomial.validate(); break;
    case Family::bayesian: bayesian.validate(); break;
    case Family::random_forest: random_forest.validate(); break;
    case Family::mlp: mlp.validate(); break;
  }
}

// ---- spec <-> json ---------------------------------------------------------

json to_json(const ModelSpec& s) {
  json j;
  j["family"] = to_string(s.family);
  j["seed"] = s.seed;
  j["linear"] = {{"regularization", to_string(s.linear.regularization)},
                 {"strength", s.linear.strength},
                 {"l1_ratio", s.linear.l1_ratio},
                 {"max_iterations", s.linear.max_iterations},
                 {"tolerance", s.linear.tolerance}};
  j["svr"] = {{"c", s.svr.c},
              {"epsilon", s.svr.epsilon},
              {"gamma", s.svr.gamma},
              {"max_rows", s.svr.max_rows},
              {"tolerance", s.svr.tolerance},
              {"max_iterations", s.svr.max_iterations}};
  j["polynomial"] = {{"degree", s.polynomial.degree}};
  j["bayesian"] = {{"alpha", s.bayesian.alpha},
                   {"noise_variance", s.bayesian.noise_variance},
                   {"evidence", s.bayesian.evidence},
                   {"max_iterations", s.bayesian.max_iterations},
                   {"tolerance", s.bayesian.tolerance}};
  j["random_forest"] = {{"trees", s.random_forest.trees},
                        {"max_depth", s.random_forest.max_depth},
                        {"min_samples_leaf", s.random_forest.min_samples_leaf},
                        {"max_features", s.random_forest.max_features},
                        {"bootstrap", s.random_forest.bootstrap},
                        {"workers", s.random_forest.workers}};
  j["mlp"] = {{"hidden", s.mlp.hidden},
              {"activation", to_string(s.mlp.activation)},
              {"learning_rate", s.mlp.learning_rate},
              {"beta1", s.mlp.beta1},
              {"beta2", s.mlp.beta2},
              {"adam_epsilon", s.mlp.adam_epsilon},
              {"batch_size", s.mlp.batch_size},
              {"patience", s.mlp.patience},
              {"max_epochs", s.mlp.max_epochs}};
  return j;
}

namespace {

template <class T>
void read_field(const json& section, const std::string& path, const std::string& key, T& out) {
  const json& v = section.at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ValidationError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) throw ValidationError("");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    throw ValidationError("field '" + path + "." + key + "' has the wrong type", {path + "." + key});
  }
}

void check_keys(const json& section, const std::string& path, std::initializer_list<std::string_view> known) {
  if (!section.is_object()) throw ValidationError("'" + path + "' must be an object", {path});
  for (const auto& [k, v] : section.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ValidationError("unknown key '" + path + "." + k + "'", {path + "." + k});
}

template <class Fn>
void with_section(const json& j, const char* name, Fn&& fn) {
  if (j.contains(name)) fn(j.at(name), std::string(name));
}

template <class T>
void maybe(const json& section, const std::string& path, const char* key, T& out) {
  if (section.contains(key)) read_field(section, path, key, out);
}

}  // namespace

ModelSpec spec_from_json(const json& j, ModelSpec s) {
  check_keys(j, "model",
             {"family", "seed", "linear", "svr", "polynomial", "bayesian", "random_forest", "mlp"});
  if (j.contains("family")) {
    if (!j["family"].is_string()) throw ValidationError("'model.family' must be a string", {"model.family"});
    s.family = parse_family(j["family"].get<std::string>());
  }
  maybe(j, "model", "seed", s.seed);
  with_section(j, "linear", [&](const json& c, const std::string& p) {
    check_keys(c, p, {"regularization", "strength", "l1_ratio", "max_iterations", "tolerance"});
    if (c.contains("regularization")) {
      std::string r;
      read_field(c, p, "regularization", r);
      s.linear.regularization = parse_regularization(r);
    }
    maybe(c, p, "strength", s.linear.strength);
    maybe(c, p, "l1_ratio", s.linear.l1_ratio);
    maybe(c, p, "max_iterations", s.linear.max_iterations);
    maybe(c, p, "tolerance", s.linear.tolerance);
  });
  with_section(j, "svr", [&](const json& c, const std::string& p) {
    check_keys(c, p, {"c", "epsilon", "gamma", "max_rows", "tolerance", "max_iterations"});
    maybe(c, p, "c", s.svr.c);
    maybe(c, p, "epsilon", s.svr.epsilon);
    maybe(c, p, "gamma", s.svr.gamma);
    maybe(c, p, "max_rows", s.svr.max_rows);
    maybe(c, p, "tolerance", s.svr.tolerance);
    maybe(c, p, "max_iterations", s.svr.max_iterations);
  });
  with_section(j, "polynomial", [&](const json& c, const std::string& p) {
    check_keys(c, p, {"degree"});
    maybe(c, p, "degree", s.polynomial.degree);
  });
  with_section(j, "bayesian", [&](const json& c, const std::string& p) {
    check_keys(c, p, {"alpha", "noise_variance", "evidence", "max_iterations", "tolerance"});
    maybe(c, p, "alpha", s.bayesian.alpha);
    maybe(c, p, "noise_variance", s.bayesian.noise_variance);
    maybe(c, p, "evidence", s.bayesian.evidence);
    maybe(c, p, "max_iterations", s.bayesian.max_iterations);
    maybe(c, p, "tolerance", s.bayesian.tolerance);
  });
  with_section(j, "random_forest", [&](const json& c, const std::string& p) {
    check_keys(c, p, {"trees", "max_depth", "min_samples_leaf", "max_features", "bootstrap", "workers"});
    maybe(c, p, "trees", s.random_forest.trees);
    maybe(c, p, "max_depth", s.random_forest.max_depth);
    maybe(c, p, "min_samples_leaf", s.random_forest.min_samples_leaf);
    maybe(c, p, "max_features", s.random_forest.max_features);
    maybe(c, p, "bootstrap", s.random_forest.bootstrap);
    maybe(c, p, "workers", s.random_forest.workers);
  });
  with_section(j, "mlp", [&](const json& c, const std::string& p) {
    check_keys(c, p,
               {"hidden", "activation", "learning_rate", "beta1", "beta2", "adam_epsilon", "batch_size", "patience",
                "max_epochs"});
    if (c.contains("hidden")) {
      const json& h = c["hidden"];
      if (!h.is_array()) throw ValidationError("'mlp.hidden' must be an array", {"mlp.hidden"});
      s.mlp.hidden.clear();
      for (const auto& w : h) {
        if (!w.is_number_unsigned()) throw ValidationError("'mlp.hidden' entries must be positive integers", {"mlp.hidden"});
        s.mlp.hidden.push_back(w.get<std::size_t>());
      }
    }
    if (c.contains("activation")) {
      std::string a;
      read_field(c, p, "activation", a);
      s.mlp.activation = parse_activation(a);
    }
    maybe(c, p, "learning_rate", s.mlp.learning_rate);
    maybe(c, p, "beta1", s.mlp.beta1);
    maybe(c, p, "beta2", s.mlp.beta2);
    maybe(c, p, "adam_epsilon", s.mlp.adam_epsilon);
    maybe(c, p, "batch_size", s.mlp.batch_size);
    maybe(c, p, "patience", s.mlp.patience);
    maybe(c, p, "max_epochs", s.mlp.max_epochs);
  });
  return s;
}

// ---- training ----------------------------------------------------------------

TrainedSurrogate::TrainedSurrogate(ModelSpec spec, dataset::Standardizer x_scale, dataset::Standardizer y_scale,
                                   Model model, TrainingMeta meta)
    : spec_(std::move(spec)),
      x_scale_(std::move(x_scale)),
      y_scale_(std::move(y_scale)),
      model_(std::move(model)),
      meta_(meta) {}

Matrix TrainedSurrogate::predict(const Matrix& x) const {
  if (!trained()) throw StateError("model is not trained");
  if (x.cols() != x_scale_.size()) throw ValidationError("expected " + std::to_string(x_scale_.size()) + " features", {"x"});
  const Matrix z = x_scale_.transform(x);
  Matrix out = std::visit(
      [&](const auto& m) -> Matrix {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return {};
        } else if constexpr (std::is_same_v<T, PolyModel>) {
          return m.fit.predict(m.features.transform(z));
        } else {
          return m.predict(z);
        }
      },
      model_);
  return y_scale_.inverse_transform(out);
}

homogeneity::CVProfile TrainedSurrogate::predict(const ProcessParams& params) const {
  const auto f = params.features();
  Matrix x(1, static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t i = 0; i < kNumFeatures; ++i) x(0, static_cast<Eigen::Index>(i)) = f[i];
  const Matrix y = predict(x);
  if (y.cols() != static_cast<Eigen::Index>(homogeneity::kNumResolutions))
    throw StateError("model does not produce a full CV profile");
  homogeneity::CVProfile p;
  for (std::size_t k = 0; k < p.values.size(); ++k) p.values[k] = y(0, static_cast<Eigen::Index>(k));
  return p;
}

Matrix TrainedSurrogate::predictive_variance(const Matrix& x) const {
  if (!trained()) throw StateError("model is not trained");
  const auto* b = std::get_if<BayesModel>(&model_);
  if (!b) throw StateError("predictive variance is only available for the bayesian family");
  Matrix v = b->predictive_variance(x_scale_.transform(x));
  for (Eigen::Index k = 0; k < v.cols(); ++k) v.col(k) *= y_scale_.sd()[k] * y_scale_.sd()[k];
  return v;
}

TrainedSurrogate train(const ModelSpec& spec, const Matrix& x, const Matrix& y, const Matrix& x_val,
                       const Matrix& y_val) {
  spec.validate();
  if (x.rows() == 0) throw ValidationError("training split is empty", {"train"});
  if (x_val.rows() == 0) throw ValidationError("validation split is empty", {"val"});
  if (x.rows() != y.rows() || x_val.rows() != y_val.rows() || x.cols() != x_val.cols() || y.cols() != y_val.cols())
    throw ValidationError("training and validation shapes disagree", {"x"});

  std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  if (static_cast<std::size_t>(x.cols()) != names.size()) names.clear();
  auto xs = dataset::Standardizer::fit(x, names);
  auto ys = dataset::Standardizer::fit(y);
  const Matrix z = xs.transform(x), t = ys.transform(y);

  const auto start = std::chrono::steady_clock::now();
  TrainingMeta meta;
  meta.train_rows = static_cast<std::size_t>(x.rows());
  meta.val_rows = static_cast<std::size_t>(x_val.rows());
  TrainedSurrogate::Model model;
  switch (spec.family) {
    case Family::linear: {
      auto m = fit_linear(z, t, spec.linear);
      meta.iterations = m.iterations;
      model = std::move(m);
      break;
    }
    case Family::polynomial: {
      PolynomialFeatures f(static_cast<std::size_t>(x.cols()), spec.polynomial.degree);
      auto m = fit_polynomial(f, z, t);
      model = PolyModel{std::move(f), std::move(m)};
      break;
    }
    case Family::bayesian: model = fit_bayes(z, t, spec.bayesian); break;
    case Family::svr: {
      auto m = fit_svr(z, t, spec.svr, spec.seed);
      meta.iterations = *std::max_element(m.iterations.begin(), m.iterations.end());
      model = std::move(m);
      break;
    }
    case Family::random_forest: model = fit_forest(z, t, spec.random_forest, spec.seed); break;
    case Family::mlp: {
      auto r = train_mlp(z, t, xs.transform(x_val), ys.transform(y_val), spec.mlp, spec.seed);
      meta.iterations = r.epochs;
      model = std::move(r.net);
      break;
    }
  }
  meta.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return TrainedSurrogate(spec, std::move(xs), std::move(ys), std::move(model), meta);
}

TrainedSurrogate train(const ModelSpec& spec, const dataset::CampaignDataset& ds) {
  const auto tr = dataset::select(ds, dataset::Split::train);
  const auto va = dataset::select(ds, dataset::Split::val);
  return train(spec, tr.x, tr.y, va.x, va.y);
}

Metrics evaluate(const TrainedSurrogate& model, const Matrix& x, const Matrix& y) {
  if (x.rows() == 0) throw ValidationError("cannot evaluate an empty split", {"split"});
  return evaluate_predictions(y, model.predict(x));
}

Metrics evaluate(const TrainedSurrogate& model, const dataset::CampaignDataset& ds, dataset::Split split) {
  const auto d = dataset::select(ds, split);
  return evaluate(model, d.x, d.y);
}

json evaluation_report(const TrainedSurrogate& model, const dataset::CampaignDataset& ds, dataset::Split split) {
  const auto d = dataset::select(ds, split);
  const Metrics m = evaluate(model, d.x, d.y);
  const auto start = std::chrono::steady_clock::now();
  for (Eigen::Index r = 0; r < d.x.rows(); ++r) {
    const Matrix row = d.x.row(r);
    (void)model.predict(row);
  }
  const double us =
      std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count() /
      static_cast<double>(d.x.rows());
  json per = json::object();
  for (std::size_t k = 0; k < m.per_output.size() && k < homogeneity::kNumResolutions; ++k) {
    const auto& o = m.per_output[k];
    per[io::format_double(homogeneity::kResolutionsMm[k])] = {{"mape", o.mape}, {"mse", o.mse}, {"r2", o.r2}};
  }
  return {{"family", to_string(model.family())},
          {"split", dataset::to_string(split)},
          {"rows", d.x.rows()},
          {"mape", m.mape},
          {"mse", m.mse},
          {"r2", m.r2},
          {"per_resolution", per},
          {"train_seconds", model.meta().train_seconds},
          {"predict_microseconds_per_sample", us}};
}

// ---- persistence ---------------------------------------------------------------

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix json_matrix(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows)) throw FormatError("matrix row count mismatch");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto v = data[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (v.size() != static_cast<std::size_t>(cols)) throw FormatError("matrix column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(c)];
  }
  return m;
}

json vector_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

Vector json_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json linear_json(const LinearModel& m) {
  return {{"coef", matrix_json(m.coef)}, {"intercept", vector_json(m.intercept)}, {"iterations", m.iterations}};
}

LinearModel json_linear(const json& j) {
  LinearModel m;
  m.coef = json_matrix(j.at("coef"));
  m.intercept = json_vector(j.at("intercept"));
  m.iterations = j.at("iterations").get<std::size_t>();
  if (m.intercept.size() != m.coef.cols()) throw FormatError("intercept size does not match coefficients");
  return m;
}

json model_json(const TrainedSurrogate::Model& model) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return nullptr;
        } else if constexpr (std::is_same_v<T, LinearModel>) {
          return linear_json(m);
        } else if constexpr (std::is_same_v<T, PolyModel>) {
          return {{"inputs", m.features.inputs()}, {"degree", m.features.degree()}, {"fit", linear_json(m.fit)}};
        } else if constexpr (std::is_same_v<T, BayesModel>) {
          json cov = json::array();
          for (const auto& c : m.covariance) cov.push_back(matrix_json(c));
          return {{"map", linear_json(m.map)},
                  {"alpha", vector_json(m.alpha)},
                  {"noise_variance", vector_json(m.noise_variance)},
                  {"feature_mean", vector_json(m.feature_mean)},
                  {"covariance", cov}};
        } else if constexpr (std::is_same_v<T, SvrModel>) {
          return {{"gamma", m.gamma},
                  {"support", matrix_json(m.support)},
                  {"coef", matrix_json(m.coef)},
                  {"bias", vector_json(m.bias)},
                  {"iterations", m.iterations}};
        } else if constexpr (std::is_same_v<T, ForestModel>) {
          json trees = json::array();
          for (const auto& t : m.trees) {
            std::vector<std::int32_t> feature, left, right;
            std::vector<double> threshold;
            for (const auto& n : t.nodes()) {
              feature.push_back(n.feature);
              threshold.push_back(n.threshold);
              left.push_back(n.left);
              right.push_back(n.right);
            }
            trees.push_back({{"outputs", t.outputs()},
                             {"feature", feature},
                             {"threshold", threshold},
                             {"left", left},
                             {"right", right},
                             {"values", t.values()}});
          }
          return {{"trees", trees}};
        } else {
          return {{"widths", m.widths()},
                  {"activation", to_string(m.activation())},
                  {"parameters", std::vector<double>(m.parameters().begin(), m.parameters().end())}};
        }
      },
      model);
}

TrainedSurrogate::Model json_model(Family family, const json& j) {
  switch (family) {
    case Family::linear: return json_linear(j);
    case Family::polynomial: {
      PolynomialFeatures f(j.at("inputs").get<std::size_t>(), j.at("degree").get<unsigned>());
      auto fit = json_linear(j.at("fit"));
      if (static_cast<std::size_t>(fit.coef.rows()) != f.size()) throw FormatError("polynomial coefficient count mismatch");
      return PolyModel{std::move(f), std::move(fit)};
    }
    case Family::bayesian: {
      BayesModel m;
      m.map = json_linear(j.at("map"));
      m.alpha = json_vector(j.at("alpha"));
      m.noise_variance = json_vector(j.at("noise_variance"));
      m.feature_mean = json_vector(j.at("feature_mean"));
      for (const auto& c : j.at("covariance")) m.covariance.push_back(json_matrix(c));
      if (m.covariance.size() != static_cast<std::size_t>(m.map.coef.cols()))
        throw FormatError("bayesian covariance count mismatch");
      return m;
    }
    case Family::svr: {
      SvrModel m;
      m.gamma = j.at("gamma").get<double>();
      m.support = json_matrix(j.at("support"));
      m.coef = json_matrix(j.at("coef"));
      m.bias = json_vector(j.at("bias"));
      m.iterations = j.at("iterations").get<std::vector<std::size_t>>();
      if (m.coef.rows() != m.support.rows() || m.coef.cols() != m.bias.size())
        throw FormatError("SVR support and coefficient shapes disagree");
      return m;
    }
    case Family::random_forest: {
      ForestModel m;
      for (const auto& t : j.at("trees")) {
        const auto feature = t.at("feature").get<std::vector<std::int32_t>>();
        const auto threshold = t.at("threshold").get<std::vector<double>>();
        const auto left = t.at("left").get<std::vector<std::int32_t>>();
        const auto right = t.at("right").get<std::vector<std::int32_t>>();
        if (threshold.size() != feature.size() || left.size() != feature.size() || right.size() != feature.size())
          throw FormatError("tree arrays differ in length");
        std::vector<TreeNode> nodes(feature.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = {feature[i], threshold[i], left[i], right[i]};
        m.trees.push_back(RegressionTree::from_parts(std::move(nodes), t.at("values").get<std::vector<double>>(),
                                                     t.at("outputs").get<std::size_t>()));
      }
      if (m.trees.empty()) throw FormatError("forest has no trees");
      return m;
    }
    case Family::mlp:
      return Mlp::from_parts(j.at("widths").get<std::vector<std::size_t>>(),
                             parse_activation(j.at("activation").get<std::string>()),
                             j.at("parameters").get<std::vector<double>>());
  }
  throw FormatError("unknown family");
}

json scale_json(const dataset::Standardizer& s) { return {{"mean", vector_json(s.mean())}, {"sd", vector_json(s.sd())}}; }

dataset::Standardizer json_scale(const json& j) {
  Vector mean = json_vector(j.at("mean")), sd = json_vector(j.at("sd"));
  if (mean.size() != sd.size()) throw FormatError("standardizer mean and sd sizes differ");
  return dataset::Standardizer(std::move(mean), std::move(sd));
}

}  // namespace

json to_json(const TrainedSurrogate& model) {
  if (!model.trained()) throw StateError("model is not trained");
  const auto& m = model.meta();
  return {{"format", kModelFormat},
          {"version", kModelFormatVersion},
          {"family", to_string(model.family())},
          {"spec", to_json(model.spec())},
          {"x_standardizer", scale_json(model.x_scale())},
          {"y_standardizer", scale_json(model.y_scale())},
          {"meta",
           {{"train_seconds", m.train_seconds},
            {"iterations", m.iterations},
            {"train_rows", m.train_rows},
            {"val_rows", m.val_rows}}},
          {"model", model_json(model.model())}};
}

TrainedSurrogate surrogate_from_json(const json& j, std::optional<Family> expected) {
  try {
    if (!j.is_object() || j.value("format", "") != kModelFormat) throw FormatError("not a surrogate model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw FormatError("unsupported model format version " + std::to_string(version) + " (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    const std::string fam = j.at("family").get<std::string>();
    Family family;
    try {
      family = parse_family(fam);
    } catch (const ValidationError&) {
      throw FormatError("unknown model family '" + fam + "'");
    }
    if (expected && *expected != family)
      throw FamilyMismatchError("model file holds a " + fam + " model, expected " + std::string(to_string(*expected)));
    ModelSpec spec = spec_from_json(j.at("spec"));
    if (spec.family != family) throw FormatError("model spec family disagrees with the header");
    TrainingMeta meta;
    const json& mj = j.at("meta");
    meta.train_seconds = mj.at("train_seconds").get<double>();
    meta.iterations = mj.at("iterations").get<std::size_t>();
    meta.train_rows = mj.at("train_rows").get<std::size_t>();
    meta.val_rows = mj.at("val_rows").get<std::size_t>();
    return TrainedSurrogate(std::move(spec), json_scale(j.at("x_standardizer")), json_scale(j.at("y_standardizer")),
                            json_model(family, j.at("model")), meta);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  } catch (const ValidationError& e) {
    throw FormatError(std::string("malformed model file: ") + e.what());
  }
}

void save(const TrainedSurrogate& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, to_json(model).dump());
}

TrainedSurrogate load(const std::filesystem::path& path, std::optional<Family> expected) {
  const std::string text = io::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("corrupt model file " + path.string() + ": " + e.what());
  }
  return surrogate_from_json(j, expected);
}

// ---- studies -------------------------------------------------------------------

std::vector<DegreeResult> degree_sweep(const Matrix& x, const Matrix& y, const Matrix& x_val, const Matrix& y_val,
                                       unsigned max_degree) {
  if (max_degree < 2) throw ValidationError("degree sweep needs max degree >= 2", {"max_degree"});
  std::vector<DegreeResult> out;
  ModelSpec spec;
  spec.family = Family::polynomial;
  for (unsigned d = 1; d <= max_degree; ++d) {
    DegreeResult r;
    r.degree = d;
    r.features = PolynomialFeatures::count(static_cast<std::size_t>(x.cols()), d);
    spec.polynomial.degree = d;
    try {
      const auto model = train(spec, x, y, x_val, y_val);
      r.train_mse = mean_squared_error(y, model.predict(x));
      r.val_mse = mean_squared_error(y_val, model.predict(x_val));
      if (!std::isfinite(r.train_mse) || !std::isfinite(r.val_mse)) throw NumericalError("non-finite error");
      r.ok = true;
    } catch (const NumericalError& e) {
      r.error = e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

void MlpSearchBounds::validate() const {
  if (min_layers < 1 || min_layers > max_layers) throw ValidationError("invalid hidden layer bounds", {"layers"});
  if (width_step == 0 || min_width < 1 || min_width > max_width)
    throw ValidationError("invalid width bounds", {"width"});
  if (activations.empty()) throw ValidationError("no activations to sample", {"activations"});
}

MlpSearchResult mlp_random_search(const MlpSearchBounds& bounds, std::size_t samples, const Matrix& x,
                                  const Matrix& y, const Matrix& x_val, const Matrix& y_val, std::uint64_t seed,
                                  const MlpConfig& base) {
  bounds.validate();
  if (samples == 0) throw ValidationError("random search needs at least one sample", {"samples"});
  rng::Engine eng(rng::derive(seed, {0x5EA7C4}));
  const std::size_t first = (bounds.min_width + bounds.width_step - 1) / bounds.width_step;
  const std::size_t last = bounds.max_width / bounds.width_step;
  if (first > last) throw ValidationError("no width multiple of the step lies in the bounds", {"width"});

  MlpSearchResult result;
  double best = std::numeric_limits<double>::infinity();
  const auto xs = dataset::Standardizer::fit(x), ys = dataset::Standardizer::fit(y);
  const Matrix z = xs.transform(x), t = ys.transform(y), zv = xs.transform(x_val), tv = ys.transform(y_val);
  for (std::size_t s = 0; s < samples; ++s) {
    MlpSearchEntry e;
    e.config = base;
    const std::size_t layers = bounds.min_layers + eng.below(bounds.max_layers - bounds.min_layers + 1);
    e.config.hidden.resize(layers);
    for (auto& w : e.config.hidden) w = (first + eng.below(last - first + 1)) * bounds.width_step;
    e.config.activation = bounds.activations[eng.below(bounds.activations.size())];
    try {
      const auto start = std::chrono::steady_clock::now();
      const auto r = train_mlp(z, t, zv, tv, e.config, rng::derive(seed, {s}));
      e.epochs = r.epochs;
      e.val_mse = r.best_epoch == 0 ? r.initial_val_loss : r.val_loss[r.best_epoch - 1];
      if (e.val_mse < best) {
        best = e.val_mse;
        result.best = e.config;
        result.best_index = s;
        ModelSpec spec;
        spec.family = Family::mlp;
        spec.mlp = e.config;
        spec.seed = rng::derive(seed, {s});
        TrainingMeta meta;
        meta.iterations = r.epochs;
        meta.train_rows = static_cast<std::size_t>(x.rows());
        meta.val_rows = static_cast<std::size_t>(x_val.rows());
        meta.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.model = TrainedSurrogate(spec, xs, ys, r.net, meta);
      }
    } catch (const NumericalError& err) {
      e.error = err.what();
      e.val_mse = std::numeric_limits<double>::infinity();
    }
    result.log.push_back(std::move(e));
  }
  if (!std::isfinite(best)) throw NumericalError("every sampled MLP configuration failed to train");
  return result;
}

}  // namespace nwb::surrogates
