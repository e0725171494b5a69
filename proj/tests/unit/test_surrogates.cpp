#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "nwb/error.hpp"
#include "nwb/io.hpp"
#include "nwb/rng.hpp"
#include "nwb/surrogates/surrogate.hpp"

using namespace nwb;
using namespace nwb::surrogates;
using homogeneity::CVProfile;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "nwb_test_surrogates";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Smooth positive profile with a little replicate noise.
CVProfile synthetic(const ProcessParams& p, const SampleWindow&, std::uint64_t seed) {
  rng::Engine e(seed);
  const double s = (p.sigma1_mm + p.sigma2_mm) / 100.0;
  const double a = p.noise_amplitude / 50.0;
  const double d = std::log(p.spin_density_per_m) / 10.0;
  CVProfile out;
  for (std::size_t k = 0; k < out.values.size(); ++k)
    out.values[k] = (0.2 + a * s + 0.3 * p.speed_ratio * d) / (1.0 + 0.5 * static_cast<double>(k)) *
                    (1.0 + 0.02 * (e.uniform() - 0.5));
  return out;
}

const dataset::CampaignDataset& synthetic_dataset() {
  static const dataset::CampaignDataset ds = [] {
    dataset::CampaignOptions o;
    o.replicates = 2;
    auto d = dataset::run_campaign(dataset::latin_hypercube(ParamRanges{}, 200, 3), o, synthetic);
    dataset::grouped_split(d, 4);
    return d;
  }();
  return ds;
}

ModelSpec small_spec(Family f) {
  ModelSpec s;
  s.family = f;
  s.polynomial.degree = 2;
  s.random_forest.trees = 20;
  s.mlp.hidden = {16, 16};
  s.mlp.max_epochs = 30;
  s.seed = 11;
  return s;
}

}  // namespace

TEST_CASE("family names round trip") {
  for (auto f : kFamilies) CHECK(parse_family(to_string(f)) == f);
  CHECK_THROWS_AS(parse_family("gp"), ValidationError);
}

TEST_CASE("every family trains, predicts deterministically and round trips through a file") {
  const auto& ds = synthetic_dataset();
  const auto test = dataset::select(ds, dataset::Split::test);
  for (auto f : kFamilies) {
    CAPTURE(to_string(f));
    const TrainedSurrogate m = train(small_spec(f), ds);
    CHECK(m.trained());
    CHECK(m.family() == f);
    CHECK(m.meta().train_rows == dataset::select(ds, dataset::Split::train).x.rows());
    const Matrix p1 = m.predict(test.x), p2 = m.predict(test.x);
    CHECK(p1 == p2);
    CHECK(p1.cols() == 7);

    const ProcessParams params = ds.rows.front().params;
    const CVProfile one = m.predict(params);
    Matrix row(1, 5);
    for (int i = 0; i < 5; ++i) row(0, i) = params.features()[static_cast<std::size_t>(i)];
    for (int k = 0; k < 7; ++k) CHECK(one.values[static_cast<std::size_t>(k)] == m.predict(row)(0, k));

    const auto path = scratch(std::string(to_string(f)) + ".json");
    save(m, path);
    const TrainedSurrogate back = load(path, f);
    CHECK((back.predict(test.x) - p1).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(back.spec().seed == m.spec().seed);
    CHECK(back.meta().iterations == m.meta().iterations);

    const Metrics met = evaluate(m, ds, dataset::Split::test);
    CHECK(met.mse >= 0.0);
    CHECK(met.r2 <= 1.0);
  }
}

TEST_CASE("surrogates fit the synthetic response") {
  const auto& ds = synthetic_dataset();
  for (auto f : {Family::polynomial, Family::mlp, Family::svr, Family::random_forest}) {
    CAPTURE(to_string(f));
    ModelSpec s = small_spec(f);
    s.mlp.max_epochs = 300;
    const Metrics m = evaluate(train(s, ds), ds, dataset::Split::test);
    CHECK(m.r2 > 0.8);
  }
}

TEST_CASE("standardizer is fitted on the training split only") {
  const auto& ds = synthetic_dataset();
  const auto tr = dataset::select(ds, dataset::Split::train);
  const TrainedSurrogate m = train(small_spec(Family::linear), ds);
  CHECK((m.x_scale().mean() - Vector(tr.x.colwise().mean().transpose())).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((m.y_scale().mean() - Vector(tr.y.colwise().mean().transpose())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("training preconditions") {
  const auto& ds = synthetic_dataset();
  const auto tr = dataset::select(ds, dataset::Split::train);
  CHECK_THROWS_AS(train(small_spec(Family::linear), tr.x, tr.y, Matrix(0, 5), Matrix(0, 7)), ValidationError);
  dataset::CampaignDataset unsplit = ds;
  for (auto& r : unsplit.rows) r.split = dataset::Split::none;
  CHECK_THROWS_AS(train(small_spec(Family::linear), unsplit), ValidationError);
  ModelSpec bad = small_spec(Family::svr);
  bad.svr.c = -1.0;
  CHECK_THROWS_AS(train(bad, ds), ValidationError);
}

TEST_CASE("untrained and unsupported operations") {
  const TrainedSurrogate empty;
  CHECK_FALSE(empty.trained());
  CHECK_THROWS_AS(empty.predict(ProcessParams{}), StateError);
  CHECK_THROWS_AS(to_json(empty), StateError);

  const auto& ds = synthetic_dataset();
  const auto test = dataset::select(ds, dataset::Split::test);
  const TrainedSurrogate lin = train(small_spec(Family::linear), ds);
  CHECK_THROWS_AS(lin.predictive_variance(test.x), StateError);
  CHECK_THROWS_AS(lin.predict(Matrix(2, 4)), ValidationError);

  const TrainedSurrogate bayes = train(small_spec(Family::bayesian), ds);
  const Matrix var = bayes.predictive_variance(test.x);
  CHECK(var.rows() == test.x.rows());
  CHECK((var.array() > 0.0).all());
}

TEST_CASE("model file errors") {
  const auto& ds = synthetic_dataset();
  const TrainedSurrogate rf = train(small_spec(Family::random_forest), ds);
  const auto path = scratch("rf.json");
  save(rf, path);

  CHECK_THROWS_AS(load(path, Family::mlp), FamilyMismatchError);
  CHECK_NOTHROW(load(path, Family::random_forest));
  CHECK_NOTHROW(load(path));

  const std::string text = io::read_file(path);
  const auto cut = scratch("truncated.json");
  io::write_file_atomic(cut, text.substr(0, text.size() / 2));
  try {
    (void)load(cut);
    FAIL("truncated file accepted");
  } catch (const FamilyMismatchError&) {
    FAIL("wrong error type");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("corrupt") != std::string::npos);
  }

  nlohmann::json j = nlohmann::json::parse(text);
  j["version"] = kModelFormatVersion + 1;
  CHECK_THROWS_AS(surrogate_from_json(j), FormatError);
  j = nlohmann::json::parse(text);
  j["format"] = "something-else";
  CHECK_THROWS_AS(surrogate_from_json(j), FormatError);
  j = nlohmann::json::parse(text);
  j["model"]["trees"][0]["left"][0] = 0;
  CHECK_THROWS_AS(surrogate_from_json(j), FormatError);
  j = nlohmann::json::parse(text);
  j["model"].erase("trees");
  CHECK_THROWS_AS(surrogate_from_json(j), FormatError);
  CHECK_THROWS_AS(load(scratch("missing.json")), IoError);
}

TEST_CASE("model spec json merges over defaults and rejects unknown keys") {
  ModelSpec s = small_spec(Family::svr);
  s.linear.regularization = Regularization::elastic_net;
  s.mlp.activation = Activation::tanh;
  const ModelSpec back = spec_from_json(to_json(s));
  CHECK(to_json(back) == to_json(s));

  const ModelSpec merged = spec_from_json(nlohmann::json::parse(R"({"family":"mlp","mlp":{"hidden":[8,4]}})"));
  CHECK(merged.family == Family::mlp);
  CHECK(merged.mlp.hidden == std::vector<std::size_t>{8, 4});
  CHECK(merged.mlp.learning_rate == 1e-3);
  CHECK(merged.svr.c == 10.0);

  CHECK_THROWS_AS(spec_from_json(nlohmann::json::parse(R"({"mlp":{"layers":3}})")), ValidationError);
  CHECK_THROWS_AS(spec_from_json(nlohmann::json::parse(R"({"svr":{"c":"big"}})")), ValidationError);
  CHECK_THROWS_AS(spec_from_json(nlohmann::json::parse(R"({"family":"gp"})")), ValidationError);
  CHECK_THROWS_AS(spec_from_json(nlohmann::json::parse(R"({"mlp":{"hidden":[8,-1]}})")), ValidationError);
}

TEST_CASE("default MLP architecture") {
  const MlpConfig c;
  CHECK(c.hidden == std::vector<std::size_t>{256, 512, 512, 256, 768});
  CHECK(c.activation == Activation::relu);
  CHECK(c.learning_rate == 1e-3);
  const ModelSpec s;
  CHECK(s.svr.c == 10.0);
  CHECK(s.svr.epsilon == 0.1);
  CHECK(s.svr.gamma == 0.2);
}

TEST_CASE("evaluation report") {
  const auto& ds = synthetic_dataset();
  const TrainedSurrogate m = train(small_spec(Family::polynomial), ds);
  const auto r = evaluation_report(m, ds, dataset::Split::test);
  for (const char* k : {"family", "split", "mape", "mse", "r2", "per_resolution", "train_seconds",
                        "predict_microseconds_per_sample"})
    CHECK(r.contains(k));
  CHECK(r["family"] == "polynomial");
  CHECK(r["split"] == "test");
  CHECK(r["per_resolution"].size() == 7);
  CHECK(r["per_resolution"].contains("0.5"));
  CHECK(r["per_resolution"].contains("50"));
  CHECK(r["predict_microseconds_per_sample"].get<double>() > 0.0);
  const Metrics direct = evaluate(m, ds, dataset::Split::test);
  CHECK(r["mape"].get<double>() == direct.mape);
}

TEST_CASE("degree sweep on quadratic data") {
  rng::Engine e(70);
  Matrix x(400, 5), y(400, 7);
  for (int i = 0; i < 400; ++i) {
    for (int j = 0; j < 5; ++j) x(i, j) = e.uniform(-1.0, 1.0);
    for (int k = 0; k < 7; ++k)
      y(i, k) = 1.0 + x(i, k % 5) * x(i, (k + 1) % 5) + 0.5 * x(i, 2) + 0.05 * e.uniform(-1.0, 1.0);
  }
  const auto sweep = degree_sweep(x.topRows(300), y.topRows(300), x.bottomRows(100), y.bottomRows(100), 6);
  REQUIRE(sweep.size() == 6);
  CHECK(sweep[0].ok);
  CHECK(sweep[1].ok);
  CHECK(sweep[0].train_mse > sweep[1].train_mse);
  for (std::size_t d = 1; d < sweep.size() && sweep[d].ok; ++d)
    CHECK(sweep[d].train_mse <= sweep[d - 1].train_mse * (1.0 + 1e-9));
  // 300 rows cannot determine the 461 degree-6 coefficients.
  CHECK_FALSE(sweep[5].ok);
  CHECK_FALSE(sweep[5].error.empty());
  CHECK(sweep[5].features == 461);
  CHECK_THROWS_AS(degree_sweep(x, y, x, y, 1), ValidationError);
}

TEST_CASE("MLP random search") {
  const auto& ds = synthetic_dataset();
  const auto tr = dataset::select(ds, dataset::Split::train);
  const auto va = dataset::select(ds, dataset::Split::val);
  MlpSearchBounds b;
  b.max_width = 64;
  MlpConfig base;
  base.max_epochs = 15;

  const auto one = mlp_random_search(b, 1, tr.x, tr.y, va.x, va.y, 3, base);
  REQUIRE(one.log.size() == 1);
  CHECK(one.best.hidden == one.log[0].config.hidden);
  CHECK(one.best_index == 0);
  CHECK(one.model.trained());

  const auto many = mlp_random_search(b, 9, tr.x, tr.y, va.x, va.y, 4, base);
  REQUIRE(many.log.size() == 9);
  std::vector<double> vals;
  for (const auto& e : many.log) {
    CHECK(e.config.hidden.size() >= 1);
    CHECK(e.config.hidden.size() <= 5);
    for (auto w : e.config.hidden) {
      CHECK(w >= 8);
      CHECK(w <= 64);
      CHECK(w % 8 == 0);
    }
    vals.push_back(e.val_mse);
  }
  std::sort(vals.begin(), vals.end());
  CHECK(many.log[many.best_index].val_mse == vals.front());
  CHECK(vals.front() <= vals[vals.size() / 2]);
  CHECK(many.model.spec().mlp.hidden == many.best.hidden);

  CHECK_THROWS_AS(mlp_random_search(b, 0, tr.x, tr.y, va.x, va.y, 3, base), ValidationError);
  b.min_width = 2000;
  CHECK_THROWS_AS(mlp_random_search(b, 1, tr.x, tr.y, va.x, va.y, 3, base), ValidationError);
}
