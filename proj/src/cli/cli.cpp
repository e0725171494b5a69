#include "nwb/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "nwb/dataset.hpp"
#include "nwb/error.hpp"
#include "nwb/explorer/service.hpp"
#include "nwb/homogeneity.hpp"
#include "nwb/io.hpp"
#include "nwb/simd/kernels.hpp"
#include "nwb/surrogates/surrogate.hpp"
#include "nwb/version.hpp"

namespace nwb::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

/// JSON config files for CLI11. Top-level keys are long flag names of the
/// subcommand being run; a key equal to a subcommand name may hold an object
/// of that subcommand's flags instead. Explicit flags win over the file.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App& app) : app_(app) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("config file is not valid JSON: ") + e.what(), {"config"});
    }
    if (!j.is_object()) throw ValidationError("config file must hold a JSON object", {"config"});
    std::vector<std::string> parents;
    for (const CLI::App* sub : app_.get_subcommands()) parents.push_back(sub->get_name());
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (!parents.empty() && key == parents.front() && value.is_object()) {
        for (const auto& [k, v] : value.items()) items.push_back(item(parents, k, v));
      } else if (value.is_object() && app_.get_subcommand_no_throw(key) != nullptr) {
        continue;  // section of another subcommand
      } else {
        items.push_back(item(parents, key, value));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_float()) return io::format_double(v.get<double>());
    return v.dump();
  }

  static CLI::ConfigItem item(const std::vector<std::string>& parents, const std::string& key, const json& v) {
    CLI::ConfigItem it;
    it.parents = parents;
    it.name = key;
    if (v.is_array()) {
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    } else {
      it.inputs.push_back(scalar(v));
    }
    return it;
  }

  const CLI::App& app_;
};

struct ParamFlags {
  double sigma1 = ProcessParams{}.sigma1_mm;
  double sigma2 = ProcessParams{}.sigma2_mm;
  double a = ProcessParams{}.noise_amplitude;
  double v = ProcessParams{}.speed_ratio;
  double n = ProcessParams{}.spin_density_per_m;
  std::optional<double> step;
  bool extrapolate = false;

  void add(CLI::App* app, bool with_step) {
    app->add_option("--sigma1", sigma1, "Machine-direction lay-down standard deviation sigma1 [mm]")
        ->capture_default_str();
    app->add_option("--sigma2", sigma2, "Cross-direction lay-down standard deviation sigma2 [mm]")
        ->capture_default_str();
    app->add_option("--A", a, "Noise amplitude A [dimensionless]")->capture_default_str();
    app->add_option("--v", v, "Belt-to-fiber speed ratio v [dimensionless]")->capture_default_str();
    app->add_option("--n", n, "Spin positions per meter n [1/m]")->capture_default_str();
    if (with_step) app->add_option("--step", step, "Discretization step d_s along the fiber [m]");
    app->add_flag("--extrapolate", extrapolate, "Accept parameters outside the default ranges");
  }

  ProcessParams params() const {
    const auto p = ProcessParams::unchecked(sigma1, sigma2, a, v, n, step);
    if (!extrapolate) {
      const auto bad = p.violations();
      if (!bad.empty()) {
        static const std::map<std::string, std::string> flags{{"sigma1_mm", "--sigma1"}, {"sigma2_mm", "--sigma2"},
                                                              {"A", "--A"},              {"v", "--v"},
                                                              {"n_per_m", "--n"},        {"step_size_m", "--step"}};
        const ParamRanges ranges;
        std::string msg = "parameter out of range:";
        for (const auto& f : bad) {
          msg += " " + (flags.count(f) ? flags.at(f) : f);
          for (std::size_t i = 0; i < kNumFeatures; ++i)
            if (kFeatureNames[i] == f)
              msg += " (" + f + " must lie in [" + io::format_double(ranges[i].lo) + ", " +
                     io::format_double(ranges[i].hi) + "])";
        }
        throw ValidationError(msg, bad);
      }
    }
    return p;
  }
};

SampleWindow window_from(const std::string& text) { return SampleWindow::parse(text); }

json profile_json(const homogeneity::CVProfile& p) {
  json a = json::array();
  for (double v : p.values) a.push_back(v);
  return a;
}

json resolutions_json() {
  json a = json::array();
  for (double r : homogeneity::kResolutionsMm) a.push_back(r);
  return a;
}

std::optional<explorer::Objective> weights_from(const std::vector<double>& w) {
  if (w.empty()) return std::nullopt;
  if (w.size() != homogeneity::kNumResolutions)
    throw ValidationError("--weights needs exactly 7 values, one per resolution", {"weights"});
  explorer::Objective o;
  std::copy(w.begin(), w.end(), o.weights.begin());
  o.validate();
  return o;
}

ProcessParams params_from_list(const std::vector<double>& v, bool extrapolate, const char* flag) {
  if (v.size() != kNumFeatures)
    throw ValidationError(std::string(flag) + " needs 5 values: sigma1 sigma2 A v n", {flag});
  std::array<double, kNumFeatures> f{};
  std::copy(v.begin(), v.end(), f.begin());
  return ProcessParams::from_features(f, !extrapolate);
}

/// Splits rows by setting when the file carries no labels yet.
void ensure_split(dataset::CampaignDataset& ds, std::uint64_t seed) {
  const bool labeled = std::any_of(ds.rows.begin(), ds.rows.end(),
                                   [](const dataset::Row& r) { return r.ok() && r.split != dataset::Split::none; });
  if (!labeled) dataset::grouped_split(ds, seed);
}

void write_output(const std::optional<std::string>& path, const json& j, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  if (path) {
    io::write_file_atomic(*path, text);
  } else {
    out << text;
  }
}

// ---- simulate --------------------------------------------------------------------

struct SimulateCmd {
  ParamFlags params;
  std::string window = "50x50";
  std::uint64_t seed = 1;
  std::string out_dir;
  double image_resolution = homogeneity::kQuantumMm;
  unsigned workers = 1;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("simulate", "Simulate one virtual sample; write its image and CV profile");
    params.add(c, true);
    c->add_option("--window", window, "Sample window MACHINExCROSS [mm]")->capture_default_str();
    c->add_option("--seed", seed, "Random seed")->capture_default_str();
    c->add_option("--out", out_dir, "Output directory for sample.pgm and profile.json")->required();
    c->add_option("--image-resolution", image_resolution, "Image pixel size, a multiple of 0.5 [mm]")
        ->capture_default_str();
    c->add_option("--workers", workers, "Worker threads [count]")->capture_default_str()->check(CLI::PositiveNumber);
  }

  int run(std::ostream& out, std::ostream& err) const {
    const ProcessParams p = params.params();
    const SampleWindow w = window_from(window);
    if (!homogeneity::QuantumCounts::aggregable(image_resolution))
      throw ValidationError("--image-resolution must be a positive multiple of 0.5 mm", {"image_resolution"});
    laydown::RunOptions opts;
    opts.workers = workers;
    const auto m = homogeneity::simulate_and_measure(p, w, seed, {}, opts);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    homogeneity::render_image(m.counts.to_grid(image_resolution, m.point_mass), dir / "sample.pgm");
    json j = {{"params", explorer::params_json(p)},
              {"window", w.to_string()},
              {"seed", seed},
              {"resolutions_mm", resolutions_json()},
              {"cv", profile_json(m.profile)},
              {"basis_weight", m.basis_weight},
              {"retained_points", m.retained_points}};
    if (p.step_size_m) j["params"]["step_size_m"] = *p.step_size_m;
    io::write_file_atomic(dir / "profile.json", j.dump(2) + "\n");
    out << j.dump(2) << "\n";
    err << "wrote " << (dir / "sample.pgm").string() << " and " << (dir / "profile.json").string() << "\n";
    return kOk;
  }
};

// ---- campaign --------------------------------------------------------------------

struct CampaignCmd {
  std::string design = "lhs";
  std::size_t k = 100;
  std::uint64_t design_seed = 1;
  std::vector<std::size_t> levels{5, 5, 5, 5, 5};
  std::size_t replicates = 5;
  std::string window = "50x50";
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string out_path;
  std::size_t checkpoint_every = 25;
  std::vector<std::string> range_overrides;
  bool quiet = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("campaign", "Simulate a design of settings and write the dataset CSV");
    c->add_option("--design", design, "Design: lhs or grid")
        ->capture_default_str()
        ->check(CLI::IsMember({"lhs", "grid"}));
    c->add_option("--k", k, "Number of LHS settings [count]")->capture_default_str();
    c->add_option("--design-seed", design_seed, "Seed of the LHS design")->capture_default_str();
    c->add_option("--levels", levels, "Grid levels per parameter (5 values) [count]")
        ->expected(5)
        ->capture_default_str();
    c->add_option("--replicates", replicates, "Simulations per setting [count]")->capture_default_str();
    c->add_option("--window", window, "Sample window MACHINExCROSS [mm]")->capture_default_str();
    c->add_option("--seed", seed, "Campaign seed")->capture_default_str();
    c->add_option("--workers", workers, "Parallel simulations [count]")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--out", out_path, "Output CSV; an existing file is resumed")->required();
    c->add_option("--checkpoint-every", checkpoint_every, "Rows between checkpoints [count]")->capture_default_str();
    c->add_option("--range", range_overrides, "Narrow a design range, e.g. --range v=0.1:0.2 (repeatable)");
    c->add_flag("--quiet", quiet, "No progress on stderr");
  }

  ParamRanges ranges() const {
    ParamRanges r;
    for (const auto& spec : range_overrides) {
      const auto eq = spec.find('=');
      const auto colon = spec.find(':', eq == std::string::npos ? 0 : eq);
      if (eq == std::string::npos || colon == std::string::npos)
        throw ValidationError("--range expects NAME=LO:HI, got '" + spec + "'", {"range"});
      const std::size_t i = explorer::parse_parameter(spec.substr(0, eq));
      const Interval iv{io::parse_double(spec.substr(eq + 1, colon - eq - 1)), io::parse_double(spec.substr(colon + 1))};
      const Interval full = ParamRanges{}[i];
      if (!(iv.lo <= iv.hi) || !full.contains(iv.lo) || !full.contains(iv.hi))
        throw ValidationError("--range " + spec + " must be a subinterval of [" + io::format_double(full.lo) + ", " +
                                  io::format_double(full.hi) + "]",
                              {std::string(kFeatureNames[i])});
      r[i] = iv;
    }
    return r;
  }

  int run(std::ostream& out, std::ostream& err) const {
    std::vector<ProcessParams> points;
    std::string label;
    if (design == "lhs") {
      if (k == 0) throw ValidationError("--k must be positive", {"k"});
      points = dataset::latin_hypercube(ranges(), k, design_seed);
      label = "lhs " + std::to_string(k) + " seed " + std::to_string(design_seed);
      for (const auto& r : range_overrides) label += " " + r;
    } else {
      std::array<std::size_t, kNumFeatures> lv{};
      std::copy(levels.begin(), levels.end(), lv.begin());
      points = dataset::expert_grid(ranges(), lv);
      label = "grid";
      for (auto l : lv) label += " " + std::to_string(l);
      for (const auto& r : range_overrides) label += " " + r;
    }
    dataset::CampaignOptions o;
    o.window = window_from(window);
    o.replicates = replicates;
    o.seed = seed;
    o.workers = workers;
    o.output = fs::path(out_path);
    o.checkpoint_every = checkpoint_every;
    o.design = label;
    if (!quiet)
      o.progress = [&err](std::size_t done, std::size_t total) { err << "\r" << done << "/" << total << std::flush; };
    const auto ds = dataset::run_campaign(points, o);
    if (!quiet) err << "\n";
    const auto failed = static_cast<std::size_t>(
        std::count_if(ds.rows.begin(), ds.rows.end(), [](const dataset::Row& r) { return !r.ok(); }));
    out << json{{"csv", out_path},
                {"manifest", dataset::manifest_path(out_path).string()},
                {"settings", points.size()},
                {"rows", ds.rows.size()},
                {"failed", failed}}
                   .dump(2)
        << "\n";
    return kOk;
  }
};

// ---- train -----------------------------------------------------------------------

struct TrainCmd {
  std::string data;
  std::string family = "mlp";
  std::optional<std::string> model_config;
  std::uint64_t split_seed = 1;
  std::string out_path;
  std::optional<std::string> metrics_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> degree;
  std::optional<std::string> regularization;
  std::optional<double> strength;
  std::optional<std::size_t> trees;
  std::optional<std::vector<std::size_t>> hidden;
  std::optional<std::string> activation;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;
  std::optional<double> lr;
  std::optional<std::size_t> patience;
  std::optional<unsigned> workers;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Fit a surrogate on a dataset CSV and report validation metrics");
    c->add_option("--data", data, "Dataset CSV")->required();
    c->add_option("--family", family, "Regression family")
        ->capture_default_str()
        ->check(CLI::IsMember({"linear", "svr", "polynomial", "bayesian", "random_forest", "mlp"}));
    c->add_option("--model-config", model_config, "JSON file with model settings (flags below override it)");
    c->add_option("--split-seed", split_seed, "Seed of the grouped split for unlabeled data")->capture_default_str();
    c->add_option("--out", out_path, "Model file to write")->required();
    c->add_option("--metrics", metrics_path, "Write the metrics JSON here instead of stdout");
    c->add_option("--seed", seed, "Model seed");
    c->add_option("--degree", degree, "Polynomial degree");
    c->add_option("--regularization", regularization, "Linear regularization: none, l1, l2, elastic_net");
    c->add_option("--strength", strength, "Regularization strength");
    c->add_option("--trees", trees, "Random forest size [trees]");
    c->add_option("--hidden", hidden, "MLP hidden widths, e.g. --hidden 64 64 [units]");
    c->add_option("--activation", activation, "MLP hidden activation: relu, sigmoid, tanh, linear");
    c->add_option("--epochs", epochs, "MLP maximum epochs");
    c->add_option("--batch", batch, "MLP batch size [rows]");
    c->add_option("--lr", lr, "MLP learning rate");
    c->add_option("--patience", patience, "MLP early-stopping patience [epochs]");
    c->add_option("--workers", workers, "Random forest worker threads [count]");
  }

  surrogates::ModelSpec spec() const {
    surrogates::ModelSpec s;
    if (model_config) s = surrogates::spec_from_json(json::parse(io::read_file(*model_config)), s);
    s.family = surrogates::parse_family(family);
    if (seed) s.seed = *seed;
    if (degree) s.polynomial.degree = *degree;
    if (regularization) s.linear.regularization = surrogates::parse_regularization(*regularization);
    if (strength) s.linear.strength = *strength;
    if (trees) s.random_forest.trees = *trees;
    if (hidden) s.mlp.hidden = *hidden;
    if (activation) s.mlp.activation = surrogates::parse_activation(*activation);
    if (epochs) s.mlp.max_epochs = *epochs;
    if (batch) s.mlp.batch_size = *batch;
    if (lr) s.mlp.learning_rate = *lr;
    if (patience) s.mlp.patience = *patience;
    if (workers) s.random_forest.workers = *workers;
    s.validate();
    return s;
  }

  int run(std::ostream& out, std::ostream& err) const {
    const auto s = spec();
    auto ds = dataset::read_csv(data);
    ensure_split(ds, split_seed);
    err << "training " << surrogates::to_string(s.family) << " on " << data << "\n";
    const auto model = surrogates::train(s, ds);
    surrogates::save(model, out_path);
    json report = {{"model", out_path},
                   {"spec", surrogates::to_json(s)},
                   {"val", surrogates::evaluation_report(model, ds, dataset::Split::val)}};
    if (!dataset::select(ds, dataset::Split::test).groups.empty())
      report["test"] = surrogates::evaluation_report(model, ds, dataset::Split::test);
    write_output(metrics_path, report, out);
    return kOk;
  }
};

// ---- evaluate --------------------------------------------------------------------

void print_table(const json& report, std::ostream& out) {
  out << "family\t" << report["family"].get<std::string>() << "\n";
  out << "split\t" << report["split"].get<std::string>() << "\n";
  out << "rows\t" << report["rows"] << "\n";
  out << "resolution_mm\tmape_percent\tmse\tr2\n";
  for (const auto& [res, m] : report["per_resolution"].items())
    out << res << "\t" << io::format_double(m["mape"]) << "\t" << io::format_double(m["mse"]) << "\t"
        << io::format_double(m["r2"].is_null() ? std::nan("") : m["r2"].get<double>()) << "\n";
  out << "all\t" << io::format_double(report["mape"]) << "\t" << io::format_double(report["mse"]) << "\t"
      << io::format_double(report["r2"].is_null() ? std::nan("") : report["r2"].get<double>()) << "\n";
  out << "train_seconds\t" << io::format_double(report["train_seconds"]) << "\n";
  out << "predict_us_per_sample\t" << io::format_double(report["predict_microseconds_per_sample"]) << "\n";
}

struct EvaluateCmd {
  std::string model;
  std::string data;
  std::string split = "test";
  std::uint64_t split_seed = 1;
  std::optional<std::string> family;
  std::string format = "json";

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("evaluate", "Report MAPE, MSE and R2 of a saved surrogate on a dataset split");
    c->add_option("--model", model, "Model file")->required();
    c->add_option("--data", data, "Dataset CSV")->required();
    c->add_option("--split", split, "Split: train, val, test or all")
        ->capture_default_str()
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    c->add_option("--split-seed", split_seed, "Seed of the grouped split for unlabeled data")->capture_default_str();
    c->add_option("--family", family, "Fail unless the model has this family");
    c->add_option("--format", format, "Output format: json or table")
        ->capture_default_str()
        ->check(CLI::IsMember({"json", "table"}));
  }

  int run(std::ostream& out, std::ostream&) const {
    std::optional<surrogates::Family> expected;
    if (family) expected = surrogates::parse_family(*family);
    const auto m = surrogates::load(model, expected);
    auto ds = dataset::read_csv(data);
    const dataset::Split s = split == "all" ? dataset::Split::none : dataset::parse_split(split);
    if (s != dataset::Split::none) ensure_split(ds, split_seed);
    if (dataset::select(ds, s).groups.empty())
      throw ValidationError("split '" + split + "' of " + data + " has no rows", {"split"});
    json report = surrogates::evaluation_report(m, ds, s);
    if (s == dataset::Split::none) report["split"] = "all";
    if (format == "table") {
      print_table(report, out);
    } else {
      out << report.dump(2) << "\n";
    }
    return kOk;
  }
};

// ---- explore / sensitivity -------------------------------------------------------

struct ExploreCmd {
  std::string model;
  std::string strategy = "random";
  std::size_t budget = 1000;
  std::uint64_t seed = 1;
  std::vector<std::size_t> levels{5, 5, 5, 5, 5};
  std::vector<double> start;
  std::vector<double> weights;
  std::size_t top = 10;
  bool extrapolate = false;
  std::string format = "json";

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("explore", "Search the parameter space with a surrogate; print ranked settings");
    c->add_option("--model", model, "Model file")->required();
    c->add_option("--strategy", strategy, "grid, random or local")
        ->capture_default_str()
        ->check(CLI::IsMember({"grid", "random", "local"}));
    c->add_option("--budget", budget, "Maximum surrogate evaluations [count]")->capture_default_str();
    c->add_option("--seed", seed, "Seed of the random strategy")->capture_default_str();
    c->add_option("--levels", levels, "Grid levels per parameter (5 values) [count]")
        ->expected(5)
        ->capture_default_str();
    c->add_option("--start", start, "Local search start: sigma1 [mm] sigma2 [mm] A v n [1/m]")->expected(5);
    c->add_option("--weights", weights, "Objective weights, one per resolution (7 values)")->expected(7);
    c->add_option("--top", top, "Distinct settings to print [count]")->capture_default_str();
    c->add_flag("--extrapolate", extrapolate, "Accept a start outside the default ranges");
    c->add_option("--format", format, "Output format: json or table")
        ->capture_default_str()
        ->check(CLI::IsMember({"json", "table"}));
  }

  int run(std::ostream& out, std::ostream&) const {
    explorer::ExploreRequest req;
    req.strategy = explorer::parse_strategy(strategy);
    req.budget = budget;
    req.seed = seed;
    std::copy(levels.begin(), levels.end(), req.levels.begin());
    if (!start.empty()) req.start = params_from_list(start, extrapolate, "--start");
    if (auto o = weights_from(weights)) req.objective = *o;
    const auto m = surrogates::load(model);
    const auto res = explorer::explore(explorer::predictor_for(m), req);
    const auto list = explorer::shortlist(res.settings, std::max<std::size_t>(top, 1));
    if (format == "table") {
      out << "rank\tsigma1_mm\tsigma2_mm\tA\tv\tn_per_m\tobjective\n";
      for (std::size_t i = 0; i < list.settings.size(); ++i) {
        const auto& s = list.settings[i];
        out << i + 1;
        for (double f : s.params.features()) out << "\t" << io::format_double(f);
        out << "\t" << io::format_double(s.objective) << "\n";
      }
      return kOk;
    }
    json results = json::array();
    for (std::size_t i = 0; i < list.settings.size(); ++i) {
      const auto& s = list.settings[i];
      results.push_back({{"rank", i + 1},
                         {"params", explorer::params_json(s.params)},
                         {"cv", profile_json(s.predicted)},
                         {"objective", s.objective}});
    }
    out << json{{"strategy", strategy},
                {"evaluations", res.evaluations},
                {"converged", res.converged},
                {"resolutions_mm", resolutions_json()},
                {"results", results}}
                   .dump(2)
        << "\n";
    return kOk;
  }
};

struct SensitivityCmd {
  std::string model;
  std::string parameter;
  ParamFlags at;
  std::size_t samples = 21;
  std::vector<double> weights;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("sensitivity", "Sweep one parameter across its range with the others fixed");
    c->add_option("--model", model, "Model file")->required();
    c->add_option("--parameter", parameter, "Swept parameter: sigma1_mm, sigma2_mm, A, v or n_per_m")->required();
    at.add(c, false);
    c->add_option("--samples", samples, "Sweep points including both endpoints [count]")->capture_default_str();
    c->add_option("--weights", weights, "Objective weights, one per resolution (7 values)")->expected(7);
  }

  int run(std::ostream& out, std::ostream&) const {
    const auto idx = explorer::parse_parameter(parameter);
    const ProcessParams p = at.params();
    const explorer::Objective obj = weights_from(weights).value_or(explorer::Objective{});
    const auto m = surrogates::load(model);
    const auto sweep = explorer::sensitivity(explorer::predictor_for(m), p, idx, samples, obj);
    json cv = json::array();
    for (const auto& pr : sweep.profiles) cv.push_back(profile_json(pr));
    out << json{{"parameter", kFeatureNames[idx]},
                {"at", explorer::params_json(p)},
                {"values", sweep.values},
                {"objective", sweep.objective},
                {"resolutions_mm", resolutions_json()},
                {"cv", cv}}
                   .dump(2)
        << "\n";
    return kOk;
  }
};

// ---- serve -----------------------------------------------------------------------

struct ServeCmd {
  std::optional<std::string> model;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string store = "explorer_store";
  std::optional<std::string> static_dir;
  std::string window = "50x50";
  std::size_t queue_depth = 16;
  unsigned workers = 1;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("serve", "Run the explorer HTTP API (blocks until interrupted)");
    c->add_option("--model", model, "Model file; without one prediction endpoints answer 503");
    c->add_option("--host", host, "Bind address")->capture_default_str();
    c->add_option("--port", port, "TCP port, 0 picks a free one")->capture_default_str()->check(CLI::Range(0, 65535));
    c->add_option("--store", store, "Candidate store directory")->capture_default_str();
    c->add_option("--static", static_dir, "Directory of the web UI bundle served at /");
    c->add_option("--window", window, "Window of validation simulations MACHINExCROSS [mm]")->capture_default_str();
    c->add_option("--queue-depth", queue_depth, "Maximum queued simulations [jobs]")->capture_default_str();
    c->add_option("--workers", workers, "Threads per validation simulation [count]")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }

  int run(std::ostream& out, std::ostream& err) const {
    explorer::ServiceConfig cfg;
    cfg.store_dir = store;
    if (static_dir) cfg.static_dir = fs::path(*static_dir);
    cfg.window = window_from(window);
    cfg.queue_depth = queue_depth;
    std::optional<surrogates::TrainedSurrogate> m;
    explorer::Predictor pred;
    if (model) {
      m = surrogates::load(*model);
      pred = explorer::predictor_for(*m);
    } else {
      err << "no model loaded; prediction endpoints will answer 503\n";
    }
    explorer::ExplorerService service(pred, cfg, explorer::laydown_simulation({}, workers));
    explorer::HttpServer server(service);
    const int bound = server.start(host, port);
    out << json{{"host", host}, {"port", bound}}.dump() << "\n" << std::flush;
    err << "listening on http://" << host << ":" << bound << "\n";
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    int sig = 0;
    sigwait(&set, &sig);
    err << "shutting down\n";
    server.stop();
    return kOk;
  }
};

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return kValidation;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e)) return kIo;
  if (dynamic_cast<const json::exception*>(&e)) return kValidation;
  return kRuntime;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Virtual spunbond nonwoven workbench"};
  app.name("nwb");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));
  app.config_formatter(std::make_shared<JsonConfig>(app));
  app.set_config("--config", "", "JSON file of flag values; explicit flags override it");
  app.footer("Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 file error.\n"
             "SIMD kernels: " + std::string(simd::to_string(simd::active_isa())) + " (NWB_SIMD=scalar forces the reference path)");

  SimulateCmd simulate;
  CampaignCmd campaign;
  TrainCmd train;
  EvaluateCmd evaluate;
  ExploreCmd explore;
  SensitivityCmd sensitivity;
  ServeCmd serve;
  simulate.add(app);
  campaign.add(app);
  train.add(app);
  evaluate.add(app);
  explore.add(app);
  sensitivity.add(app);
  serve.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  } catch (const std::exception& e) {
    err << "nwb: " << e.what() << "\n";
    return exit_code_for(e);
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "simulate") return simulate.run(out, err);
    if (name == "campaign") return campaign.run(out, err);
    if (name == "train") return train.run(out, err);
    if (name == "evaluate") return evaluate.run(out, err);
    if (name == "explore") return explore.run(out, err);
    if (name == "sensitivity") return sensitivity.run(out, err);
    return serve.run(out, err);
  } catch (const std::exception& e) {
    err << "nwb: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace nwb::cli
