#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nwb/cli.hpp"
#include "nwb/dataset.hpp"
#include "nwb/io.hpp"
#include "nwb/rng.hpp"

using namespace nwb;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result nwb_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nwb");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "nwb_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t data_lines(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n - 1;  // header
}

// A dataset whose CVs are an exact affine function of the parameters.
fs::path affine_dataset(const fs::path& dir, double noise) {
  auto sim = [noise](const ProcessParams& p, const SampleWindow&, std::uint64_t seed) {
    rng::Engine e(seed);
    homogeneity::CVProfile out;
    for (std::size_t k = 0; k < 7; ++k)
      out.values[k] = 0.05 + 0.002 * p.sigma1_mm + 0.001 * p.noise_amplitude + 0.3 * p.speed_ratio +
                      1e-5 * p.spin_density_per_m + 0.01 * static_cast<double>(k) + noise * e.uniform();
    return out;
  };
  dataset::CampaignOptions o;
  o.replicates = 2;
  const auto path = dir / "data.csv";
  dataset::write_csv(dataset::run_campaign(dataset::latin_hypercube(ParamRanges{}, 60, 3), o, sim), path);
  return path;
}

}  // namespace

TEST_CASE("help lists every flag with units") {
  for (const std::string sub : {"simulate", "campaign", "train", "evaluate", "explore", "sensitivity", "serve"}) {
    const auto r = nwb_cli({sub, "--help"});
    CAPTURE(sub);
    CHECK(r.code == 0);
    CHECK(r.out.find("--") != std::string::npos);
  }
  const auto s = nwb_cli({"simulate", "--help"});
  for (const char* flag : {"--sigma1", "--sigma2", "--A", "--v", "--n", "--window", "--seed", "--out"})
    CHECK(s.out.find(flag) != std::string::npos);
  CHECK(s.out.find("[mm]") != std::string::npos);
  CHECK(s.out.find("[1/m]") != std::string::npos);
  CHECK(nwb_cli({}).code == cli::kValidation);
  CHECK(nwb_cli({"frobnicate"}).code == cli::kValidation);
  CHECK(nwb_cli({"--version"}).code == 0);
}

TEST_CASE("simulate writes an image and a profile deterministically") {
  const auto dir = fresh_dir("simulate");
  const std::vector<std::string> args{"simulate", "--sigma1", "5",  "--sigma2", "8",  "--A",   "12", "--v",
                                      "0.05",     "--n",      "800", "--window", "20x30", "--seed", "9"};
  auto a = args;
  a.insert(a.end(), {"--out", (dir / "a").string()});
  auto b = args;
  b.insert(b.end(), {"--out", (dir / "b").string()});
  const auto ra = nwb_cli(a);
  REQUIRE(ra.code == 0);
  const auto rb = nwb_cli(b);
  REQUIRE(rb.code == 0);
  CHECK(fs::exists(dir / "a" / "sample.pgm"));
  CHECK(io::read_file(dir / "a" / "sample.pgm") == io::read_file(dir / "b" / "sample.pgm"));
  CHECK(io::read_file(dir / "a" / "profile.json") == io::read_file(dir / "b" / "profile.json"));
  const json j = json::parse(ra.out);
  CHECK(j["cv"].size() == 7);
  CHECK(j["window"] == "20x30");
  CHECK(io::read_file(dir / "a" / "sample.pgm").substr(0, 2) == "P5");
}

TEST_CASE("simulate rejects bad flags") {
  const auto dir = fresh_dir("simulate_bad");
  const auto r = nwb_cli({"simulate", "--sigma1", "0", "--out", dir.string()});
  CHECK(r.code == cli::kValidation);
  CHECK(r.err.find("sigma1") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "sample.pgm"));
  CHECK(nwb_cli({"simulate", "--v", "0", "--extrapolate", "--out", dir.string()}).code == cli::kValidation);
  CHECK(nwb_cli({"simulate", "--window", "fifty", "--out", dir.string()}).code == cli::kValidation);
  CHECK(nwb_cli({"simulate", "--sigma1", "abc", "--out", dir.string()}).code == cli::kValidation);
  CHECK(nwb_cli({"simulate"}).code == cli::kValidation);
  CHECK(nwb_cli({"simulate", "--image-resolution", "0.3", "--out", dir.string()}).code == cli::kValidation);
}

TEST_CASE("campaign writes one row per setting and replicate") {
  const auto dir = fresh_dir("campaign");
  const auto csv = dir / "c.csv";
  const auto r = nwb_cli({"campaign", "--range", "sigma1_mm=1:3", "--range", "v=0.2:0.25", "--range", "n_per_m=200:400", "--k", "10", "--replicates", "5", "--window", "10x10", "--quiet", "--out",
                          csv.string()});
  REQUIRE(r.code == 0);
  CHECK(data_lines(csv) == 50);
  CHECK(fs::exists(dataset::manifest_path(csv)));
  CHECK(json::parse(r.out)["rows"] == 50);
  const auto ds = dataset::read_csv(csv);
  CHECK(ds.setting_count() == 10);

  const auto grid = dir / "g.csv";
  REQUIRE(nwb_cli({"campaign", "--range", "sigma1_mm=1:3", "--range", "v=0.2:0.25", "--range", "n_per_m=200:400", "--design", "grid", "--levels", "2", "1", "1", "1", "3", "--replicates", "1",
                   "--window", "10x10", "--quiet", "--out", grid.string()})
              .code == 0);
  CHECK(data_lines(grid) == 6);
  CHECK(nwb_cli({"campaign", "--range", "v=0.3:0.4", "--out", grid.string()}).code == cli::kValidation);
  CHECK(nwb_cli({"campaign", "--range", "v0.1", "--out", grid.string()}).code == cli::kValidation);
}

TEST_CASE("config file values sit under explicit flags") {
  const auto dir = fresh_dir("config");
  io::write_file_atomic(dir / "run.json",
                        R"({"campaign": {"k": 3, "replicates": 4, "window": "10x10", "quiet": true}})");
  const auto csv = dir / "c.csv";
  REQUIRE(nwb_cli({"--config", (dir / "run.json").string(), "campaign", "--range", "sigma1_mm=1:3", "--range", "v=0.2:0.25", "--range", "n_per_m=200:400", "--replicates", "2", "--out", csv.string()})
              .code == 0);
  CHECK(data_lines(csv) == 6);
  const auto csv2 = dir / "c2.csv";
  REQUIRE(nwb_cli({"campaign", "--range", "sigma1_mm=1:3", "--range", "v=0.2:0.25", "--range", "n_per_m=200:400", "--config", (dir / "run.json").string(), "--out", csv2.string()}).code == 0);
  CHECK(data_lines(csv2) == 12);

  io::write_file_atomic(dir / "flat.json", R"({"k": 2, "replicates": 1, "window": "10x10", "quiet": true})");
  const auto csv3 = dir / "c3.csv";
  REQUIRE(nwb_cli({"--config", (dir / "flat.json").string(), "campaign", "--range", "sigma1_mm=1:3", "--range", "v=0.2:0.25", "--range", "n_per_m=200:400", "--out", csv3.string()}).code == 0);
  CHECK(data_lines(csv3) == 2);

  io::write_file_atomic(dir / "bad.json", R"({"replicatez": 2})");
  CHECK(nwb_cli({"--config", (dir / "bad.json").string(), "campaign", "--out", csv.string()}).code ==
        cli::kValidation);
  io::write_file_atomic(dir / "broken.json", "{");
  CHECK(nwb_cli({"--config", (dir / "broken.json").string(), "campaign", "--out", csv.string()}).code ==
        cli::kValidation);
  CHECK(nwb_cli({"--config", (dir / "missing.json").string(), "campaign", "--out", csv.string()}).code != 0);
}

TEST_CASE("train then evaluate reproduces the validation metrics") {
  const auto dir = fresh_dir("train");
  const auto csv = affine_dataset(dir, 0.01);
  const auto model = dir / "m.json";
  const auto metrics = dir / "metrics.json";
  const auto t = nwb_cli({"train", "--data", csv.string(), "--family", "polynomial", "--degree", "2", "--out",
                          model.string(), "--metrics", metrics.string()});
  REQUIRE(t.code == 0);
  const json m = json::parse(io::read_file(metrics));
  const auto e = nwb_cli({"evaluate", "--model", model.string(), "--data", csv.string(), "--split", "val"});
  REQUIRE(e.code == 0);
  const json r = json::parse(e.out);
  for (const char* key : {"mape", "mse", "r2"}) {
    CAPTURE(key);
    CHECK(std::abs(r[key].get<double>() - m["val"][key].get<double>()) <= 1e-9);
  }
  CHECK(m["test"]["rows"].get<int>() > 0);
  CHECK(m["spec"]["polynomial"]["degree"] == 2);

  const auto table = nwb_cli({"evaluate", "--model", model.string(), "--data", csv.string(), "--format", "table"});
  CHECK(table.code == 0);
  CHECK(table.out.find("resolution_mm\tmape_percent\tmse\tr2") != std::string::npos);
  CHECK(table.out.find("\n50\t") != std::string::npos);
}

TEST_CASE("evaluate reports a perfect fit for an exact model") {
  const auto dir = fresh_dir("perfect");
  const auto csv = affine_dataset(dir, 0.0);
  const auto model = dir / "m.json";
  REQUIRE(nwb_cli({"train", "--data", csv.string(), "--family", "linear", "--out", model.string(), "--metrics",
                   (dir / "metrics.json").string()})
              .code == 0);
  const auto e = nwb_cli({"evaluate", "--model", model.string(), "--data", csv.string()});
  REQUIRE(e.code == 0);
  const json r = json::parse(e.out);
  CHECK(r["mape"].get<double>() < 1e-9);
  CHECK(r["r2"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("model and file errors map to exit codes") {
  const auto dir = fresh_dir("errors");
  const auto csv = affine_dataset(dir, 0.01);
  const auto model = dir / "m.json";
  REQUIRE(nwb_cli({"train", "--data", csv.string(), "--family", "linear", "--out", model.string(), "--metrics",
                   (dir / "metrics.json").string()})
              .code == 0);
  CHECK(nwb_cli({"evaluate", "--model", model.string(), "--data", csv.string(), "--family", "mlp"}).code == cli::kIo);
  CHECK(nwb_cli({"evaluate", "--model", (dir / "nope.json").string(), "--data", csv.string()}).code == cli::kIo);
  CHECK(nwb_cli({"train", "--data", (dir / "nope.csv").string(), "--out", model.string()}).code == cli::kIo);
  CHECK(nwb_cli({"train", "--data", csv.string(), "--family", "quantum", "--out", model.string()}).code ==
        cli::kValidation);
  CHECK(nwb_cli({"train", "--data", csv.string(), "--family", "polynomial", "--degree", "0", "--out",
                 model.string()})
            .code == cli::kValidation);
  io::write_file_atomic(dir / "spec.json", R"({"mlp": {"hidden": [4], "max_epochs": 3}, "bogus": 1})");
  CHECK(nwb_cli({"train", "--data", csv.string(), "--model-config", (dir / "spec.json").string(), "--out",
                 model.string()})
            .code == cli::kValidation);
  // Singular system: the linear family on a dataset with duplicated settings is fine, so
  // force a runtime failure with a degree the data cannot support.
  CHECK(nwb_cli({"train", "--data", csv.string(), "--family", "polynomial", "--degree", "8", "--out",
                 (dir / "p.json").string()})
            .code == cli::kRuntime);
}

TEST_CASE("explore and sensitivity print ranked settings and sweeps") {
  const auto dir = fresh_dir("explore");
  const auto csv = affine_dataset(dir, 0.0);
  const auto model = dir / "m.json";
  REQUIRE(nwb_cli({"train", "--data", csv.string(), "--family", "linear", "--out", model.string(), "--metrics",
                   (dir / "metrics.json").string()})
              .code == 0);
  const auto r = nwb_cli({"explore", "--model", model.string(), "--budget", "500", "--top", "5"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["evaluations"] == 500);
  REQUIRE(j["results"].size() == 5);
  for (std::size_t i = 1; i < 5; ++i)
    CHECK(j["results"][i - 1]["objective"].get<double>() <= j["results"][i]["objective"].get<double>());

  const auto local = nwb_cli({"explore", "--model", model.string(), "--strategy", "local", "--start", "10", "10",
                              "10", "0.1", "1000", "--budget", "5000", "--format", "table"});
  REQUIRE(local.code == 0);
  CHECK(local.out.rfind("rank\tsigma1_mm", 0) == 0);
  CHECK(nwb_cli({"explore", "--model", model.string(), "--strategy", "local"}).code == cli::kValidation);
  CHECK(nwb_cli({"explore", "--model", model.string(), "--strategy", "grid", "--budget", "10"}).code ==
        cli::kValidation);
  CHECK(nwb_cli({"explore", "--model", model.string(), "--weights", "0", "0", "0", "0", "0", "0", "0"}).code ==
        cli::kValidation);

  const auto s = nwb_cli({"sensitivity", "--model", model.string(), "--parameter", "v", "--samples", "5"});
  REQUIRE(s.code == 0);
  const json sj = json::parse(s.out);
  const std::vector<double> expected{0.01, 0.07, 0.13, 0.19, 0.25};
  REQUIRE(sj["values"].size() == 5);
  CHECK(sj["values"][0] == 0.01);
  CHECK(sj["values"][4] == 0.25);
  for (std::size_t i = 0; i < 5; ++i) CHECK(sj["values"][i].get<double>() == doctest::Approx(expected[i]));
  for (std::size_t i = 1; i < 5; ++i) CHECK(sj["objective"][i].get<double>() > sj["objective"][i - 1].get<double>());
  CHECK(nwb_cli({"sensitivity", "--model", model.string(), "--parameter", "w"}).code == cli::kValidation);
}
