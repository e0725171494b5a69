#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "nwb/error.hpp"
#include "nwb/explorer/service.hpp"
#include "nwb/io.hpp"
#include "nwb/rng.hpp"
#include "nwb/surrogates/surrogate.hpp"

#include <httplib.h>

using namespace nwb;
using namespace nwb::explorer;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "nwb_test_explorer" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::array<double, kNumFeatures> unit(const Matrix& x, Eigen::Index r) {
  const ParamRanges ranges;
  std::array<double, kNumFeatures> u{};
  for (std::size_t i = 0; i < kNumFeatures; ++i)
    u[i] = (x(r, static_cast<Eigen::Index>(i)) - ranges[i].lo) / ranges[i].width();
  return u;
}

// Every CV equals sum over dims of (normalized param - 0.3)^2 plus a per-resolution offset.
Matrix quadratic_stub(const Matrix& x) {
  Matrix y(x.rows(), 7);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double f = 0.0;
    for (double u : unit(x, r)) f += (u - 0.3) * (u - 0.3);
    for (int k = 0; k < 7; ++k) y(r, k) = f + 0.01 * k;
  }
  return y;
}

Matrix constant_stub(const Matrix& x) { return Matrix::Constant(x.rows(), 7, 0.25); }

// Increasing in every parameter.
Matrix monotone_stub(const Matrix& x) {
  Matrix y(x.rows(), 7);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto u = unit(x, r);
    for (int k = 0; k < 7; ++k) y(r, k) = 0.1 + u[0] + 2 * u[1] + 3 * u[2] + 4 * u[3] + 5 * u[4] + k;
  }
  return y;
}

Setting make_setting(double a, double objective) {
  Setting s;
  s.params.noise_amplitude = a;
  s.objective = objective;
  s.predicted.values.fill(objective);
  return s;
}

SimulationOutput stub_simulation(const ProcessParams& p, const SampleWindow&, std::uint64_t seed,
                                 const JobQueue::Progress& progress) {
  progress(0.5);
  SimulationOutput out;
  const Matrix y = quadratic_stub(Matrix(Eigen::RowVectorXd::Map(p.features().data(), 5)));
  for (int k = 0; k < 7; ++k) out.profile.values[static_cast<std::size_t>(k)] = y(0, k) * (1.0 + 1e-3 * (seed % 7));
  out.image = homogeneity::MassGrid::from_values(2, 2, 1.0, {0.0, 1.0, 2.0, 3.0});
  return out;
}

}  // namespace

// ---- objective and search ------------------------------------------------------

TEST_CASE("objective is the weighted mean of the profile") {
  CVProfile p;
  p.values = {1, 2, 3, 4, 5, 6, 7};
  Objective o;
  CHECK(o(p) == doctest::Approx(4.0));
  o.weights = {0, 0, 0, 0, 0, 0, 2};
  CHECK(o(p) == 7.0);
  o.weights = {1, 0, 0, 0, 0, 0, 1};
  CHECK(o(p) == 4.0);
  o.weights.fill(0.0);
  CHECK_THROWS_AS(o.validate(), ValidationError);
  o.weights[3] = -1.0;
  CHECK_THROWS_AS(o.validate(), ValidationError);
}

TEST_CASE("batch evaluation preserves order and equals one-by-one evaluation") {
  const auto pts = dataset::expert_grid(ParamRanges{}, {4, 5, 5, 5, 2});
  REQUIRE(pts.size() == 1000);
  const Predictor pred = monotone_stub;
  const auto batch = evaluate_settings(pred, pts, {});
  REQUIRE(batch.size() == 1000);
  for (std::size_t i = 0; i < pts.size(); i += 37) {
    const auto one = evaluate_settings(pred, {pts[i]}, {});
    CHECK(batch[i].params == pts[i]);
    CHECK(batch[i].predicted == one[0].predicted);
    CHECK(batch[i].objective == one[0].objective);
  }
}

TEST_CASE("grid exploration") {
  ExploreRequest req;
  req.strategy = Strategy::grid;
  req.levels = {1, 1, 1, 1, 1};
  const auto r = explore(quadratic_stub, req);
  CHECK(r.evaluations == 1);
  CHECK(r.settings.size() == 1);
  CHECK(r.settings[0].params.sigma1_mm == doctest::Approx(25.5));

  req.levels = {3, 3, 3, 3, 3};
  const auto g = explore(quadratic_stub, req);
  CHECK(g.evaluations == 243);
  CHECK(std::is_sorted(g.settings.begin(), g.settings.end(),
                       [](const Setting& a, const Setting& b) { return a.objective < b.objective; }));
  req.budget = 100;
  CHECK_THROWS_AS(explore(quadratic_stub, req), ValidationError);
  req.budget = 0;
  CHECK_THROWS_AS(explore(quadratic_stub, req), ValidationError);
  CHECK_THROWS_AS(parse_strategy("annealing"), ValidationError);
}

TEST_CASE("local search converges on a convex quadratic") {
  ExploreRequest req;
  req.strategy = Strategy::local;
  CHECK_THROWS_AS(explore(quadratic_stub, req), ValidationError);
  rng::Engine eng(5);
  const ParamRanges ranges;
  for (int trial = 0; trial < 5; ++trial) {
    std::array<double, kNumFeatures> f{};
    for (std::size_t i = 0; i < kNumFeatures; ++i) f[i] = eng.uniform(ranges[i].lo, ranges[i].hi);
    req.start = ProcessParams::from_features(f);
    req.budget = 5000;
    const auto r = explore(quadratic_stub, req);
    CHECK(r.converged);
    CHECK(r.evaluations <= 5000);
    const auto best = r.settings.front().params.features();
    for (std::size_t i = 0; i < kNumFeatures; ++i)
      CHECK(std::abs((best[i] - ranges[i].lo) / ranges[i].width() - 0.3) < 1e-2);
  }
  req.budget = 7;
  const auto capped = explore(quadratic_stub, req);
  CHECK(capped.evaluations == 7);
  CHECK_FALSE(capped.converged);
}

TEST_CASE("random exploration beats a fixed probe") {
  // One uniform sample beats the center probe (f = 5 * 0.04) with
  // probability p > 0.05, so 1000 samples all failing has probability
  // below 1e-22; every seed must succeed.
  ProcessParams center;
  const ParamRanges ranges;
  auto f = center.features();
  for (std::size_t i = 0; i < kNumFeatures; ++i) f[i] = ranges[i].lo + 0.5 * ranges[i].width();
  const double probe = evaluate_settings(quadratic_stub, {ProcessParams::from_features(f)}, {})[0].objective;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ExploreRequest req;
    req.seed = seed;
    req.budget = 1000;
    const auto r = explore(quadratic_stub, req);
    CHECK(r.evaluations == 1000);
    CHECK(r.settings.front().objective <= probe);
    for (const auto& s : r.settings) CHECK(s.params.violations().empty());
  }
}

TEST_CASE("sensitivity sweeps") {
  const ProcessParams p;
  const ParamRanges ranges;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const auto flat = sensitivity(constant_stub, p, i, 11, {});
    REQUIRE(flat.values.size() == 11);
    CHECK(flat.values.front() == ranges[i].lo);
    CHECK(flat.values.back() == ranges[i].hi);
    for (double o : flat.objective) CHECK(o == flat.objective.front());

    const auto mono = sensitivity(monotone_stub, p, i, 17, {});
    CHECK(mono.profiles.size() == 17);
    for (std::size_t k = 1; k < mono.objective.size(); ++k) {
      CHECK(mono.values[k] > mono.values[k - 1]);
      CHECK(mono.objective[k] > mono.objective[k - 1]);
    }
  }
  CHECK_THROWS_AS(sensitivity(constant_stub, p, 5, 11, {}), ValidationError);
  CHECK_THROWS_AS(sensitivity(constant_stub, p, 0, 1, {}), ValidationError);
  CHECK(parse_parameter("A") == 2);
  CHECK(parse_parameter("4") == 4);
  CHECK_THROWS_AS(parse_parameter("sigma3"), ValidationError);
}

TEST_CASE("shortlists") {
  ExploreRequest req;
  const auto r = explore(quadratic_stub, req);
  const auto one = shortlist(r.settings, 1);
  REQUIRE(one.settings.size() == 1);
  CHECK(one.settings[0].objective == r.settings.front().objective);

  const auto ten = shortlist(r.settings, 10);
  REQUIRE(ten.settings.size() == 10);
  CHECK_FALSE(ten.short_of_request);
  for (std::size_t i = 1; i < 10; ++i) CHECK(ten.settings[i - 1].objective <= ten.settings[i].objective);

  // Permutation invariance.
  auto shuffled = r.settings;
  std::mt19937 g(3);
  std::shuffle(shuffled.begin(), shuffled.end(), g);
  const auto again = shortlist(shuffled, 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(again.settings[i].params == ten.settings[i].params);

  // Planted duplicates.
  std::vector<Setting> dup{make_setting(5, 0.1), make_setting(5, 0.1), make_setting(6, 0.2), make_setting(5, 0.1),
                           make_setting(7, 0.3)};
  const auto d = shortlist(dup, 3);
  REQUIRE(d.settings.size() == 3);
  CHECK(d.settings[0].params.noise_amplitude == 5);
  CHECK(d.settings[1].params.noise_amplitude == 6);
  CHECK(d.settings[2].params.noise_amplitude == 7);
  const auto more = shortlist(dup, 5);
  CHECK(more.settings.size() == 3);
  CHECK(more.short_of_request);
  CHECK_THROWS_AS(shortlist(dup, 0), ValidationError);
}

// ---- candidate state machine and store ------------------------------------------

TEST_CASE("transition table admits exactly the declared edges") {
  const std::set<std::pair<Status, Status>> edges{{Status::proposed, Status::simulating},
                                                  {Status::simulating, Status::simulated},
                                                  {Status::simulating, Status::proposed},
                                                  {Status::simulated, Status::accepted},
                                                  {Status::simulated, Status::rejected}};
  for (auto a : kStatuses)
    for (auto b : kStatuses) CHECK(transition_allowed(a, b) == (edges.count({a, b}) == 1));
}

TEST_CASE("store operations reject every illegal transition") {
  CandidateStore store(fresh_dir("exhaustive"));
  // Drive a fresh candidate into `target`, then try every operation.
  auto into = [&](Status target) {
    const std::string id = store.add({make_setting(3, 0.5)})[0].id;
    if (target == Status::proposed) return id;
    store.begin_simulation(id);
    if (target == Status::simulating) return id;
    store.complete_simulation(id, CVProfile{}, 0.4, "");
    if (target == Status::simulated) return id;
    store.record_validation(id, target, "");
    return id;
  };
  enum Op { begin, complete, fail, accept, reject };
  const std::map<Op, Status> result{{begin, Status::simulating},
                                    {complete, Status::simulated},
                                    {fail, Status::proposed},
                                    {accept, Status::accepted},
                                    {reject, Status::rejected}};
  for (auto from : kStatuses)
    for (auto [op, to] : result) {
      CAPTURE(to_string(from));
      CAPTURE(to_string(to));
      const std::string id = into(from);
      REQUIRE(store.get(id).status == from);
      const std::size_t records = store.records().size();
      auto run = [&, op = op] {
        switch (op) {
          case begin: store.begin_simulation(id); break;
          case complete: store.complete_simulation(id, CVProfile{}, 0.1, "x.pgm"); break;
          case fail: store.fail_simulation(id, "boom"); break;
          case accept: store.record_validation(id, Status::accepted, "ok"); break;
          case reject: store.record_validation(id, Status::rejected, "no"); break;
        }
      };
      if (transition_allowed(from, to)) {
        CHECK_NOTHROW(run());
        CHECK(store.get(id).status == to);
      } else {
        CHECK_THROWS_AS(run(), StateError);
        CHECK(store.get(id).status == from);
        CHECK(store.records().size() == records);
      }
    }
  CHECK_THROWS_AS(store.get("c9999"), ValidationError);
  const std::string id = into(Status::simulated);
  CHECK_THROWS_AS(store.record_validation(id, Status::proposed, ""), ValidationError);
}

TEST_CASE("store recovers candidates and records after a restart") {
  const auto dir = fresh_dir("restart");
  std::vector<Candidate> before;
  std::vector<ValidationRecord> records;
  {
    CandidateStore store(dir, 3);
    const auto added = store.add({make_setting(2, 0.1), make_setting(3, 0.2), make_setting(4, 0.3)});
    store.begin_simulation(added[0].id);
    store.complete_simulation(added[0].id, CVProfile{}, 0.15, "images/a.pgm");
    store.record_validation(added[0].id, Status::rejected, "streaky texture");
    store.begin_simulation(added[1].id);  // in flight when the process dies
    before = store.list();
    records = store.records();
  }
  CandidateStore store(dir, 3);
  const auto after = store.list();
  REQUIRE(after.size() == 3);
  CHECK(after[0] == before[0]);
  CHECK(after[2] == before[2]);
  CHECK(after[1].status == Status::proposed);
  CHECK(after[1].last_error.find("interrupted") != std::string::npos);
  CHECK(store.records() == records);
  CHECK(store.records()[0].reason == "streaky texture");
  CHECK(store.add({make_setting(9, 0.9)})[0].id == "c0004");
}

TEST_CASE("store replays the log and ignores a torn final line") {
  const auto dir = fresh_dir("torn");
  std::string id;
  {
    CandidateStore store(dir, 1000);
    id = store.add({make_setting(2, 0.1)})[0].id;
    store.begin_simulation(id);
    store.complete_simulation(id, CVProfile{}, 0.2, "");
    // Simulate a crash: copy the log aside before the destructor compacts it.
    std::filesystem::copy_file(dir / "events.jsonl", dir / "events.keep");
    std::filesystem::copy_file(dir / "snapshot.json", dir / "snapshot.keep");
  }
  std::filesystem::rename(dir / "events.keep", dir / "events.jsonl");
  std::filesystem::rename(dir / "snapshot.keep", dir / "snapshot.json");
  {
    std::ofstream log(dir / "events.jsonl", std::ios::app);
    log << R"({"seq":99,"type":"validation","record":{"candidate_id":)";
  }
  CandidateStore store(dir);
  CHECK(store.get(id).status == Status::simulated);
  CHECK(store.records().empty());
}

// ---- jobs ------------------------------------------------------------------------

TEST_CASE("job queue runs jobs in order and reports failures") {
  JobQueue q(4);
  std::vector<int> order;
  std::mutex m;
  const auto a = q.submit("c1", [&](const JobQueue::Progress& p) {
    p(0.3);
    std::lock_guard l(m);
    order.push_back(1);
  });
  const auto b = q.submit("c2", [&](const JobQueue::Progress&) {
    std::lock_guard l(m);
    order.push_back(2);
    throw std::runtime_error("simulator exploded");
  });
  const auto c = q.submit("c3", [&](const JobQueue::Progress&) {
    std::lock_guard l(m);
    order.push_back(3);
  });
  q.wait_idle();
  CHECK(order == std::vector<int>{1, 2, 3});
  CHECK(q.get(a)->status == JobStatus::done);
  CHECK(q.get(a)->progress == 1.0);
  CHECK(q.get(b)->status == JobStatus::failed);
  CHECK(q.get(b)->error == "simulator exploded");
  CHECK(q.get(c)->candidate_id == "c3");
  CHECK_FALSE(q.get("j99"));
}

TEST_CASE("job queue depth is bounded") {
  JobQueue q(1);
  std::mutex m;
  std::condition_variable cv;
  bool release = false, started = false;
  q.submit("a", [&](const JobQueue::Progress& p) {
    p(0.25);
    std::unique_lock l(m);
    started = true;
    cv.notify_all();
    cv.wait(l, [&] { return release; });
  });
  {
    std::unique_lock l(m);
    cv.wait(l, [&] { return started; });
  }
  CHECK(q.get("j1")->status == JobStatus::running);
  CHECK(q.get("j1")->progress == 0.25);
  q.submit("b", [](const JobQueue::Progress&) {});
  CHECK_THROWS_AS(q.submit("c", [](const JobQueue::Progress&) {}), StateError);
  {
    std::lock_guard l(m);
    release = true;
  }
  cv.notify_all();
  q.wait_idle();
  CHECK(q.get("j2")->status == JobStatus::done);
}

// ---- service -----------------------------------------------------------------------

namespace {

const surrogates::TrainedSurrogate& small_model() {
  static const surrogates::TrainedSurrogate m = [] {
    auto sim = [](const ProcessParams& p, const SampleWindow&, std::uint64_t seed) {
      rng::Engine e(seed);
      CVProfile out;
      for (std::size_t k = 0; k < 7; ++k)
        out.values[k] = (0.1 + p.noise_amplitude / 100.0 + p.speed_ratio) / (1.0 + k) * (1.0 + 0.01 * e.uniform());
      return out;
    };
    dataset::CampaignOptions o;
    o.replicates = 1;
    auto ds = dataset::run_campaign(dataset::latin_hypercube(ParamRanges{}, 40, 1), o, sim);
    dataset::grouped_split(ds, 1);
    surrogates::ModelSpec spec;
    spec.family = surrogates::Family::polynomial;
    spec.polynomial.degree = 2;
    return surrogates::train(spec, ds);
  }();
  return m;
}

json good_params() {
  return {{"sigma1_mm", 10.0}, {"sigma2_mm", 12.0}, {"A", 20.0}, {"v", 0.1}, {"n_per_m", 1500.0}};
}

}  // namespace

TEST_CASE("predict endpoint") {
  ServiceConfig cfg;
  cfg.store_dir = fresh_dir("predict");
  ExplorerService svc(predictor_for(small_model()), cfg, stub_simulation);
  const Response r = svc.predict(good_params());
  REQUIRE(r.status == 200);
  ProcessParams p = ProcessParams::checked(10, 12, 20, 0.1, 1500);
  const CVProfile offline = small_model().predict(p);
  for (std::size_t k = 0; k < 7; ++k) CHECK(r.body["cv"][k].get<double>() == offline.values[k]);
  CHECK(r.body["objective"].get<double>() == doctest::Approx(Objective{}(offline)).epsilon(1e-15));
  CHECK_FALSE(r.body.contains("extrapolated"));

  json bad = good_params();
  bad["sigma1_mm"] = 0.5;
  const Response e = svc.predict(bad);
  CHECK(e.status == 422);
  CHECK(e.body["fields"] == json::array({"sigma1_mm"}));
  bad["extrapolate"] = true;
  const Response x = svc.predict(bad);
  CHECK(x.status == 200);
  CHECK(x.body["extrapolated"] == true);

  json missing = good_params();
  missing.erase("v");
  missing["A"] = "loud";
  const Response m = svc.predict(missing);
  CHECK(m.status == 422);
  CHECK(m.body["fields"] == json::array({"A", "v"}));

  json batch = {{"batch", json::array()}};
  for (const auto& q : dataset::expert_grid(ParamRanges{}, {4, 5, 5, 5, 2})) batch["batch"].push_back(params_json(q));
  const Response b = svc.predict(batch);
  REQUIRE(b.status == 200);
  REQUIRE(b.body["results"].size() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    const json one = svc.predict(batch["batch"][i]).body;
    CHECK(b.body["results"][i]["cv"] == one["cv"]);
  }
  batch["batch"][7]["v"] = 2.0;
  const Response bad_batch = svc.predict(batch);
  CHECK(bad_batch.status == 422);
  CHECK(bad_batch.body["fields"] == json::array({"v"}));

  ServiceConfig cfg2;
  cfg2.store_dir = fresh_dir("nomodel");
  ExplorerService empty({}, cfg2, stub_simulation);
  CHECK(empty.predict(good_params()).status == 503);
  CHECK(empty.explore(json::object()).status == 503);
}

TEST_CASE("explore, sensitivity and shortlist endpoints") {
  ServiceConfig cfg;
  cfg.store_dir = fresh_dir("explore");
  ExplorerService svc(quadratic_stub, cfg, stub_simulation);
  CHECK(svc.create_candidates({{"n", 3}}).status == 422);  // nothing explored yet

  const Response r = svc.explore({{"strategy", "random"}, {"budget", 200}, {"seed", 4}, {"top", 20}});
  INFO(r.body.dump());
  REQUIRE(r.status == 200);
  CHECK(r.body["evaluations"] == 200);
  CHECK(r.body["results"].size() == 20);
  CHECK(svc.explore({{"strategy", "simplex"}}).status == 422);
  CHECK(svc.explore({{"strategy", "local"}}).status == 422);
  CHECK(svc.explore({{"strategy", "grid"}, {"levels", 1}}).body["evaluations"] == 1);
  const Response local = svc.explore({{"strategy", "local"}, {"start", good_params()}, {"budget", 2000}});
  CHECK(local.body["converged"] == true);

  const Response s = svc.sensitivity({{"sigma1_mm", "10"}, {"sigma2_mm", "12"}, {"A", "20"}, {"v", "0.1"},
                                      {"n_per_m", "1500"}, {"parameter", "v"}, {"samples", "5"}});
  REQUIRE(s.status == 200);
  CHECK(s.body["values"].size() == 5);
  CHECK(s.body["values"][0] == 0.01);
  CHECK(s.body["values"][4] == 0.25);
  CHECK(svc.sensitivity({{"parameter", "v"}}).status == 422);

  svc.explore({{"strategy", "random"}, {"budget", 300}, {"seed", 4}});
  const Response c = svc.create_candidates({{"n", 4}});
  REQUIRE(c.status == 201);
  CHECK(c.body["candidates"].size() == 4);
  CHECK(c.body["warning"] == false);
  for (const auto& cand : c.body["candidates"]) CHECK(cand["status"] == "proposed");
  const Response direct = svc.create_candidates({{"n", 5}, {"settings", json::array({good_params(), good_params()})}});
  CHECK(direct.body["candidates"].size() == 1);
  CHECK(direct.body["warning"] == true);
  CHECK(svc.candidates().body["candidates"].size() == 5);
}

TEST_CASE("simulation and validation workflow") {
  ServiceConfig cfg;
  cfg.store_dir = fresh_dir("workflow");
  ExplorerService svc(quadratic_stub, cfg, stub_simulation);
  const std::string id =
      svc.create_candidates({{"n", 1}, {"settings", json::array({good_params()})}}).body["candidates"][0]["id"];

  CHECK(svc.validate(id, {{"verdict", "accepted"}}).status == 409);
  const Response sim = svc.simulate(id, {{"seed", 3}});
  REQUIRE(sim.status == 202);
  CHECK(svc.simulate(id, json::object()).status == 409);
  svc.jobs().wait_idle();
  const Response job = svc.job(sim.body["job_id"]);
  INFO(job.body.dump());
  CHECK(job.body["status"] == "done");
  CHECK(job.body["progress"] == 1.0);
  const json cand = svc.candidate(id).body;
  CHECK(cand["status"] == "simulated");
  CHECK(cand["simulated"].size() == 7);
  CHECK(std::filesystem::exists(cfg.store_dir / cand["image"].get<std::string>()));

  const Response v = svc.validate(id, {{"verdict", "rejected"}, {"reason", "streaky texture"}});
  REQUIRE(v.status == 200);
  CHECK(v.body["record"]["reason"] == "streaky texture");
  CHECK(svc.validate(id, {{"verdict", "accepted"}}).status == 409);
  CHECK(svc.validate(id, {{"verdict", "maybe"}}).status == 422);
  CHECK(svc.validate("c0404", {{"verdict", "accepted"}}).status == 404);
  CHECK(svc.simulate("c0404", json::object()).status == 404);
  CHECK(svc.job("j404").status == 404);
  CHECK(svc.candidates().body["records"][0]["reason"] == "streaky texture");
}

TEST_CASE("a failing simulation returns the candidate to proposed") {
  ServiceConfig cfg;
  cfg.store_dir = fresh_dir("failing");
  ExplorerService svc(quadratic_stub, cfg,
                      [](const ProcessParams&, const SampleWindow&, std::uint64_t, const JobQueue::Progress&)
                          -> SimulationOutput { throw DegenerateSampleError("no fiber reached the window"); });
  const std::string id =
      svc.create_candidates({{"n", 1}, {"settings", json::array({good_params()})}}).body["candidates"][0]["id"];
  const Response sim = svc.simulate(id, json::object());
  svc.jobs().wait_idle();
  const json job = svc.job(sim.body["job_id"]).body;
  CHECK(job["status"] == "failed");
  CHECK(job["error"] == "no fiber reached the window");
  const json cand = svc.candidate(id).body;
  CHECK(cand["status"] == "proposed");
  CHECK(cand["last_error"] == "no fiber reached the window");
  CHECK(svc.simulate(id, {{"window", "abc"}}).status == 422);
}

TEST_CASE("HTTP API on an ephemeral port") {
  ServiceConfig cfg;
  cfg.store_dir = fresh_dir("http");
  cfg.static_dir = fresh_dir("http_static");
  std::filesystem::create_directories(*cfg.static_dir);
  io::write_file_atomic(*cfg.static_dir / "index.html", "<html>nwb</html>");
  ExplorerService svc(quadratic_stub, cfg, stub_simulation);
  HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);

  auto post = [&](const std::string& path, const json& body) {
    auto r = cli.Post(path, body.dump(), "application/json");
    REQUIRE(r);
    return std::pair{r->status, json::parse(r->body)};
  };
  auto get = [&](const std::string& path) {
    auto r = cli.Get(path);
    REQUIRE(r);
    return std::pair{r->status, json::parse(r->body)};
  };

  auto [ps, pb] = post("/predict", good_params());
  CHECK(ps == 200);
  CHECK(pb["cv"].size() == 7);
  json bad = good_params();
  bad["sigma1_mm"] = 0.5;
  auto [bs, bb] = post("/predict", bad);
  CHECK(bs == 422);
  CHECK(bb["fields"][0] == "sigma1_mm");
  auto garbage = cli.Post("/predict", "{not json", "application/json");
  REQUIRE(garbage);
  CHECK(garbage->status == 400);

  CHECK(post("/explore", {{"budget", 50}}).first == 200);
  auto [ss, sb] = get("/sensitivity?sigma1_mm=10&sigma2_mm=12&A=20&v=0.1&n_per_m=1500&parameter=A&samples=3");
  CHECK(ss == 200);
  CHECK(sb["values"] == json::array({1.0, 25.5, 50.0}));

  auto [cs, cb] = post("/candidates", {{"n", 2}});
  REQUIRE(cs == 201);
  const std::string id = cb["candidates"][0]["id"];
  auto [sims, simb] = post("/candidates/" + id + "/simulate", json::object());
  REQUIRE(sims == 202);
  svc.jobs().wait_idle();
  auto [js, jb] = get("/jobs/" + simb["job_id"].get<std::string>());
  CHECK(js == 200);
  CHECK(jb["status"] == "done");
  auto [gs, gb] = get("/candidates/" + id);
  CHECK(gs == 200);
  CHECK(gb["status"] == "simulated");
  auto img = cli.Get("/" + gb["image"].get<std::string>());
  REQUIRE(img);
  CHECK(img->status == 200);
  CHECK(img->body.substr(0, 2) == "P5");

  auto [vs, vb] = post("/candidates/" + id + "/validate", {{"verdict", "accepted"}, {"reason", "uniform"}});
  CHECK(vs == 200);
  CHECK(post("/candidates/" + id + "/validate", {{"verdict", "rejected"}}).first == 409);
  auto [ls, lb] = get("/candidates");
  CHECK(ls == 200);
  CHECK(lb["records"][0]["reason"] == "uniform");
  CHECK(get("/jobs/j999").first == 404);

  auto index = cli.Get("/index.html");
  REQUIRE(index);
  CHECK(index->body == "<html>nwb</html>");
  server.stop();
}
