#include "nwb/explorer/service.hpp"

#include <httplib.h>

#include <cmath>

#include "nwb/error.hpp"
#include "nwb/rng.hpp"

namespace nwb::explorer {

using nlohmann::json;

namespace {

struct NotFound : Error {
  using Error::Error;
};
struct Unavailable : Error {
  using Error::Error;
};

Response error_response(int status, const std::string& message, const std::vector<std::string>& fields = {}) {
  json body = {{"error", message}};
  if (!fields.empty()) body["fields"] = fields;
  return {status, body};
}

template <class Fn>
Response guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const NotFound& e) {
    return error_response(404, e.what());
  } catch (const Unavailable& e) {
    return error_response(503, e.what());
  } catch (const ValidationError& e) {
    return error_response(422, e.what(), e.fields());
  } catch (const StateError& e) {
    return error_response(409, e.what());
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

bool flag(const json& body, const char* key) {
  if (!body.contains(key)) return false;
  if (!body[key].is_boolean()) throw ValidationError(std::string("'") + key + "' must be a boolean", {key});
  return body[key].get<bool>();
}

bool non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

template <class T>
T number(const json& body, const char* key, T fallback) {
  if (!body.contains(key)) return fallback;
  const json& v = body[key];
  if constexpr (std::is_integral_v<T>) {
    if (!non_negative_integer(v)) throw ValidationError(std::string("'") + key + "' must be a non-negative integer", {key});
  } else {
    if (!v.is_number()) throw ValidationError(std::string("'") + key + "' must be a number", {key});
  }
  return v.get<T>();
}

bool outside(const ProcessParams& p, const ParamRanges& r) { return !p.violations(r).empty(); }

json setting_json(const Setting& s, const ParamRanges& r) {
  json j = {{"params", params_json(s.params)}, {"cv", profile_json(s.predicted)}, {"objective", s.objective}};
  if (outside(s.params, r)) j["extrapolated"] = true;
  return j;
}

}  // namespace

ProcessParams parse_params(const json& j, const ParamRanges& ranges, bool extrapolate) {
  if (!j.is_object()) throw ValidationError("process parameters must be a JSON object", {"params"});
  std::array<double, kNumFeatures> f{};
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const std::string key(kFeatureNames[i]);
    if (!j.contains(key) || !j[key].is_number() || !std::isfinite(j[key].get<double>())) {
      bad.push_back(key);
      continue;
    }
    f[i] = j[key].get<double>();
  }
  if (!bad.empty()) throw ValidationError("missing or non-numeric parameters", bad);
  const ProcessParams p = ProcessParams::from_features(f, false);
  const auto v = p.violations(extrapolate ? ParamRanges{{{{-INFINITY, INFINITY},
                                                            {-INFINITY, INFINITY},
                                                            {-INFINITY, INFINITY},
                                                            {-INFINITY, INFINITY},
                                                            {-INFINITY, INFINITY}}}}
                                          : ranges);
  if (!v.empty()) {
    std::string msg = "parameters outside their ranges:";
    for (const auto& n : v) msg += " " + n;
    throw ValidationError(msg, v);
  }
  return p;
}

SimulationFn laydown_simulation(const LaydownConfig& config, unsigned workers) {
  return [config, workers](const ProcessParams& p, const SampleWindow& w, std::uint64_t seed,
                           const JobQueue::Progress& progress) {
    laydown::RunOptions opts;
    opts.workers = workers;
    opts.progress = progress;
    const auto m = homogeneity::simulate_and_measure(p, w, seed, config, opts);
    SimulationOutput out;
    out.profile = m.profile;
    out.image = m.counts.to_grid(homogeneity::kQuantumMm, m.point_mass);
    return out;
  };
}

ExplorerService::ExplorerService(Predictor predictor, ServiceConfig config, SimulationFn simulate)
    : predictor_(std::move(predictor)),
      config_(std::move(config)),
      simulate_(simulate ? std::move(simulate) : laydown_simulation()),
      store_(config_.store_dir),
      jobs_(config_.queue_depth) {
  config_.objective.validate();
  config_.ranges.validate();
  config_.window.validate();
}

void ExplorerService::require_model() const {
  if (!predictor_) throw Unavailable("no surrogate model is loaded");
}

Objective ExplorerService::objective_from(const json& body) const {
  if (!body.is_object() || !body.contains("weights")) return config_.objective;
  const json& w = body["weights"];
  if (!w.is_array() || w.size() != kNumResolutions)
    throw ValidationError("'weights' must be an array of 7 numbers", {"weights"});
  Objective o;
  for (std::size_t k = 0; k < kNumResolutions; ++k) {
    if (!w[k].is_number()) throw ValidationError("'weights' must be an array of 7 numbers", {"weights"});
    o.weights[k] = w[k].get<double>();
  }
  o.validate();
  return o;
}

Response ExplorerService::predict(const json& body) const {
  return guarded([&] {
    require_model();
    const bool extrapolate = flag(body, "extrapolate");
    const Objective obj = objective_from(body);
    if (body.contains("batch")) {
      if (!body["batch"].is_array()) throw ValidationError("'batch' must be an array", {"batch"});
      std::vector<ProcessParams> ps;
      for (const auto& item : body["batch"]) ps.push_back(parse_params(item, config_.ranges, extrapolate));
      json results = json::array();
      for (const auto& s : evaluate_settings(predictor_, ps, obj)) {
        json r = {{"cv", profile_json(s.predicted)}, {"objective", s.objective}};
        if (outside(s.params, config_.ranges)) r["extrapolated"] = true;
        results.push_back(r);
      }
      return Response{200, {{"results", results}}};
    }
    const ProcessParams p = parse_params(body, config_.ranges, extrapolate);
    const Setting s = evaluate_settings(predictor_, {p}, obj).front();
    json r = {{"cv", profile_json(s.predicted)},
              {"objective", s.objective},
              {"resolutions_mm", homogeneity::kResolutionsMm}};
    if (outside(p, config_.ranges)) r["extrapolated"] = true;
    return Response{200, r};
  });
}

Response ExplorerService::explore(const json& body) {
  return guarded([&] {
    require_model();
    if (!body.is_object()) throw ValidationError("request body must be a JSON object", {"body"});
    ExploreRequest req;
    req.ranges = config_.ranges;
    req.objective = objective_from(body);
    if (body.contains("strategy")) {
      if (!body["strategy"].is_string()) throw ValidationError("'strategy' must be a string", {"strategy"});
      req.strategy = parse_strategy(body["strategy"].get<std::string>());
    }
    req.budget = number<std::size_t>(body, "budget", req.budget);
    req.seed = number<std::uint64_t>(body, "seed", req.seed);
    if (body.contains("levels")) {
      const json& l = body["levels"];
      if (non_negative_integer(l)) {
        req.levels.fill(l.get<std::size_t>());
      } else if (l.is_array() && l.size() == kNumFeatures) {
        for (std::size_t i = 0; i < kNumFeatures; ++i) {
          if (!non_negative_integer(l[i])) throw ValidationError("'levels' entries must be integers", {"levels"});
          req.levels[i] = l[i].get<std::size_t>();
        }
      } else {
        throw ValidationError("'levels' must be an integer or an array of 5", {"levels"});
      }
    }
    if (body.contains("start")) req.start = parse_params(body["start"], config_.ranges, flag(body, "extrapolate"));
    const std::size_t top = number<std::size_t>(body, "top", 0);

    ExploreResult res = explorer::explore(predictor_, req);
    json out = json::array();
    const std::size_t n = top == 0 ? res.settings.size() : std::min(top, res.settings.size());
    for (std::size_t i = 0; i < n; ++i) out.push_back(setting_json(res.settings[i], config_.ranges));
    {
      std::lock_guard lock(explore_mutex_);
      last_explore_ = std::move(res.settings);
    }
    return Response{200,
                    {{"strategy", to_string(req.strategy)},
                     {"evaluations", res.evaluations},
                     {"converged", res.converged},
                     {"results", out}}};
  });
}

Response ExplorerService::sensitivity(const std::map<std::string, std::string>& query) const {
  return guarded([&] {
    require_model();
    json pj = json::object();
    for (const auto& name : kFeatureNames) {
      const auto it = query.find(std::string(name));
      if (it == query.end()) continue;
      try {
        std::size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        pj[std::string(name)] = v;
      } catch (const std::exception&) {
        pj[std::string(name)] = it->second;  // rejected as non-numeric below
      }
    }
    const bool extrapolate = query.count("extrapolate") && query.at("extrapolate") == "true";
    const ProcessParams p = parse_params(pj, config_.ranges, extrapolate);
    const auto it = query.find("parameter");
    if (it == query.end()) throw ValidationError("'parameter' is required", {"parameter"});
    const std::size_t index = parse_parameter(it->second);
    std::size_t samples = 21;
    if (auto s = query.find("samples"); s != query.end()) {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(s->second, &used);
        if (used != s->second.size() || v < 0) throw std::invalid_argument("samples");
        samples = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw ValidationError("'samples' must be a non-negative integer", {"samples"});
      }
    }
    const SensitivitySweep sw = explorer::sensitivity(predictor_, p, index, samples, config_.objective, config_.ranges);
    json profiles = json::array();
    for (const auto& pr : sw.profiles) profiles.push_back(profile_json(pr));
    return Response{200,
                    {{"parameter", kFeatureNames[index]},
                     {"values", sw.values},
                     {"objective", sw.objective},
                     {"cv", profiles}}};
  });
}

Response ExplorerService::create_candidates(const json& body) {
  return guarded([&] {
    if (!body.is_object()) throw ValidationError("request body must be a JSON object", {"body"});
    const std::size_t n = number<std::size_t>(body, "n", 10);
    std::vector<Setting> pool;
    if (body.contains("settings")) {
      require_model();
      if (!body["settings"].is_array()) throw ValidationError("'settings' must be an array", {"settings"});
      std::vector<ProcessParams> ps;
      for (const auto& s : body["settings"]) ps.push_back(parse_params(s, config_.ranges, flag(body, "extrapolate")));
      pool = evaluate_settings(predictor_, ps, objective_from(body));
    } else {
      std::lock_guard lock(explore_mutex_);
      if (last_explore_.empty()) throw ValidationError("no exploration results to shortlist from", {"settings"});
      pool = last_explore_;
    }
    const Shortlist sl = shortlist(std::move(pool), n);
    json out = json::array();
    for (const auto& c : store_.add(sl.settings)) out.push_back(to_json(c));
    return Response{201, {{"candidates", out}, {"warning", sl.short_of_request}}};
  });
}

Response ExplorerService::simulate(const std::string& id, const json& body) {
  return guarded([&] {
    if (!store_.find(id)) throw NotFound("unknown candidate '" + id + "'");
    SampleWindow window = config_.window;
    if (body.is_object() && body.contains("window")) {
      const json& w = body["window"];
      if (!w.is_string()) throw ValidationError("'window' must look like 50x50", {"window"});
      window = SampleWindow::parse(w.get<std::string>());
    }
    const std::uint64_t seed =
        body.is_object() ? number<std::uint64_t>(body, "seed", rng::derive(0xCA9D, {std::stoull(id.substr(1))}))
                         : rng::derive(0xCA9D, {std::stoull(id.substr(1))});
    const Candidate c = store_.begin_simulation(id);
    std::string job_id;
    try {
      job_id = jobs_.submit(id, [this, c, window, seed](const JobQueue::Progress& progress) {
        try {
          const SimulationOutput out = simulate_(c.params, window, seed, progress);
          std::string image;
          if (out.image) {
            image = "images/" + c.id + ".pgm";
            std::filesystem::create_directories(store_.dir() / "images");
            homogeneity::render_image(*out.image, store_.dir() / image);
          }
          const Objective obj = config_.objective;
          store_.complete_simulation(c.id, out.profile, obj(out.profile), image);
        } catch (const std::exception& e) {
          store_.fail_simulation(c.id, e.what());
          throw;
        }
      });
    } catch (const StateError& e) {
      store_.fail_simulation(id, e.what());
      throw Unavailable(e.what());
    }
    return Response{202, {{"job_id", job_id}, {"candidate_id", id}}};
  });
}

Response ExplorerService::job(const std::string& id) const {
  return guarded([&] {
    const auto j = jobs_.get(id);
    if (!j) throw NotFound("unknown job '" + id + "'");
    return Response{200,
                    {{"id", j->id},
                     {"candidate_id", j->candidate_id},
                     {"status", to_string(j->status)},
                     {"progress", j->progress},
                     {"error", j->error}}};
  });
}

Response ExplorerService::validate(const std::string& id, const json& body) {
  return guarded([&] {
    if (!store_.find(id)) throw NotFound("unknown candidate '" + id + "'");
    if (!body.is_object() || !body.contains("verdict") || !body["verdict"].is_string())
      throw ValidationError("'verdict' must be \"accepted\" or \"rejected\"", {"verdict"});
    const Status verdict = parse_status(body["verdict"].get<std::string>());
    std::string reason;
    if (body.contains("reason")) {
      if (!body["reason"].is_string()) throw ValidationError("'reason' must be a string", {"reason"});
      reason = body["reason"].get<std::string>();
    }
    const ValidationRecord r = store_.record_validation(id, verdict, reason);
    return Response{200, {{"record", to_json(r)}, {"candidate", to_json(store_.get(id))}}};
  });
}

Response ExplorerService::candidates() const {
  return guarded([&] {
    json c = json::array(), r = json::array();
    for (const auto& x : store_.list()) c.push_back(to_json(x));
    for (const auto& x : store_.records()) r.push_back(to_json(x));
    return Response{200, {{"candidates", c}, {"records", r}}};
  });
}

Response ExplorerService::candidate(const std::string& id) const {
  return guarded([&] {
    const auto c = store_.find(id);
    if (!c) throw NotFound("unknown candidate '" + id + "'");
    return Response{200, to_json(*c)};
  });
}

// ---- HTTP binding ------------------------------------------------------------

namespace {

void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

template <class Fn>
httplib::Server::Handler with_body(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = parse_body(req);
    } catch (const json::exception& e) {
      reply(res, error_response(400, std::string("request body is not valid JSON: ") + e.what()));
      return;
    }
    reply(res, fn(req, body));
  };
}

}  // namespace

HttpServer::HttpServer(ExplorerService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  ExplorerService* svc = &service_;
  s.Post("/predict", with_body([svc](const httplib::Request&, const json& b) { return svc->predict(b); }));
  s.Post("/explore", with_body([svc](const httplib::Request&, const json& b) { return svc->explore(b); }));
  s.Get("/sensitivity", [svc](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> q;
    for (const auto& [k, v] : req.params) q[k] = v;
    reply(res, svc->sensitivity(q));
  });
  s.Get("/candidates", [svc](const httplib::Request&, httplib::Response& res) { reply(res, svc->candidates()); });
  s.Post("/candidates", with_body([svc](const httplib::Request&, const json& b) { return svc->create_candidates(b); }));
  s.Get(R"(/candidates/([^/]+))", [svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->candidate(req.matches[1]));
  });
  s.Post(R"(/candidates/([^/]+)/simulate)", with_body([svc](const httplib::Request& req, const json& b) {
           return svc->simulate(req.matches[1], b);
         }));
  s.Post(R"(/candidates/([^/]+)/validate)", with_body([svc](const httplib::Request& req, const json& b) {
           return svc->validate(req.matches[1], b);
         }));
  s.Get(R"(/jobs/([^/]+))", [svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->job(req.matches[1]));
  });

  const auto images = service_.store().dir() / "images";
  std::filesystem::create_directories(images);
  s.set_mount_point("/images", images.string());
  if (service_.config().static_dir) s.set_mount_point("/", service_.config().static_dir->string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpServer::run(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace nwb::explorer
