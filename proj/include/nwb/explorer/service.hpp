#pragma once

// The explorer's JSON API. ExplorerService implements every endpoint as a
// plain function from request data to (status, JSON body); HttpServer binds
// those functions to routes.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "nwb/explorer/jobs.hpp"
#include "nwb/explorer/search.hpp"
#include "nwb/explorer/store.hpp"
#include "nwb/homogeneity.hpp"

namespace httplib {
class Server;
}

namespace nwb::explorer {

struct SimulationOutput {
  CVProfile profile;
  std::optional<homogeneity::MassGrid> image;
};
using SimulationFn = std::function<SimulationOutput(const ProcessParams&, const SampleWindow&, std::uint64_t,
                                                    const JobQueue::Progress&)>;
/// Streams the laydown simulation; the image is the 0.5 mm mass grid.
SimulationFn laydown_simulation(const LaydownConfig& config = {}, unsigned workers = 1);

struct ServiceConfig {
  std::filesystem::path store_dir = "explorer_store";
  std::optional<std::filesystem::path> static_dir;  // web bundle served at /
  std::size_t queue_depth = 16;
  SampleWindow window{};  // default window for validation simulations
  Objective objective{};  // default objective weights
  ParamRanges ranges{};
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

class ExplorerService {
 public:
  /// An empty predictor means no model is loaded (prediction endpoints
  /// answer 503).
  ExplorerService(Predictor predictor, ServiceConfig config, SimulationFn simulate = {});

  Response predict(const nlohmann::json& body) const;
  Response explore(const nlohmann::json& body);
  Response sensitivity(const std::map<std::string, std::string>& query) const;
  Response create_candidates(const nlohmann::json& body);
  Response simulate(const std::string& candidate_id, const nlohmann::json& body);
  Response job(const std::string& job_id) const;
  Response validate(const std::string& candidate_id, const nlohmann::json& body);
  Response candidates() const;
  Response candidate(const std::string& candidate_id) const;

  CandidateStore& store() noexcept { return store_; }
  JobQueue& jobs() noexcept { return jobs_; }
  const ServiceConfig& config() const noexcept { return config_; }

 private:
  Objective objective_from(const nlohmann::json& body) const;
  void require_model() const;

  Predictor predictor_;
  ServiceConfig config_;
  SimulationFn simulate_;
  CandidateStore store_;
  mutable std::mutex explore_mutex_;
  std::vector<Setting> last_explore_;
  JobQueue jobs_;  // last: joins its worker before the store goes away
};

/// Parses the five named features; missing or non-numeric fields and values
/// outside `ranges` (unless `extrapolate`) raise ValidationError naming them.
ProcessParams parse_params(const nlohmann::json& j, const ParamRanges& ranges, bool extrapolate);

class HttpServer {
 public:
  explicit HttpServer(ExplorerService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  ExplorerService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace nwb::explorer
