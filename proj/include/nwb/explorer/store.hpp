#pragma once

// Candidate shortlist with its validation history, persisted as an
// append-only JSON-lines event log plus a periodically rewritten snapshot.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nwb/explorer/search.hpp"

namespace nwb::explorer {

enum class Status { proposed, simulating, simulated, accepted, rejected };
inline constexpr std::array<Status, 5> kStatuses = {Status::proposed, Status::simulating, Status::simulated,
                                                    Status::accepted, Status::rejected};
std::string_view to_string(Status s) noexcept;
Status parse_status(std::string_view s);

/// proposed -> simulating -> simulated -> accepted | rejected, plus
/// simulating -> proposed when a simulation fails.
bool transition_allowed(Status from, Status to) noexcept;

struct Candidate {
  std::string id;
  ProcessParams params;
  CVProfile predicted;
  double objective = 0.0;
  Status status = Status::proposed;
  std::optional<CVProfile> simulated;
  std::optional<double> simulated_objective;
  std::string image;  // path relative to the store directory
  std::string last_error;

  bool operator==(const Candidate&) const = default;
};

struct ValidationRecord {
  std::string candidate_id;
  Status verdict = Status::accepted;  // accepted or rejected
  std::string reason;
  std::string timestamp;  // UTC, ISO 8601

  bool operator==(const ValidationRecord&) const = default;
};

nlohmann::json to_json(const Candidate& c);
Candidate candidate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ValidationRecord& r);
ValidationRecord record_from_json(const nlohmann::json& j);
nlohmann::json params_json(const ProcessParams& p);
nlohmann::json profile_json(const CVProfile& p);

/// Thread safe; every mutation is serialized and logged before it returns.
/// Opening a directory replays its snapshot and log; candidates caught in
/// `simulating` (their job died with the process) return to `proposed`.
class CandidateStore {
 public:
  explicit CandidateStore(std::filesystem::path dir, std::size_t snapshot_every = 50);
  ~CandidateStore();
  CandidateStore(const CandidateStore&) = delete;
  CandidateStore& operator=(const CandidateStore&) = delete;

  const std::filesystem::path& dir() const noexcept { return dir_; }

  /// New candidates in `proposed` state, in the given order.
  std::vector<Candidate> add(const std::vector<Setting>& settings);

  std::optional<Candidate> find(std::string_view id) const;
  /// Throws ValidationError for unknown ids.
  Candidate get(std::string_view id) const;
  std::vector<Candidate> list() const;
  std::vector<ValidationRecord> records() const;

  /// Throws StateError on an illegal transition.
  Candidate begin_simulation(std::string_view id);
  Candidate complete_simulation(std::string_view id, const CVProfile& simulated, double simulated_objective,
                                const std::string& image);
  Candidate fail_simulation(std::string_view id, const std::string& error);
  /// verdict must be accepted or rejected; the candidate must be simulated.
  ValidationRecord record_validation(std::string_view id, Status verdict, const std::string& reason);

  /// Writes the snapshot now and truncates the log.
  void compact();

 private:
  Candidate& at(std::string_view id);
  void transition(Candidate& c, Status to);
  void apply(const nlohmann::json& event);
  void log(nlohmann::json event);
  void write_snapshot();
  std::filesystem::path log_path() const { return dir_ / "events.jsonl"; }
  std::filesystem::path snapshot_path() const { return dir_ / "snapshot.json"; }

  std::filesystem::path dir_;
  std::size_t snapshot_every_;
  mutable std::mutex mutex_;
  std::vector<Candidate> candidates_;
  std::vector<ValidationRecord> records_;
  std::uint64_t next_id_ = 1;
  std::uint64_t seq_ = 0;            // last applied event
  std::size_t since_snapshot_ = 0;
  std::ofstream log_;
};

}  // namespace nwb::explorer
