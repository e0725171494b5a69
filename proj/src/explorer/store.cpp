#include "nwb/explorer/store.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "nwb/error.hpp"
#include "nwb/io.hpp"

namespace nwb::explorer {

using nlohmann::json;

std::string_view to_string(Status s) noexcept {
  switch (s) {
    case Status::proposed: return "proposed";
    case Status::simulating: return "simulating";
    case Status::simulated: return "simulated";
    case Status::accepted: return "accepted";
    case Status::rejected: return "rejected";
  }
  return "proposed";
}

Status parse_status(std::string_view s) {
  for (auto st : kStatuses)
    if (to_string(st) == s) return st;
  throw ValidationError("unknown status '" + std::string(s) + "'", {"status"});
}

bool transition_allowed(Status from, Status to) noexcept {
  switch (from) {
    case Status::proposed: return to == Status::simulating;
    case Status::simulating: return to == Status::simulated || to == Status::proposed;
    case Status::simulated: return to == Status::accepted || to == Status::rejected;
    case Status::accepted:
    case Status::rejected: return false;
  }
  return false;
}

json params_json(const ProcessParams& p) {
  json j = json::object();
  const auto f = p.features();
  for (std::size_t i = 0; i < kNumFeatures; ++i) j[std::string(kFeatureNames[i])] = f[i];
  return j;
}

json profile_json(const CVProfile& p) { return std::vector<double>(p.values.begin(), p.values.end()); }

namespace {

ProcessParams json_params(const json& j) {
  std::array<double, kNumFeatures> f{};
  for (std::size_t i = 0; i < kNumFeatures; ++i) f[i] = j.at(std::string(kFeatureNames[i])).get<double>();
  return ProcessParams::from_features(f, false);
}

CVProfile json_profile(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != kNumResolutions) throw FormatError("CV profile must have 7 values");
  CVProfile p;
  std::copy(v.begin(), v.end(), p.values.begin());
  return p;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

json to_json(const Candidate& c) {
  json j = {{"id", c.id},
            {"params", params_json(c.params)},
            {"predicted", profile_json(c.predicted)},
            {"objective", c.objective},
            {"status", to_string(c.status)},
            {"image", c.image},
            {"last_error", c.last_error}};
  j["simulated"] = c.simulated ? profile_json(*c.simulated) : json(nullptr);
  j["simulated_objective"] = c.simulated_objective ? json(*c.simulated_objective) : json(nullptr);
  return j;
}

Candidate candidate_from_json(const json& j) {
  Candidate c;
  c.id = j.at("id").get<std::string>();
  c.params = json_params(j.at("params"));
  c.predicted = json_profile(j.at("predicted"));
  c.objective = j.at("objective").get<double>();
  c.status = parse_status(j.at("status").get<std::string>());
  if (!j.at("simulated").is_null()) c.simulated = json_profile(j["simulated"]);
  if (!j.at("simulated_objective").is_null()) c.simulated_objective = j["simulated_objective"].get<double>();
  c.image = j.at("image").get<std::string>();
  c.last_error = j.at("last_error").get<std::string>();
  return c;
}

json to_json(const ValidationRecord& r) {
  return {{"candidate_id", r.candidate_id},
          {"verdict", to_string(r.verdict)},
          {"reason", r.reason},
          {"timestamp", r.timestamp}};
}

ValidationRecord record_from_json(const json& j) {
  ValidationRecord r;
  r.candidate_id = j.at("candidate_id").get<std::string>();
  r.verdict = parse_status(j.at("verdict").get<std::string>());
  r.reason = j.at("reason").get<std::string>();
  r.timestamp = j.at("timestamp").get<std::string>();
  return r;
}

CandidateStore::CandidateStore(std::filesystem::path dir, std::size_t snapshot_every)
    : dir_(std::move(dir)), snapshot_every_(std::max<std::size_t>(1, snapshot_every)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create store directory " + dir_.string() + ": " + ec.message());

  try {
    if (std::filesystem::exists(snapshot_path())) {
      const json s = json::parse(io::read_file(snapshot_path()));
      seq_ = s.at("seq").get<std::uint64_t>();
      next_id_ = s.at("next_id").get<std::uint64_t>();
      for (const auto& c : s.at("candidates")) candidates_.push_back(candidate_from_json(c));
      for (const auto& r : s.at("records")) records_.push_back(record_from_json(r));
    }
  } catch (const json::exception& e) {
    throw FormatError("corrupt store snapshot " + snapshot_path().string() + ": " + e.what());
  }

  if (std::filesystem::exists(log_path())) {
    std::istringstream in(io::read_file(log_path()));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line))
      if (!line.empty()) lines.push_back(line);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      json ev;
      try {
        ev = json::parse(lines[i]);
      } catch (const json::exception&) {
        // A torn final line is an interrupted append; anything earlier is damage.
        if (i + 1 == lines.size()) break;
        throw FormatError("corrupt store log line " + std::to_string(i + 1));
      }
      if (ev.at("seq").get<std::uint64_t>() <= seq_) continue;
      apply(ev);
    }
  }
  // Rewrite a clean snapshot so the log starts empty (drops any torn line).
  write_snapshot();
  log_.open(log_path(), std::ios::binary | std::ios::trunc);
  if (!log_) throw IoError("cannot open store log " + log_path().string());

  for (const auto& c : std::vector<Candidate>(candidates_))
    if (c.status == Status::simulating) fail_simulation(c.id, "simulation interrupted by a restart");
}

CandidateStore::~CandidateStore() {
  try {
    compact();
  } catch (...) {
  }
}

Candidate& CandidateStore::at(std::string_view id) {
  for (auto& c : candidates_)
    if (c.id == id) return c;
  throw ValidationError("unknown candidate '" + std::string(id) + "'", {"candidate_id"});
}

void CandidateStore::transition(Candidate& c, Status to) {
  if (!transition_allowed(c.status, to))
    throw StateError("candidate " + c.id + " cannot move from " + std::string(to_string(c.status)) + " to " +
                     std::string(to_string(to)));
  c.status = to;
}

void CandidateStore::apply(const json& ev) {
  const std::string type = ev.at("type").get<std::string>();
  if (type == "add") {
    for (const auto& c : ev.at("candidates")) candidates_.push_back(candidate_from_json(c));
    next_id_ = ev.at("next_id").get<std::uint64_t>();
  } else if (type == "simulating") {
    Candidate& c = at(ev.at("id").get<std::string>());
    transition(c, Status::simulating);
    c.last_error.clear();
  } else if (type == "simulated") {
    Candidate& c = at(ev.at("id").get<std::string>());
    transition(c, Status::simulated);
    c.simulated = json_profile(ev.at("simulated"));
    c.simulated_objective = ev.at("simulated_objective").get<double>();
    c.image = ev.at("image").get<std::string>();
  } else if (type == "failed") {
    Candidate& c = at(ev.at("id").get<std::string>());
    transition(c, Status::proposed);
    c.last_error = ev.at("error").get<std::string>();
  } else if (type == "validation") {
    ValidationRecord r = record_from_json(ev.at("record"));
    transition(at(r.candidate_id), r.verdict);
    records_.push_back(std::move(r));
  } else {
    throw FormatError("unknown store event '" + type + "'");
  }
  seq_ = ev.at("seq").get<std::uint64_t>();
}

void CandidateStore::log(json ev) {
  ev["seq"] = seq_ + 1;
  if (log_.is_open()) {
    log_ << ev.dump() << '\n';
    log_.flush();
    if (!log_) throw IoError("cannot append to store log " + log_path().string());
  }
  apply(ev);
  if (++since_snapshot_ >= snapshot_every_) {
    write_snapshot();
    log_.close();
    log_.open(log_path(), std::ios::binary | std::ios::trunc);
  }
}

void CandidateStore::write_snapshot() {
  json c = json::array(), r = json::array();
  for (const auto& x : candidates_) c.push_back(to_json(x));
  for (const auto& x : records_) r.push_back(to_json(x));
  const json s = {{"seq", seq_}, {"next_id", next_id_}, {"candidates", c}, {"records", r}};
  io::write_file_atomic(snapshot_path(), s.dump(1));
  since_snapshot_ = 0;
}

void CandidateStore::compact() {
  std::lock_guard lock(mutex_);
  write_snapshot();
  log_.close();
  log_.open(log_path(), std::ios::binary | std::ios::trunc);
}

std::vector<Candidate> CandidateStore::add(const std::vector<Setting>& settings) {
  std::lock_guard lock(mutex_);
  std::vector<Candidate> added;
  std::uint64_t next = next_id_;
  for (const auto& s : settings) {
    Candidate c;
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%04llu", static_cast<unsigned long long>(next++));
    c.id = buf;
    c.params = s.params;
    c.predicted = s.predicted;
    c.objective = s.objective;
    added.push_back(std::move(c));
  }
  json arr = json::array();
  for (const auto& c : added) arr.push_back(to_json(c));
  log({{"type", "add"}, {"candidates", arr}, {"next_id", next}});
  return added;
}

std::optional<Candidate> CandidateStore::find(std::string_view id) const {
  std::lock_guard lock(mutex_);
  for (const auto& c : candidates_)
    if (c.id == id) return c;
  return std::nullopt;
}

Candidate CandidateStore::get(std::string_view id) const {
  auto c = find(id);
  if (!c) throw ValidationError("unknown candidate '" + std::string(id) + "'", {"candidate_id"});
  return *c;
}

std::vector<Candidate> CandidateStore::list() const {
  std::lock_guard lock(mutex_);
  return candidates_;
}

std::vector<ValidationRecord> CandidateStore::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

Candidate CandidateStore::begin_simulation(std::string_view id) {
  std::lock_guard lock(mutex_);
  Candidate probe = at(id);
  transition(probe, Status::simulating);
  log({{"type", "simulating"}, {"id", std::string(id)}});
  return at(id);
}

Candidate CandidateStore::complete_simulation(std::string_view id, const CVProfile& simulated,
                                              double simulated_objective, const std::string& image) {
  std::lock_guard lock(mutex_);
  Candidate probe = at(id);
  transition(probe, Status::simulated);
  log({{"type", "simulated"},
       {"id", std::string(id)},
       {"simulated", profile_json(simulated)},
       {"simulated_objective", simulated_objective},
       {"image", image}});
  return at(id);
}

Candidate CandidateStore::fail_simulation(std::string_view id, const std::string& error) {
  std::lock_guard lock(mutex_);
  Candidate probe = at(id);
  transition(probe, Status::proposed);
  log({{"type", "failed"}, {"id", std::string(id)}, {"error", error}});
  return at(id);
}

ValidationRecord CandidateStore::record_validation(std::string_view id, Status verdict, const std::string& reason) {
  if (verdict != Status::accepted && verdict != Status::rejected)
    throw ValidationError("verdict must be accepted or rejected", {"verdict"});
  std::lock_guard lock(mutex_);
  Candidate probe = at(id);
  transition(probe, verdict);
  ValidationRecord r{std::string(id), verdict, reason, utc_now()};
  log({{"type", "validation"}, {"record", to_json(r)}});
  return r;
}

}  // namespace nwb::explorer
