#pragma once

// Single background worker draining a bounded FIFO of jobs.

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

namespace nwb::explorer {

enum class JobStatus { queued, running, done, failed };
std::string_view to_string(JobStatus s) noexcept;

struct JobInfo {
  std::string id;
  std::string candidate_id;
  JobStatus status = JobStatus::queued;
  double progress = 0.0;  // [0, 1]
  std::string error;
};

class JobQueue {
 public:
  using Progress = std::function<void(double)>;
  using Task = std::function<void(const Progress&)>;

  explicit JobQueue(std::size_t depth = 16);
  /// Finishes the running job; queued jobs are marked failed.
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  /// Throws StateError when `depth` jobs are already waiting. A task that
  /// throws marks its job failed with the exception message.
  std::string submit(std::string candidate_id, Task task);
  std::optional<JobInfo> get(std::string_view id) const;
  /// Blocks until no job is queued or running.
  void wait_idle();

 private:
  void run();

  std::size_t depth_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::deque<std::pair<std::string, Task>> queue_;
  std::map<std::string, JobInfo, std::less<>> jobs_;
  std::size_t next_ = 1;
  bool busy_ = false;
  bool stop_ = false;
  std::thread worker_;
};

}  // namespace nwb::explorer
