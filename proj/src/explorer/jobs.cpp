#include "nwb/explorer/jobs.hpp"

#include <algorithm>

#include "nwb/error.hpp"

namespace nwb::explorer {

std::string_view to_string(JobStatus s) noexcept {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "queued";
}

JobQueue::JobQueue(std::size_t depth) : depth_(std::max<std::size_t>(1, depth)), worker_([this] { run(); }) {}

JobQueue::~JobQueue() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
    for (auto& [id, task] : queue_) {
      auto& j = jobs_[id];
      j.status = JobStatus::failed;
      j.error = "service shut down before the job started";
    }
    queue_.clear();
  }
  wake_.notify_all();
  worker_.join();
}

std::string JobQueue::submit(std::string candidate_id, Task task) {
  std::string id;
  {
    std::lock_guard lock(mutex_);
    if (stop_) throw StateError("job queue is shut down");
    if (queue_.size() >= depth_) throw StateError("job queue is full (" + std::to_string(depth_) + " waiting)");
    id = "j" + std::to_string(next_++);
    jobs_[id] = JobInfo{id, std::move(candidate_id), JobStatus::queued, 0.0, {}};
    queue_.emplace_back(id, std::move(task));
  }
  wake_.notify_one();
  return id;
}

std::optional<JobInfo> JobQueue::get(std::string_view id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

void JobQueue::wait_idle() {
  std::unique_lock lock(mutex_);
  idle_.wait(lock, [&] { return queue_.empty() && !busy_; });
}

void JobQueue::run() {
  for (;;) {
    std::pair<std::string, Task> item;
    {
      std::unique_lock lock(mutex_);
      wake_.wait(lock, [&] { return stop_ || !queue_.empty(); });
      if (queue_.empty()) return;
      item = std::move(queue_.front());
      queue_.pop_front();
      busy_ = true;
      jobs_[item.first].status = JobStatus::running;
    }
    const std::string& id = item.first;
    auto progress = [this, &id](double f) {
      std::lock_guard lock(mutex_);
      auto& j = jobs_[id];
      j.progress = std::clamp(f, j.progress, 1.0);
    };
    std::string error;
    bool ok = true;
    try {
      item.second(progress);
    } catch (const std::exception& e) {
      ok = false;
      error = e.what();
    } catch (...) {
      ok = false;
      error = "unknown error";
    }
    {
      std::lock_guard lock(mutex_);
      auto& j = jobs_[id];
      j.status = ok ? JobStatus::done : JobStatus::failed;
      if (ok) j.progress = 1.0;
      j.error = error;
      busy_ = false;
    }
    idle_.notify_all();
  }
}

}  // namespace nwb::explorer
