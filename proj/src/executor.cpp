// Copyright 2026 The portjob Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "portjob/executor.hpp"

#include <algorithm>
#include <iostream>
#include <utility>

#include "portjob/error.hpp"

namespace portjob {

// ---------------------------------------------------------------------------
// Launchers

LauncherTable LauncherTable::builtin() {
  LauncherTable table;
  table.set(Launcher::single, [](const JobSpec& spec, const LauncherOptions&) {
    LaunchCommand cmd;
    cmd.argv.push_back(spec.executable);
    cmd.argv.insert(cmd.argv.end(), spec.arguments.begin(), spec.arguments.end());
    return LaunchPlan{{std::move(cmd)}};
  });
  table.set(Launcher::multiple, [](const JobSpec& spec, const LauncherOptions&) {
    LaunchPlan plan;
    const auto n = spec.resources.total_processes();
    for (std::int64_t rank = 0; rank < n; ++rank) {
      LaunchCommand cmd;
      cmd.argv.push_back(spec.executable);
      cmd.argv.insert(cmd.argv.end(), spec.arguments.begin(), spec.arguments.end());
      cmd.environment["PORTJOB_RANK"] = std::to_string(rank);
      plan.processes.push_back(std::move(cmd));
    }
    return plan;
  });
  table.set(Launcher::mpi_like, [](const JobSpec& spec, const LauncherOptions& options) {
    LaunchCommand cmd;
    cmd.argv = {options.mpi_launcher, "-n", std::to_string(spec.resources.total_processes()),
                spec.executable};
    cmd.argv.insert(cmd.argv.end(), spec.arguments.begin(), spec.arguments.end());
    return LaunchPlan{{std::move(cmd)}};
  });
  return table;
}

void LauncherTable::set(Launcher launcher, Renderer renderer) {
  renderers_[launcher] = std::move(renderer);
}

LaunchPlan LauncherTable::render(const JobSpec& spec, const LauncherOptions& options) const {
  auto it = renderers_.find(spec.launcher);
  if (it == renderers_.end()) {
    throw UnknownLauncher("no renderer for launcher '" + std::string(to_string(spec.launcher)) +
                          "'");
  }
  return it->second(spec, options);
}

LaunchPlan render_launch(const JobSpec& spec, const LauncherOptions& options) {
  static const LauncherTable table = LauncherTable::builtin();
  return table.render(spec, options);
}

// ---------------------------------------------------------------------------
// ExecutorBase

ExecutorBase::ExecutorBase(ExecutorDescriptor descriptor, std::size_t delivery_threads)
    : descriptor_(std::move(descriptor)) {
  delivery_threads = std::max<std::size_t>(1, delivery_threads);
  for (std::size_t i = 0; i < delivery_threads; ++i) {
    workers_.emplace_back([this] { delivery_loop(); });
  }
}

ExecutorBase::~ExecutorBase() { stop_delivery(); }

void ExecutorBase::stop_delivery() {
  {
    std::lock_guard lk(mu_);
    if (stopping_ && workers_.empty()) return;
    stopping_ = true;
  }
  work_cv_.notify_all();
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
  workers_.clear();
}

Job ExecutorBase::submit(JobSpec spec) {
  auto violations = validate_spec(spec, validation_mode());
  if (!violations.empty()) throw InvalidSpec(std::move(violations));
  Job job(std::move(spec));
  const std::string id = job.id;
  track(job);
  do_submit(job);
  return snapshot(id);
}

void ExecutorBase::cancel(const Job& job) {
  auto current = snapshot(job.id);
  if (current.terminal()) return;
  do_cancel(current);
}

Job ExecutorBase::attach(Job job, const std::string& native_id) {
  if (job.native_id) throw Error("job " + job.id + " is already bound to " + *job.native_id);
  Job fresh(job.id.empty() ? make_job_id() : job.id, std::move(job.spec));
  fresh.native_id = native_id;
  const std::string id = fresh.id;
  {
    std::lock_guard lk(mu_);
    if (jobs_.count(id)) throw Error("job " + id + " is already tracked");
  }
  // Held back until the backend accepts the binding; a failed attach
  // leaves no trace in the callbacks.
  track(fresh, true);
  try {
    do_attach(fresh);
  } catch (...) {
    forget(id);
    throw;
  }
  release(id);
  return snapshot(id);
}

JobStatus ExecutorBase::wait(const Job& job, std::set<JobState> until,
                             std::optional<Duration> timeout) {
  std::unique_lock lk(mu_);
  auto matches = [&] {
    auto it = jobs_.find(job.id);
    if (it == jobs_.end()) throw UnknownJob("unknown job " + job.id);
    auto s = it->second.job.state();
    return is_terminal(s) || until.count(s) > 0;
  };
  if (timeout) {
    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(*timeout);
    while (!matches()) {
      if (state_cv_.wait_until(lk, deadline) == std::cv_status::timeout && !matches()) {
        throw Timeout("timed out waiting for job " + job.id);
      }
    }
  } else {
    while (!matches()) state_cv_.wait(lk);
  }
  return jobs_.at(job.id).job.status();
}

Job ExecutorBase::snapshot(const std::string& job_id) const {
  std::lock_guard lk(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw UnknownJob("unknown job " + job_id);
  return it->second.job;
}

Executor::CallbackId ExecutorBase::add_callback(StatusCallback callback) {
  std::lock_guard lk(callbacks_mu_);
  auto id = next_callback_++;
  callbacks_[id] = std::make_shared<StatusCallback>(std::move(callback));
  return id;
}

void ExecutorBase::remove_callback(CallbackId id) {
  std::lock_guard lk(callbacks_mu_);
  callbacks_.erase(id);
}

void ExecutorBase::flush_callbacks() {
  std::unique_lock lk(mu_);
  idle_cv_.wait(lk, [&] { return ready_.empty() && in_flight_ == 0; });
}

std::uint64_t ExecutorBase::dropped_statuses() const {
  std::lock_guard lk(mu_);
  return dropped_;
}

void ExecutorBase::track(Job job, bool held) {
  std::lock_guard lk(mu_);
  const std::string id = job.id;
  auto& rec = jobs_[id];
  rec.job = std::move(job);
  rec.held = held;
  for (const auto& s : rec.job.status_history) rec.outbox.push_back(s);
  schedule_locked(id, rec);
}

void ExecutorBase::release(const std::string& job_id) {
  std::lock_guard lk(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return;
  it->second.held = false;
  schedule_locked(job_id, it->second);
}

void ExecutorBase::schedule_locked(const std::string& id, Record& rec) {
  if (!rec.held && !rec.outbox.empty() && !rec.scheduled) {
    rec.scheduled = true;
    ready_.push_back(id);
    work_cv_.notify_one();
  }
}

void ExecutorBase::forget(const std::string& job_id) {
  std::lock_guard lk(mu_);
  jobs_.erase(job_id);
}

bool ExecutorBase::post(const std::string& job_id, JobStatus status) {
  std::lock_guard lk(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) {
    ++dropped_;
    return false;
  }
  auto& rec = it->second;
  // Histories are ordered by application; keep timestamps in step.
  status.timestamp = std::max(status.timestamp, rec.job.status().timestamp);
  try {
    if (apply_status(rec.job, status) == ApplyResult::duplicate_terminal) return false;
  } catch (const IllegalTransition&) {
    ++dropped_;
    return false;
  }
  rec.outbox.push_back(rec.job.status());
  schedule_locked(job_id, rec);
  state_cv_.notify_all();
  return true;
}

void ExecutorBase::set_native_id(const std::string& job_id, std::string native_id) {
  std::lock_guard lk(mu_);
  auto it = jobs_.find(job_id);
  if (it != jobs_.end()) it->second.job.native_id = std::move(native_id);
}

std::optional<JobState> ExecutorBase::state_of(const std::string& job_id) const {
  std::lock_guard lk(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second.job.state();
}

void ExecutorBase::delivery_loop() {
  std::unique_lock lk(mu_);
  for (;;) {
    work_cv_.wait(lk, [&] { return stopping_ || !ready_.empty(); });
    if (ready_.empty()) {
      if (stopping_) return;
      continue;
    }
    std::string id = std::move(ready_.front());
    ready_.pop_front();
    auto it = jobs_.find(id);
    if (it == jobs_.end() || it->second.outbox.empty()) {
      if (it != jobs_.end()) it->second.scheduled = false;
      if (ready_.empty() && in_flight_ == 0) idle_cv_.notify_all();
      continue;
    }
    JobStatus status = std::move(it->second.outbox.front());
    it->second.outbox.pop_front();
    ++in_flight_;
    lk.unlock();

    std::vector<std::shared_ptr<StatusCallback>> callbacks;
    {
      std::lock_guard cl(callbacks_mu_);
      for (const auto& [_, cb] : callbacks_) callbacks.push_back(cb);
    }
    for (const auto& cb : callbacks) {
      try {
        (*cb)(id, status);
      } catch (const std::exception& e) {
        std::cerr << "portjob: status callback threw: " << e.what() << "\n";
      }
    }

    lk.lock();
    --in_flight_;
    it = jobs_.find(id);
    if (it != jobs_.end()) {
      // Re-queue at the back so one chatty job cannot starve the others.
      if (it->second.outbox.empty()) {
        it->second.scheduled = false;
      } else {
        ready_.push_back(id);
        work_cv_.notify_one();
      }
    }
    if (ready_.empty() && in_flight_ == 0) idle_cv_.notify_all();
  }
}

// ---------------------------------------------------------------------------
// Registry

const ExecutorDescriptor& ExecutorRegistry::register_backend(ExecutorDescriptor descriptor,
                                                             ExecutorFactory factory) {
  if (entries_.count(descriptor.name)) {
    throw DuplicateName("executor '" + descriptor.name + "' is already registered");
  }
  auto name = descriptor.name;
  auto [it, _] = entries_.emplace(name, Entry{std::move(descriptor), std::move(factory)});
  return it->second.descriptor;
}

const ExecutorDescriptor& ExecutorRegistry::lookup(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw NotFound("no executor named '" + std::string(name) + "'");
  return it->second.descriptor;
}

std::unique_ptr<Executor> ExecutorRegistry::create(std::string_view name,
                                                   const ExecutorConfig& config) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw NotFound("no executor named '" + std::string(name) + "'");
  return it->second.factory(config);
}

bool ExecutorRegistry::contains(std::string_view name) const {
  return entries_.find(name) != entries_.end();
}

std::vector<std::string> ExecutorRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

}  // namespace portjob
