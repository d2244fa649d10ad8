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

#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "portjob/job.hpp"

namespace portjob {

enum class Capability { attach, cancel, nested };

struct ExecutorDescriptor {
  std::string name;
  std::string version;
  std::set<Capability> capabilities;
};

// Invoked with (job id, status). Deliveries for one job are serialized and
// follow that job's status history; different jobs are delivered concurrently.
using StatusCallback = std::function<void(const std::string&, const JobStatus&)>;

// ---------------------------------------------------------------------------
// Launchers

struct LaunchCommand {
  std::vector<std::string> argv;
  std::map<std::string, std::string> environment;

  friend bool operator==(const LaunchCommand&, const LaunchCommand&) = default;
};

// One entry per OS process to start.
struct LaunchPlan {
  std::vector<LaunchCommand> processes;
};

struct LauncherOptions {
  // Program placed in front of mpi_like commands; it receives
  // `-n <total processes> <executable> <args...>`.
  std::string mpi_launcher = "portjob-mpirun";
};

class LauncherTable {
 public:
  using Renderer = std::function<LaunchPlan(const JobSpec&, const LauncherOptions&)>;

  // Table with the built-in single / multiple / mpi_like renderers.
  static LauncherTable builtin();

  void set(Launcher launcher, Renderer renderer);
  LaunchPlan render(const JobSpec& spec, const LauncherOptions& options = {}) const;

 private:
  std::map<Launcher, Renderer> renderers_;
};

LaunchPlan render_launch(const JobSpec& spec, const LauncherOptions& options = {});

// ---------------------------------------------------------------------------
// Executor interface

class Executor {
 public:
  using Duration = std::chrono::duration<double>;
  using CallbackId = std::uint64_t;

  virtual ~Executor() = default;

  virtual const ExecutorDescriptor& descriptor() const = 0;

  // Returns once the backend knows the job: its history has reached QUEUED
  // (or later), or ends NEW -> FAILED when the backend rejected it.
  // Throws InvalidSpec before touching the backend.
  virtual Job submit(JobSpec spec) = 0;

  // No-op for terminal jobs. Throws UnknownJob for jobs this executor does
  // not track.
  virtual void cancel(const Job& job) = 0;

  // Binds a fresh job to an existing backend job and applies its current
  // state. Throws UnknownNativeId.
  virtual Job attach(Job job, const std::string& native_id) = 0;

  // Blocks until the job is in `until` or terminal. Throws Timeout.
  virtual JobStatus wait(const Job& job, std::set<JobState> until = {},
                         std::optional<Duration> timeout = std::nullopt) = 0;

  // Current copy of a tracked job. Throws UnknownJob.
  virtual Job snapshot(const std::string& job_id) const = 0;

  virtual CallbackId add_callback(StatusCallback callback) = 0;
  virtual void remove_callback(CallbackId id) = 0;

  // Blocks until every accepted status has been handed to the callbacks.
  virtual void flush_callbacks() = 0;
};

// Shared machinery for backends: the job table, status application and the
// callback dispatcher. Backends implement do_submit / do_cancel / do_attach
// and report progress through post().
class ExecutorBase : public Executor {
 public:
  ~ExecutorBase() override;

  const ExecutorDescriptor& descriptor() const override { return descriptor_; }

  Job submit(JobSpec spec) override;
  void cancel(const Job& job) override;
  Job attach(Job job, const std::string& native_id) override;
  JobStatus wait(const Job& job, std::set<JobState> until = {},
                 std::optional<Duration> timeout = std::nullopt) override;
  Job snapshot(const std::string& job_id) const override;
  CallbackId add_callback(StatusCallback callback) override;
  void remove_callback(CallbackId id) override;
  void flush_callbacks() override;

  // Number of statuses dropped as stale or illegal, for diagnostics.
  std::uint64_t dropped_statuses() const;

 protected:
  explicit ExecutorBase(ExecutorDescriptor descriptor, std::size_t delivery_threads = 4);

  virtual ValidationMode validation_mode() const { return ValidationMode::batch; }

  // Called with the job already tracked at NEW. Must post at least QUEUED or
  // FAILED before returning.
  virtual void do_submit(const Job& job) = 0;
  // Called only for tracked, non-terminal jobs.
  virtual void do_cancel(const Job& job) = 0;
  // Called with the job tracked at NEW and native_id bound. Throws
  // UnknownNativeId; the job is then forgotten.
  virtual void do_attach(const Job& job) = 0;

  // Applies `status` to the job and queues it for delivery. Stale or illegal
  // statuses are dropped and false is returned.
  bool post(const std::string& job_id, JobStatus status);
  void set_native_id(const std::string& job_id, std::string native_id);
  std::optional<JobState> state_of(const std::string& job_id) const;

  // Stops the delivery threads after draining. Backends call this first in
  // their destructor so no callback outlives their members.
  void stop_delivery();

 private:
  struct Record {
    Job job;
    std::deque<JobStatus> outbox;
    bool scheduled = false;
    bool held = false;
  };

  void track(Job job, bool held = false);
  void release(const std::string& job_id);
  void schedule_locked(const std::string& id, Record& rec);
  void forget(const std::string& job_id);
  void delivery_loop();
  void deliver_one(const std::string& job_id);

  ExecutorDescriptor descriptor_;

  mutable std::mutex mu_;
  std::condition_variable state_cv_;
  std::condition_variable work_cv_;
  std::condition_variable idle_cv_;
  std::unordered_map<std::string, Record> jobs_;
  std::deque<std::string> ready_;
  std::size_t in_flight_ = 0;
  bool stopping_ = false;
  std::uint64_t dropped_ = 0;

  std::mutex callbacks_mu_;
  std::map<CallbackId, std::shared_ptr<StatusCallback>> callbacks_;
  CallbackId next_callback_ = 1;

  std::vector<std::thread> workers_;
};

// ---------------------------------------------------------------------------
// Registry

using ExecutorConfig = nlohmann::json;
using ExecutorFactory = std::function<std::unique_ptr<Executor>(const ExecutorConfig&)>;

class ExecutorRegistry {
 public:
  // Throws DuplicateName. Names are case-sensitive.
  const ExecutorDescriptor& register_backend(ExecutorDescriptor descriptor,
                                             ExecutorFactory factory);
  // Throws NotFound.
  const ExecutorDescriptor& lookup(std::string_view name) const;
  std::unique_ptr<Executor> create(std::string_view name,
                                   const ExecutorConfig& config = ExecutorConfig::object()) const;
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  struct Entry {
    ExecutorDescriptor descriptor;
    ExecutorFactory factory;
  };
  std::map<std::string, Entry, std::less<>> entries_;
};

}  // namespace portjob
