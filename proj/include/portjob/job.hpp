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
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace portjob {

struct ResourceSpec {
  std::int64_t node_count = 1;
  std::int64_t processes_per_node = 1;
  std::int64_t cpu_cores_per_process = 1;
  std::int64_t gpu_cores_per_process = 0;
  bool exclusive = false;

  std::int64_t total_processes() const { return node_count * processes_per_node; }
  std::int64_t total_cores() const { return total_processes() * cpu_cores_per_process; }
  std::int64_t total_gpus() const { return total_processes() * gpu_cores_per_process; }

  friend bool operator==(const ResourceSpec&, const ResourceSpec&) = default;
};

struct JobAttributes {
  std::chrono::seconds wall_time{600};
  std::optional<std::string> queue_name;
  std::optional<std::string> account;
  // Ordered so rendered directives are deterministic.
  std::map<std::string, std::string> custom;

  friend bool operator==(const JobAttributes&, const JobAttributes&) = default;
};

enum class Launcher { single, multiple, mpi_like };

std::string_view to_string(Launcher launcher);
std::optional<Launcher> parse_launcher(std::string_view text);

struct JobSpec {
  std::string executable;
  std::vector<std::string> arguments;
  std::map<std::string, std::string> environment;
  std::optional<std::string> directory;
  std::optional<std::string> stdin_path;
  std::optional<std::string> stdout_path;
  std::optional<std::string> stderr_path;
  ResourceSpec resources;
  JobAttributes attributes;
  Launcher launcher = Launcher::single;

  friend bool operator==(const JobSpec&, const JobSpec&) = default;
};

// Batch jobs need a positive wall time; pilot tasks may be zero-duration.
enum class ValidationMode { batch, task };

// Every invariant violation of `spec`, in a fixed order. Empty means valid.
std::vector<std::string> validate_spec(const JobSpec& spec,
                                       ValidationMode mode = ValidationMode::batch);

enum class JobState { NEW, QUEUED, ACTIVE, COMPLETED, FAILED, CANCELED };

inline constexpr JobState kAllStates[] = {JobState::NEW,       JobState::QUEUED,
                                          JobState::ACTIVE,    JobState::COMPLETED,
                                          JobState::FAILED,    JobState::CANCELED};

std::string_view to_string(JobState state);
std::optional<JobState> parse_state(std::string_view text);

constexpr bool is_terminal(JobState s) {
  return s == JobState::COMPLETED || s == JobState::FAILED || s == JobState::CANCELED;
}

bool transition_allowed(JobState from, JobState to);

using Clock = std::chrono::steady_clock;

struct JobStatus {
  JobState state = JobState::NEW;
  Clock::time_point timestamp = Clock::now();
  std::optional<int> exit_code;
  std::optional<std::string> message;

  static JobStatus make(JobState state, std::optional<int> exit_code = std::nullopt,
                        std::optional<std::string> message = std::nullopt);
};

// Equal in state, exit code and message; timestamps are ignored.
bool same_event(const JobStatus& a, const JobStatus& b);

// Opaque random identifier, unique across processes with overwhelming probability.
std::string make_job_id();

struct Job {
  std::string id;
  std::optional<std::string> native_id;
  JobSpec spec;
  std::vector<JobStatus> status_history;

  Job() = default;
  explicit Job(JobSpec spec);
  Job(std::string id, JobSpec spec);

  const JobStatus& status() const { return status_history.back(); }
  JobState state() const { return status().state; }
  bool terminal() const { return is_terminal(state()); }
  std::vector<JobState> states() const;
};

enum class ApplyResult { appended, duplicate_terminal };

// Appends `status` to the job's history when the transition is legal.
// A repeated identical terminal status is dropped. Throws IllegalTransition
// for everything else, including a JobStatus that violates its own exit-code
// invariants.
ApplyResult apply_status(Job& job, JobStatus status);

}  // namespace portjob
