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

#include "portjob/job.hpp"

#include <array>
#include <random>
#include <utility>

#include "portjob/error.hpp"

namespace portjob {

namespace {

struct Edge {
  JobState from;
  JobState to;
};

constexpr std::array<Edge, 8> kEdges{{
    {JobState::NEW, JobState::QUEUED},
    {JobState::NEW, JobState::FAILED},
    {JobState::QUEUED, JobState::ACTIVE},
    {JobState::QUEUED, JobState::CANCELED},
    {JobState::QUEUED, JobState::FAILED},
    {JobState::ACTIVE, JobState::COMPLETED},
    {JobState::ACTIVE, JobState::FAILED},
    {JobState::ACTIVE, JobState::CANCELED},
}};

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

InvalidSpec::InvalidSpec(std::vector<std::string> violations)
    : Error("invalid job spec: " + join(violations, "; ")),
      violations_(std::move(violations)) {}

std::string_view to_string(Launcher launcher) {
  switch (launcher) {
    case Launcher::single: return "single";
    case Launcher::multiple: return "multiple";
    case Launcher::mpi_like: return "mpi_like";
  }
  return "?";
}

std::optional<Launcher> parse_launcher(std::string_view text) {
  if (text == "single") return Launcher::single;
  if (text == "multiple") return Launcher::multiple;
  if (text == "mpi_like") return Launcher::mpi_like;
  return std::nullopt;
}

std::vector<std::string> validate_spec(const JobSpec& spec, ValidationMode mode) {
  std::vector<std::string> out;
  const auto& r = spec.resources;
  if (spec.executable.empty()) out.emplace_back("executable must be non-empty");
  if (r.node_count < 1) out.emplace_back("node_count must be ≥ 1");
  if (r.processes_per_node < 1) out.emplace_back("processes_per_node must be ≥ 1");
  if (r.cpu_cores_per_process < 1) out.emplace_back("cpu_cores_per_process must be ≥ 1");
  if (r.gpu_cores_per_process < 0) out.emplace_back("gpu_cores_per_process must be ≥ 0");
  if (mode == ValidationMode::batch && spec.attributes.wall_time.count() <= 0) {
    out.emplace_back("wall_time must be > 0");
  } else if (spec.attributes.wall_time.count() < 0) {
    out.emplace_back("wall_time must be ≥ 0");
  }
  if (spec.launcher == Launcher::single && r.node_count >= 1 && r.processes_per_node >= 1 &&
      r.total_processes() != 1) {
    out.emplace_back("launcher 'single' requires exactly one process (total_processes = " +
                     std::to_string(r.total_processes()) + ")");
  }
  return out;
}

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::NEW: return "NEW";
    case JobState::QUEUED: return "QUEUED";
    case JobState::ACTIVE: return "ACTIVE";
    case JobState::COMPLETED: return "COMPLETED";
    case JobState::FAILED: return "FAILED";
    case JobState::CANCELED: return "CANCELED";
  }
  return "?";
}

std::optional<JobState> parse_state(std::string_view text) {
  for (auto s : kAllStates) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

bool transition_allowed(JobState from, JobState to) {
  for (const auto& e : kEdges) {
    if (e.from == from && e.to == to) return true;
  }
  return false;
}

JobStatus JobStatus::make(JobState state, std::optional<int> exit_code,
                          std::optional<std::string> message) {
  JobStatus s;
  s.state = state;
  s.timestamp = Clock::now();
  s.exit_code = exit_code;
  s.message = std::move(message);
  return s;
}

bool same_event(const JobStatus& a, const JobStatus& b) {
  return a.state == b.state && a.exit_code == b.exit_code && a.message == b.message;
}

std::string make_job_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}() ^
                                          static_cast<std::uint64_t>(
                                              Clock::now().time_since_epoch().count())};
  static constexpr char kHex[] = "0123456789abcdef";
  auto bits = rng();
  std::string id(12, '0');
  for (auto& c : id) {
    c = kHex[bits & 0xf];
    bits >>= 4;
  }
  return id;
}

Job::Job(JobSpec spec) : Job(make_job_id(), std::move(spec)) {}

Job::Job(std::string id, JobSpec spec) : id(std::move(id)), spec(std::move(spec)) {
  status_history.push_back(JobStatus::make(JobState::NEW));
}

std::vector<JobState> Job::states() const {
  std::vector<JobState> out;
  out.reserve(status_history.size());
  for (const auto& s : status_history) out.push_back(s.state);
  return out;
}

ApplyResult apply_status(Job& job, JobStatus status) {
  if (status.exit_code &&
      status.state != JobState::COMPLETED && status.state != JobState::FAILED) {
    throw IllegalTransition("exit code attached to non-exit state " +
                            std::string(to_string(status.state)));
  }
  if (status.state == JobState::COMPLETED && status.exit_code.value_or(0) != 0) {
    throw IllegalTransition("COMPLETED requires exit code 0");
  }
  if (status.state == JobState::COMPLETED && !status.exit_code) status.exit_code = 0;

  if (job.status_history.empty()) {
    if (status.state != JobState::NEW) {
      throw IllegalTransition("history must start at NEW");
    }
    job.status_history.push_back(std::move(status));
    return ApplyResult::appended;
  }
  const JobStatus& last = job.status_history.back();
  if (is_terminal(last.state) && same_event(last, status)) {
    return ApplyResult::duplicate_terminal;
  }
  if (!transition_allowed(last.state, status.state)) {
    throw IllegalTransition("illegal transition " + std::string(to_string(last.state)) +
                            " -> " + std::string(to_string(status.state)) + " for job " +
                            job.id);
  }
  job.status_history.push_back(std::move(status));
  return ApplyResult::appended;
}

}  // namespace portjob
