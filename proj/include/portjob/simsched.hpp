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

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Deterministic simulated batch scheduler: FIFO first-fit over whole nodes
// with optional EASY backfill. The engine is a value (SimCluster) plus free
// functions; callers serialize access.
namespace portjob::simsched {

using VTime = double;  // virtual seconds
using JobId = std::int64_t;

enum class Token { PEND, RUN, DONE, FAIL, KILL };

std::string_view to_string(Token token);
std::optional<Token> parse_token(std::string_view text);

struct SimJob {
  JobId id = 0;
  std::int64_t nodes = 1;
  VTime walltime = 0;
  // Actual duration; unknown until the workload reports back. A job whose
  // runtime exceeds (or never reports before) its walltime is killed.
  std::optional<VTime> runtime;
  int exit_code = 0;
  VTime submit_time = 0;
  std::optional<VTime> start_time;
  std::optional<VTime> end_time;
  Token token = Token::PEND;
  std::string queue;
  std::string account;
  std::string script;

  // Time at which the job leaves the machine if nothing else happens.
  std::optional<VTime> scheduled_end() const;
};

struct SimEvent {
  enum class Kind { submit, start, finish, cancel };

  VTime time = 0;
  Kind kind = Kind::submit;
  JobId job_id = 0;
  Token token = Token::PEND;  // resulting token

  friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

std::string_view to_string(SimEvent::Kind kind);
// "<time> <kind> <id> <TOKEN>", time with millisecond precision.
std::string format_event(const SimEvent& event);

struct SimCluster {
  std::int64_t total_nodes = 1;
  std::int64_t node_cores = 1;
  bool backfill = false;
  VTime now = 0;
  std::vector<SimJob> running;   // start order
  std::vector<SimJob> pending;   // submission order
  std::vector<SimJob> finished;  // end order
  JobId next_id = 1;

  std::int64_t busy_nodes() const;
  std::int64_t free_nodes() const { return total_nodes - busy_nodes(); }
  const SimJob* find(JobId id) const;
};

struct StartDecision {
  JobId job_id = 0;
  bool backfilled = false;

  friend bool operator==(const StartDecision&, const StartDecision&) = default;
};

// Earliest time the blocked queue head is guaranteed its nodes, judged by
// the walltimes of everything running.
struct Reservation {
  JobId job_id = 0;
  VTime time = 0;
};

struct ScheduleResult {
  std::vector<StartDecision> starts;
  std::optional<Reservation> reservation;  // only with backfill and a blocked head
};

// Pure policy step at cluster.now. Without backfill: start the longest
// prefix of the queue that fits, stop at the first job that does not.
// With backfill: then reserve the head's start and start later jobs (in
// submission order) that fit now and either end before the reservation or
// fit in the nodes left over at it.
ScheduleResult schedule_step(const SimCluster& cluster, bool backfill);

// Enqueues at cluster.now and schedules. Assigns the next id when job.id is
// 0. Jobs larger than the cluster fail immediately.
std::vector<SimEvent> submit(SimCluster& cluster, SimJob job);

// Processes every completion up to `to` in time order, rescheduling after
// each completion time, then sets now = to.
std::vector<SimEvent> advance(SimCluster& cluster, VTime to);

// PEND or RUN -> KILL at cluster.now. Unknown or finished ids are a no-op.
std::vector<SimEvent> cancel(SimCluster& cluster, JobId id);

// Records the actual runtime and exit code of a running job. Takes effect on
// the next advance().
void report_exit(SimCluster& cluster, JobId id, VTime runtime, int exit_code);

}  // namespace portjob::simsched
