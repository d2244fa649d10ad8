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

#include <doctest.h>

#include <random>
#include <set>

#include "oracles/state_oracle.hpp"
#include "portjob/error.hpp"
#include "portjob/job.hpp"

using namespace portjob;

namespace {

JobStatus with_code(JobState s, std::optional<int> code) { return JobStatus::make(s, code); }

// A status that is well-formed for its own state.
JobStatus natural(JobState s) {
  if (s == JobState::COMPLETED) return with_code(s, 0);
  if (s == JobState::FAILED) return with_code(s, 1);
  return JobStatus::make(s);
}

// Walks a job through legal edges until it sits at `target`.
Job job_at(JobState target) {
  Job job(JobSpec{"/bin/true"});
  switch (target) {
    case JobState::NEW: break;
    case JobState::QUEUED: apply_status(job, natural(JobState::QUEUED)); break;
    case JobState::ACTIVE:
      apply_status(job, natural(JobState::QUEUED));
      apply_status(job, natural(JobState::ACTIVE));
      break;
    default:
      apply_status(job, natural(JobState::QUEUED));
      apply_status(job, natural(JobState::ACTIVE));
      apply_status(job, natural(target));
  }
  return job;
}

}  // namespace

TEST_CASE("transition table matches the reference matrix on all 36 pairs") {
  int edges = 0;
  for (auto from : kAllStates) {
    for (auto to : kAllStates) {
      const bool want = oracle::legal(static_cast<int>(from), static_cast<int>(to));
      INFO(to_string(from) << " -> " << to_string(to));
      CHECK(transition_allowed(from, to) == want);
      edges += want;
    }
  }
  CHECK(edges == 8);
}

TEST_CASE("apply_status enforces the table from every reachable state") {
  for (auto from : kAllStates) {
    for (auto to : kAllStates) {
      Job job = job_at(from);
      const auto before = job.status_history.size();
      auto st = natural(to);
      if (from == to && is_terminal(from)) {
        CHECK(apply_status(job, st) == ApplyResult::duplicate_terminal);
        CHECK(job.status_history.size() == before);
      } else if (oracle::legal(static_cast<int>(from), static_cast<int>(to))) {
        CHECK(apply_status(job, st) == ApplyResult::appended);
        CHECK(job.state() == to);
      } else {
        CHECK_THROWS_AS(apply_status(job, st), IllegalTransition);
        CHECK(job.status_history.size() == before);
      }
    }
  }
}

TEST_CASE("exit code rules") {
  Job a = job_at(JobState::ACTIVE);
  CHECK_THROWS_AS(apply_status(a, with_code(JobState::COMPLETED, 3)), IllegalTransition);
  apply_status(a, JobStatus::make(JobState::COMPLETED));
  CHECK(a.status().exit_code == 0);

  Job b = job_at(JobState::ACTIVE);
  CHECK_THROWS_AS(apply_status(b, with_code(JobState::CANCELED, 0)), IllegalTransition);
  apply_status(b, with_code(JobState::FAILED, 137));
  CHECK(b.status().exit_code == 137);
  // Same terminal state with a different payload is a conflict, not a repeat.
  CHECK_THROWS_AS(apply_status(b, with_code(JobState::FAILED, 1)), IllegalTransition);
  CHECK(apply_status(b, with_code(JobState::FAILED, 137)) == ApplyResult::duplicate_terminal);
}

TEST_CASE("randomized event sequences keep every history legal") {
  std::mt19937 rng(20261018);
  std::uniform_int_distribution<int> pick(0, 5);
  for (int round = 0; round < 10000; ++round) {
    Job job(JobSpec{"/bin/true"});
    bool ended = false;
    int appended_after_end = 0;
    for (int k = 0; k < 12; ++k) {
      auto s = static_cast<JobState>(pick(rng));
      try {
        if (apply_status(job, natural(s)) == ApplyResult::appended && ended) ++appended_after_end;
      } catch (const IllegalTransition&) {
      }
      ended = job.terminal();
    }
    REQUIRE(job.status_history.front().state == JobState::NEW);
    for (std::size_t i = 1; i < job.status_history.size(); ++i) {
      REQUIRE(oracle::legal(static_cast<int>(job.status_history[i - 1].state),
                            static_cast<int>(job.status_history[i].state)));
    }
    REQUIRE(appended_after_end == 0);
  }
}

TEST_CASE("state names round-trip") {
  for (auto s : kAllStates) CHECK(parse_state(to_string(s)) == s);
  CHECK_FALSE(parse_state("RUNNING"));
  CHECK(is_terminal(JobState::CANCELED));
  CHECK_FALSE(is_terminal(JobState::ACTIVE));
}

TEST_CASE("validate_spec reports each violation in order") {
  JobSpec ok{"/bin/echo"};
  CHECK(validate_spec(ok).empty());

  JobSpec bad;
  bad.resources.node_count = 0;
  bad.resources.processes_per_node = 0;
  bad.resources.cpu_cores_per_process = 0;
  bad.resources.gpu_cores_per_process = -1;
  bad.attributes.wall_time = std::chrono::seconds(0);
  auto v = validate_spec(bad);
  REQUIRE(v.size() == 6);
  CHECK(v[0] == "executable must be non-empty");
  CHECK(v[1] == "node_count must be ≥ 1");
  CHECK(v[5] == "wall_time must be > 0");
  // Tasks may run with no wall time.
  CHECK(validate_spec(bad, ValidationMode::task).size() == 5);

  JobSpec multi{"/bin/echo"};
  multi.resources.processes_per_node = 2;
  auto w = validate_spec(multi);
  REQUIRE(w.size() == 1);
  CHECK(w[0].find("total_processes = 2") != std::string::npos);
  multi.launcher = Launcher::multiple;
  CHECK(validate_spec(multi).empty());

  InvalidSpec err(v);
  CHECK(err.violations().size() == 6);
}

TEST_CASE("job ids are distinct") {
  std::set<std::string> ids;
  for (int i = 0; i < 5000; ++i) ids.insert(make_job_id());
  CHECK(ids.size() == 5000);
  Job j(JobSpec{"/bin/true"});
  CHECK(j.state() == JobState::NEW);
  CHECK(j.states() == std::vector<JobState>{JobState::NEW});
}
