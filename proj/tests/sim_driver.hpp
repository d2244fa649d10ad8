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

// Replays an oracle workload through the event-driven engine.

#include <map>
#include <random>
#include <vector>

#include "oracles/sim_oracle.hpp"
#include "portjob/simsched.hpp"

namespace simtest {

namespace ss = portjob::simsched;

struct EngineRun {
  oracle::Outcome outcome;
  std::vector<ss::SimEvent> events;
  // First reservation computed for each job while it was the blocked head.
  std::map<ss::JobId, ss::VTime> first_reservation;
  bool oversubscribed = false;
};

inline EngineRun run_engine(int total_nodes, bool backfill, const std::vector<oracle::Job>& jobs) {
  ss::SimCluster cluster;
  cluster.total_nodes = total_nodes;
  cluster.backfill = backfill;
  EngineRun run;
  const int n = static_cast<int>(jobs.size());
  run.outcome = {std::vector<int>(n, -1), std::vector<int>(n, -1), std::vector<bool>(n, false)};

  auto observe = [&](std::vector<ss::SimEvent> evs) {
    if (cluster.busy_nodes() > cluster.total_nodes) run.oversubscribed = true;
    auto step = ss::schedule_step(cluster, backfill);
    if (step.reservation) run.first_reservation.emplace(step.reservation->job_id, step.reservation->time);
    run.events.insert(run.events.end(), evs.begin(), evs.end());
  };

  for (int i = 0; i < n; ++i) {
    observe(ss::advance(cluster, jobs[i].submit));
    ss::SimJob job;
    job.id = i + 1;
    job.nodes = jobs[i].nodes;
    job.walltime = jobs[i].walltime;
    job.runtime = jobs[i].runtime;
    job.exit_code = jobs[i].exit_code;
    observe(ss::submit(cluster, job));
  }
  // Step through completions one time point at a time to check conservation.
  while (!cluster.running.empty() || !cluster.pending.empty()) {
    ss::VTime next = 1e18;
    for (const auto& j : cluster.running) next = std::min(next, *j.scheduled_end());
    observe(ss::advance(cluster, next));
  }
  for (const auto& j : cluster.finished) {
    const auto idx = static_cast<std::size_t>(j.id - 1);
    run.outcome.start[idx] = j.start_time ? static_cast<int>(*j.start_time) : -1;
    run.outcome.end[idx] = static_cast<int>(*j.end_time);
    run.outcome.killed[idx] = j.token == ss::Token::KILL;
  }
  return run;
}

// ≤ max_jobs jobs on ≤ max_nodes nodes, walltimes ≤ 20.
struct Instance {
  int nodes = 1;
  std::vector<oracle::Job> jobs;
};

inline Instance random_instance(std::mt19937& rng, int max_jobs = 6, int max_nodes = 4,
                                int max_walltime = 20) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  Instance inst;
  inst.nodes = uni(1, max_nodes);
  const int count = uni(1, max_jobs);
  int submit = 0;
  for (int i = 0; i < count; ++i) {
    oracle::Job j;
    j.nodes = uni(1, inst.nodes);
    j.walltime = uni(1, max_walltime);
    // Roughly one in five overruns its walltime.
    j.runtime = uni(0, 4) == 0 ? j.walltime + uni(1, 5) : uni(1, j.walltime);
    j.exit_code = uni(0, 5) == 0 ? 1 : 0;
    submit += uni(0, 3) == 0 ? uni(1, 6) : 0;
    j.submit = submit;
    inst.jobs.push_back(j);
  }
  return inst;
}

}  // namespace simtest
