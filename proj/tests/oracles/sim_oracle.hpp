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

// Naive 1-second time-stepping model of the batch policy. Independent of the
// event-driven engine: it recomputes everything from scratch at every tick
// and answers the backfill question by scanning future time points.

#include <algorithm>
#include <cstdint>
#include <vector>

namespace oracle {

struct Job {
  int nodes = 1;
  int walltime = 1;
  int runtime = 1;
  int submit = 0;
  int exit_code = 0;
};

struct Outcome {
  std::vector<int> start;
  std::vector<int> end;
  std::vector<bool> killed;
};

// `jobs` must be listed in submission order (nondecreasing submit).
inline Outcome simulate(int total_nodes, bool backfill, const std::vector<Job>& jobs) {
  enum Phase { unsubmitted, pending, running, finished };
  const int n = static_cast<int>(jobs.size());
  std::vector<Phase> phase(n, unsubmitted);
  Outcome out{std::vector<int>(n, -1), std::vector<int>(n, -1), std::vector<bool>(n, false)};

  auto used_now = [&] {
    int used = 0;
    for (int i = 0; i < n; ++i) {
      if (phase[i] == running) used += jobs[i].nodes;
    }
    return used;
  };
  // Nodes still held at time s, assuming every running job lasts its walltime.
  auto held_at = [&](int s) {
    int held = 0;
    for (int i = 0; i < n; ++i) {
      if (phase[i] == running && out.start[i] + jobs[i].walltime > s) held += jobs[i].nodes;
    }
    return held;
  };

  for (int t = 0;; ++t) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (int i = 0; i < n; ++i) {
        if (phase[i] != running) continue;
        const int life = std::min(jobs[i].runtime, jobs[i].walltime);
        if (t >= out.start[i] + life) {
          phase[i] = finished;
          out.end[i] = t;
          out.killed[i] = jobs[i].runtime > jobs[i].walltime;
          changed = true;
        }
      }
      for (int i = 0; i < n; ++i) {
        if (phase[i] == unsubmitted && jobs[i].submit <= t) {
          if (jobs[i].nodes > total_nodes) {
            phase[i] = finished;
            out.start[i] = -1;
            out.end[i] = t;
          } else {
            phase[i] = pending;
          }
          changed = true;
        }
      }

      int head = -1;
      for (int i = 0; i < n; ++i) {
        if (phase[i] != pending) continue;
        if (jobs[i].nodes <= total_nodes - used_now()) {
          phase[i] = running;
          out.start[i] = t;
          changed = true;
        } else {
          head = i;
          break;
        }
      }
      if (!backfill || head < 0) continue;

      int reserve = t;
      while (total_nodes - held_at(reserve) < jobs[head].nodes) ++reserve;
      for (int i = head + 1; i < n; ++i) {
        if (phase[i] != pending) continue;
        if (jobs[i].nodes > total_nodes - used_now()) continue;
        bool ok = t + jobs[i].walltime <= reserve;
        if (!ok) {
          int held = held_at(reserve) + jobs[i].nodes;
          ok = total_nodes - held >= jobs[head].nodes;
        }
        if (ok) {
          phase[i] = running;
          out.start[i] = t;
          changed = true;
        }
      }
    }
    if (std::all_of(phase.begin(), phase.end(), [](Phase p) { return p == finished; })) break;
  }
  return out;
}

}  // namespace oracle
