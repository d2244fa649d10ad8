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

#include "portjob/simsched.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace portjob::simsched {

std::string_view to_string(Token token) {
  switch (token) {
    case Token::PEND: return "PEND";
    case Token::RUN: return "RUN";
    case Token::DONE: return "DONE";
    case Token::FAIL: return "FAIL";
    case Token::KILL: return "KILL";
  }
  return "UNKNOWN";
}

std::optional<Token> parse_token(std::string_view text) {
  for (auto t : {Token::PEND, Token::RUN, Token::DONE, Token::FAIL, Token::KILL}) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

std::string_view to_string(SimEvent::Kind kind) {
  switch (kind) {
    case SimEvent::Kind::submit: return "submit";
    case SimEvent::Kind::start: return "start";
    case SimEvent::Kind::finish: return "finish";
    case SimEvent::Kind::cancel: return "cancel";
  }
  return "?";
}

std::string format_event(const SimEvent& event) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.3f %s %lld %s", event.time,
                std::string(to_string(event.kind)).c_str(),
                static_cast<long long>(event.job_id), std::string(to_string(event.token)).c_str());
  return buf;
}

std::optional<VTime> SimJob::scheduled_end() const {
  if (!start_time) return std::nullopt;
  if (runtime && *runtime <= walltime) return *start_time + *runtime;
  return *start_time + walltime;
}

std::int64_t SimCluster::busy_nodes() const {
  std::int64_t busy = 0;
  for (const auto& j : running) busy += j.nodes;
  return busy;
}

const SimJob* SimCluster::find(JobId id) const {
  for (const auto* list : {&running, &pending, &finished}) {
    for (const auto& j : *list) {
      if (j.id == id) return &j;
    }
  }
  return nullptr;
}

ScheduleResult schedule_step(const SimCluster& cluster, bool backfill) {
  ScheduleResult result;
  std::int64_t free = cluster.free_nodes();
  const auto& queue = cluster.pending;

  std::size_t head = 0;
  while (head < queue.size() && queue[head].nodes <= free) {
    result.starts.push_back({queue[head].id, false});
    free -= queue[head].nodes;
    ++head;
  }
  if (!backfill || head == queue.size()) return result;

  // Walltime horizons of everything that will be running after this step.
  std::vector<std::pair<VTime, std::int64_t>> horizons;
  for (const auto& j : cluster.running) horizons.emplace_back(*j.start_time + j.walltime, j.nodes);
  for (std::size_t i = 0; i < head; ++i) {
    horizons.emplace_back(cluster.now + queue[i].walltime, queue[i].nodes);
  }
  std::sort(horizons.begin(), horizons.end());

  const std::int64_t need = queue[head].nodes;
  std::int64_t avail = free;
  VTime shadow = std::numeric_limits<VTime>::infinity();
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    avail += horizons[i].second;
    if (avail >= need) {
      shadow = horizons[i].first;
      for (std::size_t k = i + 1; k < horizons.size() && horizons[k].first == shadow; ++k) {
        avail += horizons[k].second;
      }
      break;
    }
  }
  std::int64_t extra = avail - need;
  result.reservation = Reservation{queue[head].id, shadow};

  for (std::size_t i = head + 1; i < queue.size(); ++i) {
    const auto& job = queue[i];
    if (job.nodes > free) continue;
    if (cluster.now + job.walltime <= shadow) {
      result.starts.push_back({job.id, true});
      free -= job.nodes;
    } else if (job.nodes <= extra) {
      result.starts.push_back({job.id, true});
      free -= job.nodes;
      extra -= job.nodes;
    }
  }
  return result;
}

namespace {

void apply_starts(SimCluster& cluster, std::vector<SimEvent>& events) {
  auto decision = schedule_step(cluster, cluster.backfill);
  for (const auto& start : decision.starts) {
    auto it = std::find_if(cluster.pending.begin(), cluster.pending.end(),
                           [&](const SimJob& j) { return j.id == start.job_id; });
    SimJob job = std::move(*it);
    cluster.pending.erase(it);
    job.start_time = cluster.now;
    job.token = Token::RUN;
    events.push_back({cluster.now, SimEvent::Kind::start, job.id, Token::RUN});
    cluster.running.push_back(std::move(job));
  }
}

}  // namespace

std::vector<SimEvent> submit(SimCluster& cluster, SimJob job) {
  std::vector<SimEvent> events;
  if (job.id == 0) job.id = cluster.next_id;
  cluster.next_id = std::max(cluster.next_id, job.id + 1);
  job.submit_time = cluster.now;
  job.start_time.reset();
  job.end_time.reset();
  events.push_back({cluster.now, SimEvent::Kind::submit, job.id, Token::PEND});
  if (job.nodes > cluster.total_nodes || job.nodes < 1) {
    job.token = Token::FAIL;
    job.exit_code = 1;
    job.end_time = cluster.now;
    events.push_back({cluster.now, SimEvent::Kind::finish, job.id, Token::FAIL});
    cluster.finished.push_back(std::move(job));
    return events;
  }
  job.token = Token::PEND;
  cluster.pending.push_back(std::move(job));
  apply_starts(cluster, events);
  return events;
}

std::vector<SimEvent> advance(SimCluster& cluster, VTime to) {
  std::vector<SimEvent> events;
  for (;;) {
    std::optional<VTime> next;
    for (const auto& j : cluster.running) {
      auto end = j.scheduled_end();
      if (end && (!next || *end < *next)) next = end;
    }
    if (!next || *next > to) break;
    // Late exit reports can land behind the clock; events never go backwards.
    cluster.now = std::max(cluster.now, *next);
    const VTime t = cluster.now;

    std::vector<SimJob> done;
    auto split = std::stable_partition(cluster.running.begin(), cluster.running.end(),
                                       [&](const SimJob& j) { return *j.scheduled_end() != *next; });
    std::move(split, cluster.running.end(), std::back_inserter(done));
    cluster.running.erase(split, cluster.running.end());
    std::sort(done.begin(), done.end(),
              [](const SimJob& a, const SimJob& b) { return a.id < b.id; });
    for (auto& job : done) {
      const bool completed = job.runtime && *job.runtime <= job.walltime;
      job.token = !completed ? Token::KILL : job.exit_code == 0 ? Token::DONE : Token::FAIL;
      job.end_time = t;
      events.push_back({t, SimEvent::Kind::finish, job.id, job.token});
      cluster.finished.push_back(std::move(job));
    }
    apply_starts(cluster, events);
  }
  cluster.now = std::max(cluster.now, to);
  return events;
}

std::vector<SimEvent> cancel(SimCluster& cluster, JobId id) {
  std::vector<SimEvent> events;
  auto take = [&](std::vector<SimJob>& from) -> std::optional<SimJob> {
    auto it = std::find_if(from.begin(), from.end(), [&](const SimJob& j) { return j.id == id; });
    if (it == from.end()) return std::nullopt;
    SimJob job = std::move(*it);
    from.erase(it);
    return job;
  };
  bool was_running = false;
  auto job = take(cluster.pending);
  if (!job) {
    job = take(cluster.running);
    was_running = job.has_value();
  }
  if (!job) return events;
  job->token = Token::KILL;
  job->end_time = cluster.now;
  events.push_back({cluster.now, SimEvent::Kind::cancel, job->id, Token::KILL});
  cluster.finished.push_back(std::move(*job));
  // A canceled head of queue can unblock others just as a finish can.
  if (was_running || !cluster.pending.empty()) apply_starts(cluster, events);
  return events;
}

void report_exit(SimCluster& cluster, JobId id, VTime runtime, int exit_code) {
  for (auto& j : cluster.running) {
    if (j.id == id) {
      j.runtime = std::max<VTime>(0, runtime);
      j.exit_code = exit_code;
      return;
    }
  }
}

}  // namespace portjob::simsched
