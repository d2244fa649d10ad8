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

#include <sys/types.h>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "portjob/simsched.hpp"

namespace portjob::simsched {

struct StoreConfig {
  std::int64_t nodes = 16;
  std::int64_t cores_per_node = 4;
  bool backfill = false;
  // Stepped clocks move only on tick(); real-time clocks follow the
  // monotonic clock scaled by `timescale` wall seconds per virtual second.
  bool stepped = false;
  double timescale = 0.05;
};

struct Directives {
  std::int64_t nodes = 1;
  std::int64_t walltime = 3600;
  std::string queue;
  std::string account;
};

// Reads "#SSUB -N <n>", "#SSUB -t <seconds>", "#SSUB -q <queue>" and
// "#SSUB -A <account>" lines. Throws ParseError on anything malformed.
Directives parse_directives(std::string_view script_text);

// File-backed cluster shared by the command tools. Layout of the state
// directory:
//   cluster.json        configuration, clock, id counter, active job ids
//   jobs/<id>.json      one record per job
//   jobs/<id>.out       workload stdout+stderr
//   jobs/<id>.exit      "<exit code> <monotonic ns>" written when the workload ends
//   events.log          formatted SimEvents, appended
//   lock                flock(2) target serializing every tool invocation
//
// Constructing a store takes the lock and brings the cluster up to the
// current clock: finished workloads are reported, walltime kills applied,
// queued jobs started (their workloads spawned). The destructor persists
// the state and releases the lock.
class SimStore {
 public:
  static void init(const std::filesystem::path& dir, const StoreConfig& config);

  explicit SimStore(std::filesystem::path dir);
  ~SimStore();

  SimStore(const SimStore&) = delete;
  SimStore& operator=(const SimStore&) = delete;

  // Throws ParseError for bad directives and Error for oversized requests.
  JobId submit_script(const std::filesystem::path& script);
  // nullopt for ids this cluster never issued.
  std::optional<Token> status(JobId id);
  // False for unknown ids; finished jobs are left alone.
  bool cancel(JobId id);
  // Stepped clocks only.
  void tick(VTime seconds);

  const SimCluster& cluster() const { return cluster_; }
  const StoreConfig& config() const { return config_; }
  std::vector<JobId> active_ids() const;

  void save();

 private:
  void load();
  void reconcile(VTime target);
  VTime clock_now() const;
  void apply_side_effects(const std::vector<SimEvent>& events);
  void spawn_workload(const SimJob& job);
  std::optional<SimJob> load_finished(JobId id) const;

  std::filesystem::path dir_;
  int lock_fd_ = -1;
  StoreConfig config_;
  long long epoch_ns_ = 0;
  SimCluster cluster_;
  std::map<JobId, pid_t> groups_;
  std::set<JobId> dirty_;
};

}  // namespace portjob::simsched
