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

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "portjob/executor.hpp"
#include "portjob/job.hpp"
#include "portjob/process.hpp"

namespace portjob {

// Runs the processes of one launch plan as a single process group and
// reports one terminal JobStatus when the last of them exits:
//   - all exit 0                        -> COMPLETED(0)
//   - killed by our cancel signals      -> CANCELED
//   - otherwise the first failure wins  -> FAILED(code or 128+signal)
class ProcessGroupRunner {
 public:
  using Completion = std::function<void(const JobStatus&)>;
  using Seconds = std::chrono::duration<double>;

  explicit ProcessGroupRunner(Seconds grace = Seconds(5.0));
  ~ProcessGroupRunner();  // SIGKILLs and reaps everything still running

  // Spawns every process in `plan`. `base_env` is overlaid with the spec's
  // environment and then each command's additions. Throws SubmitFailed with
  // nothing left running. `done` runs on the monitor thread and may fire
  // before launch() returns.
  pid_t launch(const JobSpec& spec, const LaunchPlan& plan, const Environment& base_env,
               Completion done);

  // SIGTERM now, SIGKILL after the grace period. False if the group already
  // finished or is unknown.
  bool cancel(pid_t group);

  // Immediate SIGKILL of every live group; their completions still fire.
  void kill_all();

  std::size_t live() const;
  Seconds grace() const { return grace_; }

 private:
  struct Group {
    std::size_t remaining = 0;
    bool cancel_requested = false;
    std::optional<ExitInfo> first_failure;
    Completion done;
  };

  void on_exit(pid_t group, const ExitInfo& info);

  Seconds grace_;
  mutable std::mutex mu_;
  std::unordered_map<pid_t, Group> groups_;
  std::unique_ptr<ProcessMonitor> monitor_;
};

}  // namespace portjob
