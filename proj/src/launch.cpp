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

#include "portjob/launch.hpp"

#include <signal.h>
#include <sys/wait.h>

#include <cerrno>
#include <vector>

#include "portjob/error.hpp"

namespace portjob {

ProcessGroupRunner::ProcessGroupRunner(Seconds grace)
    : grace_(grace), monitor_(std::make_unique<ProcessMonitor>()) {}

ProcessGroupRunner::~ProcessGroupRunner() {
  kill_all();
  // The monitor reaps whatever is left; completions no longer matter.
  {
    std::lock_guard lk(mu_);
    for (auto& [_, g] : groups_) g.done = nullptr;
  }
  monitor_.reset();
}

pid_t ProcessGroupRunner::launch(const JobSpec& spec, const LaunchPlan& plan,
                                 const Environment& base_env, Completion done) {
  if (plan.processes.empty()) throw SubmitFailed("spawn failed: empty launch plan");
  Environment env = base_env;
  for (const auto& [k, v] : spec.environment) env[k] = v;

  std::vector<pid_t> pids;
  pid_t group = 0;
  const bool shared_output = plan.processes.size() > 1;
  try {
    for (std::size_t i = 0; i < plan.processes.size(); ++i) {
      const auto& cmd = plan.processes[i];
      SpawnRequest req;
      req.argv = cmd.argv;
      req.environment = env;
      for (const auto& [k, v] : cmd.environment) req.environment[k] = v;
      req.directory = spec.directory;
      req.stdin_path = spec.stdin_path;
      req.stdout_path = spec.stdout_path;
      req.stderr_path = spec.stderr_path;
      req.process_group = group;
      req.append_output = shared_output;
      req.truncate_output = i == 0;
      pid_t pid = spawn_process(req);
      if (i == 0) group = pid;
      pids.push_back(pid);
    }
  } catch (...) {
    if (group != 0) ::kill(-group, SIGKILL);
    for (pid_t pid : pids) {
      int status;
      while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
      }
    }
    throw;
  }

  {
    std::lock_guard lk(mu_);
    auto& g = groups_[group];
    g.remaining = pids.size();
    g.done = std::move(done);
  }
  for (pid_t pid : pids) {
    monitor_->watch(pid, [this, group](pid_t, const ExitInfo& info) { on_exit(group, info); });
  }
  return group;
}

void ProcessGroupRunner::on_exit(pid_t group, const ExitInfo& info) {
  Completion done;
  JobStatus status;
  {
    std::lock_guard lk(mu_);
    auto it = groups_.find(group);
    if (it == groups_.end()) return;
    auto& g = it->second;
    const bool failed = !info.exit_code || *info.exit_code != 0;
    if (failed && !g.first_failure) g.first_failure = info;
    if (--g.remaining > 0) return;

    const bool our_signal = g.first_failure && g.first_failure->signal &&
                            (*g.first_failure->signal == SIGTERM ||
                             *g.first_failure->signal == SIGKILL);
    if (g.cancel_requested && our_signal) {
      status = JobStatus::make(JobState::CANCELED, std::nullopt, "canceled");
    } else if (!g.first_failure) {
      status = JobStatus::make(JobState::COMPLETED, 0);
    } else {
      const auto& f = *g.first_failure;
      std::string message = f.signal ? "killed by signal " + std::to_string(*f.signal)
                                     : "exited with code " + std::to_string(*f.exit_code);
      status = JobStatus::make(JobState::FAILED, f.shell_code(), std::move(message));
    }
    done = std::move(g.done);
    groups_.erase(it);
  }
  // Stragglers the job left behind in its group.
  ::kill(-group, SIGKILL);
  if (done) done(status);
}

bool ProcessGroupRunner::cancel(pid_t group) {
  {
    std::lock_guard lk(mu_);
    auto it = groups_.find(group);
    if (it == groups_.end()) return false;
    it->second.cancel_requested = true;
  }
  monitor_->terminate_group(group, grace_);
  return true;
}

void ProcessGroupRunner::kill_all() {
  std::vector<pid_t> groups;
  {
    std::lock_guard lk(mu_);
    for (auto& [pgid, _] : groups_) groups.push_back(pgid);
  }
  for (pid_t g : groups) monitor_->kill_group(g);
}

std::size_t ProcessGroupRunner::live() const {
  std::lock_guard lk(mu_);
  return groups_.size();
}

}  // namespace portjob
