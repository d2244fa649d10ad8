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
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace portjob {

using Environment = std::map<std::string, std::string>;

// PATH and HOME only; jobs overlay their own variables on top of this.
Environment minimal_base_environment();

struct SpawnRequest {
  std::vector<std::string> argv;
  Environment environment;
  std::optional<std::string> directory;
  // Unset means /dev/null. Output files are created with truncate semantics.
  std::optional<std::string> stdin_path;
  std::optional<std::string> stdout_path;
  std::optional<std::string> stderr_path;
  // 0 starts a new process group led by the child; otherwise join this one.
  pid_t process_group = 0;
  // Output files are opened in append mode; several processes can then
  // share one file. Truncation still applies when `truncate` is set.
  bool append_output = false;
  bool truncate_output = true;
};

// fork/exec with exec failures reported back to the caller. Throws
// SubmitFailed with a message naming the failing step.
pid_t spawn_process(const SpawnRequest& request);

// Resolves `program` against the PATH in `env` (or returns it unchanged if
// it contains a slash). Empty result when nothing executable is found.
std::string resolve_program(const std::string& program, const Environment& env);

struct ExitInfo {
  std::optional<int> exit_code;  // normal exit
  std::optional<int> signal;     // killed by signal

  // Shell convention: exit code, or 128 + signal number.
  int shell_code() const { return exit_code ? *exit_code : 128 + signal.value_or(0); }
};

ExitInfo decode_wait_status(int status);

struct CommandResult {
  int exit_code = -1;  // shell convention; -1 if the command could not start
  std::string out;
  std::string err;
};

// Runs a short-lived command to completion, capturing stdout and stderr.
// The child inherits this process's environment plus `extra_env`.
CommandResult run_command(const std::vector<std::string>& argv, const Environment& extra_env = {},
                          const std::optional<std::string>& input = std::nullopt);

// Watches child processes from a single thread and reports their exits.
// Also owns delayed SIGKILL escalation for process groups.
class ProcessMonitor {
 public:
  using ExitHandler = std::function<void(pid_t, const ExitInfo&)>;
  using Seconds = std::chrono::duration<double>;

  ProcessMonitor();
  ~ProcessMonitor();  // kills and reaps anything still watched

  ProcessMonitor(const ProcessMonitor&) = delete;
  ProcessMonitor& operator=(const ProcessMonitor&) = delete;

  // `pid` must be an unreaped child of this process. The handler runs on the
  // monitor thread after the child has been reaped.
  void watch(pid_t pid, ExitHandler handler);

  // SIGTERM to the group now, SIGKILL after `grace` if it is still alive.
  void terminate_group(pid_t pgid, Seconds grace);

  // SIGKILL to the group now.
  void kill_group(pid_t pgid);

  std::size_t watched() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Direct children of `parent` found in /proc, excluding zombies when
// `include_zombies` is false.
std::vector<pid_t> child_processes(pid_t parent, bool include_zombies = true);

}  // namespace portjob
