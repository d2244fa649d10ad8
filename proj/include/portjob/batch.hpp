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

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "portjob/executor.hpp"
#include "portjob/process.hpp"

namespace portjob {

enum class ExitCodeSource { status_output, exit_file };
enum class WalltimeFormat { seconds, minutes, hms };

// Declarative description of one scheduler's command-line surface. Directive
// templates substitute "{}" with the value.
struct QueueAdapterDescriptor {
  std::string name;
  std::string interpreter = "#!/bin/sh";
  std::vector<std::string> submit_argv;  // + script path
  std::vector<std::string> status_argv;  // + native ids
  std::vector<std::string> cancel_argv;  // + native id
  std::string directive_prefix;
  std::string nodes_directive = "-N {}";
  std::string walltime_directive = "-t {}";
  WalltimeFormat walltime_format = WalltimeFormat::seconds;
  std::string queue_directive = "-q {}";
  std::string account_directive = "-A {}";
  std::map<std::string, std::string> custom_directives;
  // Searched line by line in submit output; capture group 1 if present.
  std::string id_pattern = R"(^\s*(\d+)\s*$)";
  // Per status line: group 1 id, group 2 token, optional group 3 exit code.
  std::string status_pattern = R"(^\s*(\S+)\|(\S+)\s*$)";
  std::map<std::string, JobState> state_map;
  std::chrono::duration<double> poll_interval{1.0};
  ExitCodeSource exit_code_source = ExitCodeSource::exit_file;
};

// Strict: unknown keys, a NEW state in the map or missing commands are
// rejected with ParseError.
QueueAdapterDescriptor dialect_from_json(const nlohmann::json& doc);
QueueAdapterDescriptor load_dialect(const std::filesystem::path& path);

struct SubmitScript {
  std::string text;
  std::filesystem::path path;
};

std::filesystem::path script_path(const std::filesystem::path& work_dir, const std::string& job_id);
std::filesystem::path exit_file_path(const std::filesystem::path& work_dir,
                                     const std::string& job_id);

// Deterministic: equal inputs give byte-identical text. Throws
// UnsupportedAttribute for custom attributes without a directive template.
SubmitScript render_script(const JobSpec& spec, const QueueAdapterDescriptor& adapter,
                           const std::string& job_id, const std::filesystem::path& work_dir,
                           const LauncherOptions& launcher = {});

// Throws IdParseError.
std::string parse_native_id(const std::string& submit_output,
                            const QueueAdapterDescriptor& adapter);

struct PollResult {
  JobState state = JobState::QUEUED;
  std::optional<int> exit_code;
  std::optional<std::string> message;

  friend bool operator==(const PollResult&, const PollResult&) = default;
};

using CommandRunner = std::function<CommandResult(const std::vector<std::string>&)>;
// Exit code recorded for a native id, if its exit file exists.
using ExitCodeLookup = std::function<std::optional<int>(const std::string&)>;

// One status query for all `native_ids`. Throws StatusCommandFailed when the
// status command exits nonzero.
std::map<std::string, PollResult> poll_once(const std::set<std::string>& native_ids,
                                            const QueueAdapterDescriptor& adapter,
                                            const CommandRunner& run,
                                            const ExitCodeLookup& exit_code_of);

struct BatchOptions {
  QueueAdapterDescriptor adapter;
  std::filesystem::path work_dir = std::filesystem::current_path();
  LauncherOptions launcher;
  // Extra environment for scheduler commands (e.g. SIMSCHED_DIR).
  Environment command_env;
  // Replaces process execution of scheduler commands; used by tests.
  CommandRunner runner;
  int failures_before_report = 3;
};

BatchOptions batch_options_from_config(const ExecutorConfig& config);

class BatchExecutor final : public ExecutorBase {
 public:
  explicit BatchExecutor(BatchOptions options);
  ~BatchExecutor() override;

  static ExecutorDescriptor describe();

  const QueueAdapterDescriptor& adapter() const { return options_.adapter; }
  std::uint64_t status_commands_issued() const;
  int consecutive_poll_failures() const;
  std::optional<std::string> last_poll_error() const;

 protected:
  void do_submit(const Job& job) override;
  void do_cancel(const Job& job) override;
  void do_attach(const Job& job) override;

 private:
  CommandResult run(const std::vector<std::string>& argv);
  void poll_loop();
  void apply(const std::string& job_id, const PollResult& result);
  std::optional<int> exit_code_for(const std::string& native_id) const;

  BatchOptions options_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, std::set<std::string>> by_native_;  // native id -> live job ids
  std::map<std::string, std::string> owner_;      // native id -> job id that wrote the script
  bool stop_ = false;
  std::uint64_t status_commands_ = 0;
  int consecutive_failures_ = 0;
  std::optional<std::string> last_error_;
  std::thread poller_;
};

}  // namespace portjob
