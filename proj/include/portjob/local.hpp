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
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "portjob/executor.hpp"
#include "portjob/launch.hpp"

namespace portjob {

struct LocalOptions {
  std::chrono::duration<double> grace{5.0};
  LauncherOptions launcher;
};

LocalOptions local_options_from_config(const ExecutorConfig& config);

// Runs jobs as processes on this machine. Native ids are process group ids.
// node_count is collapsed to 1. Attach reconnects to a job this executor
// instance launched.
class LocalExecutor final : public ExecutorBase {
 public:
  explicit LocalExecutor(LocalOptions options = {});
  ~LocalExecutor() override;

  static ExecutorDescriptor describe();

  std::size_t live_processes() const;

 protected:
  void do_submit(const Job& job) override;
  void do_cancel(const Job& job) override;
  void do_attach(const Job& job) override;

 private:
  struct ProcessRecord {
    pid_t group = 0;
    std::vector<std::string> subscribers;
    std::optional<JobStatus> final;
  };

  void finish(const std::shared_ptr<std::string>& key, const JobStatus& status);

  LocalOptions options_;
  std::unique_ptr<ProcessGroupRunner> runner_;
  mutable std::mutex mu_;
  std::map<std::string, ProcessRecord> records_;
};

}  // namespace portjob
