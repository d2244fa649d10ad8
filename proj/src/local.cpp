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

#include "portjob/local.hpp"

#include "portjob/error.hpp"

namespace portjob {

LocalOptions local_options_from_config(const ExecutorConfig& config) {
  LocalOptions options;
  if (config.is_object()) {
    if (config.contains("grace_s")) {
      options.grace = std::chrono::duration<double>(config["grace_s"].get<double>());
    }
    if (config.contains("mpi_launcher")) {
      options.launcher.mpi_launcher = config["mpi_launcher"].get<std::string>();
    }
  }
  return options;
}

LocalExecutor::LocalExecutor(LocalOptions options)
    : ExecutorBase(describe()),
      options_(std::move(options)),
      runner_(std::make_unique<ProcessGroupRunner>(options_.grace)) {}

LocalExecutor::~LocalExecutor() {
  runner_.reset();
  stop_delivery();
}

ExecutorDescriptor LocalExecutor::describe() {
  return {"local", "1.0", {Capability::attach, Capability::cancel}};
}

std::size_t LocalExecutor::live_processes() const { return runner_->live(); }

void LocalExecutor::do_submit(const Job& job) {
  JobSpec spec = job.spec;
  spec.resources.node_count = 1;

  LaunchPlan plan;
  try {
    plan = render_launch(spec, options_.launcher);
  } catch (const Error& e) {
    post(job.id, JobStatus::make(JobState::FAILED, std::nullopt, e.what()));
    return;
  }

  // The completion may fire as soon as the processes exist; it blocks on mu_
  // until the record below is in place.
  auto key = std::make_shared<std::string>();
  std::lock_guard lk(mu_);
  pid_t group = 0;
  try {
    group = runner_->launch(spec, plan, minimal_base_environment(),
                            [this, key](const JobStatus& status) { finish(key, status); });
  } catch (const SubmitFailed& e) {
    post(job.id, JobStatus::make(JobState::FAILED, std::nullopt, e.what()));
    return;
  }
  *key = std::to_string(group);
  auto& rec = records_[*key];
  rec = ProcessRecord{};
  rec.group = group;
  rec.subscribers.push_back(job.id);
  set_native_id(job.id, *key);
  post(job.id, JobStatus::make(JobState::QUEUED));
  post(job.id, JobStatus::make(JobState::ACTIVE));
}

void LocalExecutor::finish(const std::shared_ptr<std::string>& key, const JobStatus& status) {
  std::lock_guard lk(mu_);
  auto it = records_.find(*key);
  if (it == records_.end()) return;
  it->second.final = status;
  for (const auto& sub : it->second.subscribers) post(sub, status);
}

void LocalExecutor::do_cancel(const Job& job) {
  std::lock_guard lk(mu_);
  if (!job.native_id) throw UnknownJob("job " + job.id + " has no process");
  auto it = records_.find(*job.native_id);
  if (it == records_.end()) throw UnknownJob("no process for job " + job.id);
  if (it->second.final) return;
  runner_->cancel(it->second.group);
}

void LocalExecutor::do_attach(const Job& job) {
  std::lock_guard lk(mu_);
  auto it = records_.find(*job.native_id);
  if (it == records_.end()) {
    throw UnknownNativeId("no local process group " + *job.native_id);
  }
  it->second.subscribers.push_back(job.id);
  post(job.id, JobStatus::make(JobState::QUEUED));
  post(job.id, JobStatus::make(JobState::ACTIVE));
  if (it->second.final) post(job.id, *it->second.final);
}

}  // namespace portjob
