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

#include <memory>

#include "portjob/executor.hpp"
#include "portjob/pilot.hpp"

namespace portjob {

// Adds "local", "batch" and "pilot". The pilot factory resolves its `via`
// backend through `registry`, which must outlive the executors it creates.
void register_builtin_backends(ExecutorRegistry& registry);

// Process-wide registry holding the built-in backends.
ExecutorRegistry& default_registry();

// Allocation held by a pilot when the config names none: a sleep for the
// walltime on `nodes` nodes.
JobSpec default_allocation(std::int64_t nodes, std::chrono::seconds wall_time);

PilotOptions pilot_options_from_config(const ExecutorConfig& config);

// Config keys: via ("local", "batch", ... or "none" for a bare pool),
// via_config, allocation (JobSpec object or file path), nodes, walltime_s,
// cores_per_node, gpus_per_node, grace_s, start_timeout_s.
std::unique_ptr<PilotExecutor> pilot_from_config(const ExecutorConfig& config,
                                                 const ExecutorRegistry& registry);

}  // namespace portjob
