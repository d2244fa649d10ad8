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

#include "portjob/backends.hpp"

#include "portjob/batch.hpp"
#include "portjob/error.hpp"
#include "portjob/jobspec_io.hpp"
#include "portjob/local.hpp"

namespace portjob {

namespace {

template <class T>
T value_or(const ExecutorConfig& config, const char* key, T fallback) {
  if (!config.is_object() || !config.contains(key)) return fallback;
  try {
    return config[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("executor config: bad value for '") + key + "'");
  }
}

}  // namespace

JobSpec default_allocation(std::int64_t nodes, std::chrono::seconds wall_time) {
  JobSpec spec;
  spec.executable = "/bin/sleep";
  spec.arguments = {std::to_string(wall_time.count())};
  spec.resources.node_count = nodes;
  spec.launcher = nodes > 1 ? Launcher::multiple : Launcher::single;
  spec.resources.processes_per_node = 1;
  spec.attributes.wall_time = wall_time;
  return spec;
}

PilotOptions pilot_options_from_config(const ExecutorConfig& config) {
  PilotOptions o;
  o.cores_per_node = value_or(config, "cores_per_node", o.cores_per_node);
  o.gpus_per_node = value_or(config, "gpus_per_node", o.gpus_per_node);
  o.grace = ProcessGroupRunner::Seconds(value_or(config, "grace_s", o.grace.count()));
  o.start_timeout = Executor::Duration(value_or(config, "start_timeout_s", o.start_timeout.count()));
  if (o.cores_per_node < 1 || o.gpus_per_node < 0) throw ParseError("executor config: bad node shape");
  return o;
}

std::unique_ptr<PilotExecutor> pilot_from_config(const ExecutorConfig& config,
                                                 const ExecutorRegistry& registry) {
  const auto options = pilot_options_from_config(config);
  const auto via = value_or<std::string>(config, "via", "local");
  const auto nodes = value_or<std::int64_t>(config, "nodes", 1);
  if (via == "none") {
    return std::make_unique<PilotExecutor>(
        ResourcePool::uniform(static_cast<int>(nodes), options.cores_per_node, options.gpus_per_node),
        options);
  }
  JobSpec allocation;
  if (config.is_object() && config.contains("allocation")) {
    const auto& a = config["allocation"];
    allocation = a.is_string() ? load_jobspec(a.get<std::string>()) : jobspec_from_json(a);
  } else {
    allocation = default_allocation(nodes, std::chrono::seconds(value_or<std::int64_t>(config, "walltime_s", 86400)));
  }
  ExecutorConfig via_config = ExecutorConfig::object();
  if (config.is_object() && config.contains("via_config")) via_config = config["via_config"];
  return start_pilot(allocation, via, via_config, registry, options);
}

void register_builtin_backends(ExecutorRegistry& registry) {
  registry.register_backend(LocalExecutor::describe(), [](const ExecutorConfig& config) {
    return std::make_unique<LocalExecutor>(local_options_from_config(config));
  });
  registry.register_backend(BatchExecutor::describe(), [](const ExecutorConfig& config) {
    return std::make_unique<BatchExecutor>(batch_options_from_config(config));
  });
  registry.register_backend(PilotExecutor::describe(), [&registry](const ExecutorConfig& config) {
    return pilot_from_config(config, registry);
  });
}

ExecutorRegistry& default_registry() {
  static ExecutorRegistry* registry = [] {
    auto* r = new ExecutorRegistry;
    register_builtin_backends(*r);
    return r;
  }();
  return *registry;
}

}  // namespace portjob
