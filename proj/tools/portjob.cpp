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

// portjob: submit, watch and cancel jobs on any backend; run pilots.
//
// Exit codes: 0 COMPLETED (or success), 2 invalid input, 3 FAILED,
// 4 CANCELED, 5 unknown job id, 1 anything else.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>

#include <CLI11.hpp>
#include <json.hpp>

#include "portjob/backends.hpp"
#include "portjob/batch.hpp"
#include "portjob/error.hpp"
#include "portjob/jobspec_io.hpp"
#include "portjob/pilot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace portjob;

namespace {

constexpr int kInvalid = 2;
constexpr int kUnknownId = 5;

struct UnknownId : Error {
  using Error::Error;
};

int exit_code_for(JobState s) {
  switch (s) {
    case JobState::FAILED: return 3;
    case JobState::CANCELED: return 4;
    default: return 0;
  }
}

fs::path state_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("PORTJOB_DIR"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".portjob";
  return ".portjob";
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  return json::parse(in);
}

void write_json(const fs::path& p, const json& doc) {
  fs::create_directories(p.parent_path());
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << doc.dump(2) << "\n";
    if (!out.flush()) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, p);
}

// Serializes output from callback threads.
class Printer {
 public:
  explicit Printer(bool structured) : structured_(structured) {}

  void status(const std::string& id, const std::optional<std::string>& native, const JobStatus& st) {
    std::lock_guard lk(mu_);
    if (structured_) {
      // Steady timestamps mapped onto the wall clock.
      const auto age = Clock::now() - st.timestamp;
      const auto wall = std::chrono::system_clock::now() -
                        std::chrono::duration_cast<std::chrono::system_clock::duration>(age);
      json rec;
      rec["ts"] = std::chrono::duration<double>(wall.time_since_epoch()).count();
      rec["id"] = id;
      rec["state"] = to_string(st.state);
      rec["exit"] = st.exit_code ? json(*st.exit_code) : json(nullptr);
      std::cout << rec.dump() << std::endl;
    } else {
      std::cout << "id=" << id << " native=" << native.value_or("-") << " state=" << to_string(st.state)
                << std::endl;
    }
  }

  void line(const std::string& text) {
    std::lock_guard lk(mu_);
    std::cout << text << std::endl;
  }

 private:
  bool structured_;
  std::mutex mu_;
};

struct BackendFlags {
  std::string backend = "local";
  std::string dialect;
  std::string config_file;
};

ExecutorConfig backend_config(const BackendFlags& flags, const fs::path& dir) {
  ExecutorConfig config = ExecutorConfig::object();
  if (!flags.config_file.empty()) config = read_json(flags.config_file);
  if (flags.backend == "batch") {
    if (!flags.dialect.empty()) config["dialect"] = fs::absolute(flags.dialect).string();
    if (!config.contains("dialect")) throw ParseError("--backend batch needs --dialect");
    if (!config.contains("work_dir")) config["work_dir"] = (dir / "work").string();
  }
  return config;
}

// --- run / status / cancel --------------------------------------------------

fs::path index_path(const fs::path& dir, const std::string& id) { return dir / "jobs" / (id + ".json"); }

void record(const fs::path& dir, const std::string& backend, const ExecutorConfig& config, const Job& job) {
  json rec;
  rec["id"] = job.id;
  rec["backend"] = backend;
  rec["config"] = config;
  rec["native_id"] = job.native_id ? json(*job.native_id) : json(nullptr);
  rec["spec"] = jobspec_to_json(job.spec);
  rec["state"] = to_string(job.state());
  rec["exit"] = job.status().exit_code ? json(*job.status().exit_code) : json(nullptr);
  write_json(index_path(dir, job.id), rec);
}

json lookup(const fs::path& dir, const std::string& id) {
  auto p = index_path(dir, id);
  if (id.empty() || id.find('/') != std::string::npos || !fs::exists(p)) {
    throw UnknownId("unknown job id '" + id + "'");
  }
  return read_json(p);
}

int cmd_run(const fs::path& dir, const BackendFlags& flags, const std::string& spec_file, bool wait,
            Printer& out) {
  JobSpec spec = load_jobspec(spec_file);
  auto config = backend_config(flags, dir);
  auto exec = default_registry().create(flags.backend, config);
  exec->add_callback([&](const std::string& id, const JobStatus& st) {
    out.status(id, exec->snapshot(id).native_id, st);
  });
  auto job = exec->submit(spec);
  record(dir, flags.backend, config, job);
  // Local and pilot jobs live inside this process, so they are always
  // waited for.
  if (wait || flags.backend != "batch") {
    auto st = exec->wait(job);
    exec->flush_callbacks();
    record(dir, flags.backend, config, exec->snapshot(job.id));
    return exit_code_for(st.state);
  }
  exec->flush_callbacks();
  return job.terminal() ? exit_code_for(job.state()) : 0;
}

// Re-binds a batch job recorded by an earlier invocation.
std::pair<std::unique_ptr<Executor>, Job> reattach(const json& rec) {
  auto exec = default_registry().create("batch", rec["config"]);
  Job j;
  j.id = rec["id"].get<std::string>();
  j.spec = jobspec_from_json(rec["spec"]);
  auto job = exec->attach(j, rec["native_id"].get<std::string>());
  return {std::move(exec), job};
}

std::string status_line(const std::string& id, JobState state, std::optional<int> code) {
  std::string line = id + " " + std::string(to_string(state));
  if (code) line += " exit=" + std::to_string(*code);
  return line;
}

int cmd_status(const fs::path& dir, const std::string& id, Printer& out) {
  auto rec = lookup(dir, id);
  auto state = *parse_state(rec["state"].get<std::string>());
  std::optional<int> code;
  if (!rec["exit"].is_null()) code = rec["exit"].get<int>();
  if (!is_terminal(state) && rec["backend"] == "batch" && !rec["native_id"].is_null()) {
    auto [exec, job] = reattach(rec);
    exec->flush_callbacks();
    job = exec->snapshot(job.id);
    state = job.state();
    code = job.status().exit_code;
    record(dir, "batch", rec["config"], job);
  }
  out.line(status_line(id, state, code));
  return 0;
}

int cmd_cancel(const fs::path& dir, const std::string& id, Printer& out) {
  auto rec = lookup(dir, id);
  auto state = *parse_state(rec["state"].get<std::string>());
  if (is_terminal(state) || rec["native_id"].is_null()) {
    out.line(status_line(id, state, rec["exit"].is_null() ? std::nullopt : std::optional<int>(rec["exit"].get<int>())));
    return 0;
  }
  if (rec["backend"] != "batch") throw Error("job " + id + " is no longer reachable");
  auto [exec, job] = reattach(rec);
  exec->cancel(job);
  auto st = exec->wait(job, {}, std::chrono::seconds(60));
  record(dir, "batch", rec["config"], exec->snapshot(job.id));
  out.line(status_line(id, st.state, st.exit_code));
  return 0;
}

// --- pilot --------------------------------------------------------------------

fs::path pilot_path(const fs::path& dir) { return dir / "pilot.json"; }

json load_pilot(const fs::path& dir) {
  if (!fs::exists(pilot_path(dir))) throw Error("no pilot started in " + dir.string());
  return read_json(pilot_path(dir));
}

PilotOptions pilot_options(const json& state) {
  PilotOptions o;
  o.cores_per_node = state["cores_per_node"].get<int>();
  o.gpus_per_node = state["gpus_per_node"].get<int>();
  return o;
}

// Replays recorded splits onto a fresh agent.
void rebuild(PilotExecutor& pilot, const json& state) {
  for (const auto& s : state["splits"]) {
    Instance* parent = pilot.find(s["parent"].get<std::string>());
    if (!parent) throw Error("pilot state names an unknown instance");
    pilot.spawn_child(*parent, s["nodes"].get<std::vector<int>>(), s["children"].get<int>());
  }
}

std::string pool_line(const Instance& inst) {
  std::string nodes;
  for (const auto& n : inst.pool().nodes()) {
    if (!nodes.empty()) nodes += ',';
    nodes += std::to_string(n.id);
  }
  const auto& first = inst.pool().nodes().front();
  return "instance=" + inst.id() + " nodes=" + nodes + " cores_per_node=" + std::to_string(first.cores) +
         " gpus_per_node=" + std::to_string(first.gpus);
}

int cmd_pilot_start(const fs::path& dir, const BackendFlags& flags, const std::string& alloc_file,
                    int cores, int gpus, Printer& out) {
  JobSpec alloc = load_jobspec(alloc_file);
  auto config = backend_config(flags, dir);
  json state;
  state["via"] = flags.backend;
  state["via_config"] = config;
  state["allocation"] = jobspec_to_json(alloc);
  state["cores_per_node"] = cores;
  state["gpus_per_node"] = gpus;
  state["splits"] = json::array();
  if (flags.backend == "local") {
    // A local allocation cannot outlive this process; each submit acquires one.
    if (auto v = validate_spec(alloc); !v.empty()) throw InvalidSpec(v);
    state["nodes"] = 1;
  } else {
    PilotOptions o;
    o.cores_per_node = cores;
    o.gpus_per_node = gpus;
    auto exec = default_registry().create(flags.backend, config);
    auto job = exec->submit(alloc);
    if (job.terminal()) {
      throw SubmitFailed("allocation rejected: " + job.status().message.value_or("no reason given"));
    }
    auto st = exec->wait(job, {JobState::ACTIVE}, o.start_timeout);
    if (st.state != JobState::ACTIVE) {
      throw AgentStartFailed("allocation ended " + std::string(to_string(st.state)) + " before running");
    }
    state["nodes"] = alloc.resources.node_count;
    state["alloc_id"] = job.id;
    state["alloc_native"] = *exec->snapshot(job.id).native_id;
  }
  write_json(pilot_path(dir), state);
  out.line(pool_line(*PilotExecutor(ResourcePool::uniform(state["nodes"].get<int>(), cores, gpus)).find("0")));
  return 0;
}

std::unique_ptr<PilotExecutor> open_pilot(const json& state) {
  const auto via = state["via"].get<std::string>();
  const auto opts = pilot_options(state);
  if (via == "local") {
    return start_pilot(jobspec_from_json(state["allocation"]), "local", state["via_config"],
                       default_registry(), opts);
  }
  auto pilot = std::make_unique<PilotExecutor>(
      ResourcePool::uniform(state["nodes"].get<int>(), opts.cores_per_node, opts.gpus_per_node), opts);
  auto exec = default_registry().create(via, state["via_config"]);
  Job j;
  j.id = state["alloc_id"].get<std::string>();
  j.spec = jobspec_from_json(state["allocation"]);
  auto job = exec->attach(j, state["alloc_native"].get<std::string>());
  pilot->hold(std::move(exec), job, false);
  return pilot;
}

int cmd_pilot_submit(const fs::path& dir, const std::vector<std::string>& files, int repeat,
                     const std::string& instance, Printer& out) {
  auto state = load_pilot(dir);
  std::vector<JobSpec> specs;
  for (const auto& f : files) specs.push_back(load_jobspec(f));
  auto pilot = open_pilot(state);
  rebuild(*pilot, state);
  Instance* target = pilot->find(instance);
  if (!target) throw ParseError("unknown instance '" + instance + "'");

  pilot->add_callback([&](const std::string& id, const JobStatus& st) {
    if (is_terminal(st.state)) out.status(id, pilot->snapshot(id).native_id, st);
  });
  std::vector<Job> jobs;
  for (int r = 0; r < repeat; ++r) {
    for (const auto& s : specs) jobs.push_back(pilot->submit_to(*target, s));
  }
  int worst = 0;
  for (const auto& j : jobs) {
    auto st = pilot->wait(j);
    const int code = exit_code_for(st.state);
    if (code == 3 || (code == 4 && worst == 0)) worst = code;
  }
  pilot->flush_callbacks();
  if (state["via"] == "local") pilot->drain();
  return worst;
}

int cmd_pilot_split(const fs::path& dir, int children, const std::string& instance,
                    const std::vector<int>& nodes, Printer& out) {
  auto state = load_pilot(dir);
  PilotExecutor pilot(ResourcePool::uniform(state["nodes"].get<int>(), state["cores_per_node"].get<int>(),
                                            state["gpus_per_node"].get<int>()));
  rebuild(pilot, state);
  Instance* parent = pilot.find(instance);
  if (!parent) throw ParseError("unknown instance '" + instance + "'");
  auto kids = pilot.spawn_child(*parent, nodes, children);
  std::vector<int> used;
  for (const auto* k : kids) {
    for (int id : k->pool().node_ids()) used.push_back(id);
  }
  state["splits"].push_back({{"parent", instance}, {"nodes", used}, {"children", children}});
  write_json(pilot_path(dir), state);
  for (const auto* k : kids) out.line(pool_line(*k));
  return 0;
}

int cmd_pilot_drain(const fs::path& dir, Printer& out) {
  auto state = load_pilot(dir);
  if (state["via"] != "local") {
    auto exec = default_registry().create(state["via"].get<std::string>(), state["via_config"]);
    Job j;
    j.id = state["alloc_id"].get<std::string>();
    j.spec = jobspec_from_json(state["allocation"]);
    try {
      auto job = exec->attach(j, state["alloc_native"].get<std::string>());
      exec->cancel(job);
      exec->wait(job, {}, std::chrono::seconds(60));
    } catch (const UnknownNativeId&) {
      // Already gone.
    }
  }
  fs::remove(pilot_path(dir));
  out.line("drained");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Portable job submission", "portjob"};
  app.require_subcommand(1);
  std::string dir_flag, output = "plain";
  app.add_option("--dir", dir_flag, "State directory (default: $PORTJOB_DIR)");
  app.add_option("--output", output, "plain or structured")->check(CLI::IsMember({"plain", "structured"}));

  BackendFlags flags;
  const auto backend_options = [&](CLI::App* sub) {
    sub->add_option("--backend", flags.backend, "local, batch or pilot");
    sub->add_option("--dialect", flags.dialect, "Dialect file for the batch backend");
    sub->add_option("--config", flags.config_file, "Backend configuration (JSON)");
  };

  std::string spec_file, id;
  bool wait = false;
  auto* run = app.add_subcommand("run", "Submit a job");
  run->add_option("spec", spec_file, "Job spec file")->required();
  run->add_flag("--wait", wait, "Block until the job ends");
  backend_options(run);

  auto* status = app.add_subcommand("status", "Show a job's state");
  status->add_option("id", id, "Job id")->required();
  auto* cancel = app.add_subcommand("cancel", "Cancel a job");
  cancel->add_option("id", id, "Job id")->required();

  auto* pilot = app.add_subcommand("pilot", "Run tasks inside an allocation");
  pilot->require_subcommand(1);
  std::string alloc_file, instance = "0";
  int cores = 4, gpus = 0, children = 2, repeat = 1;
  std::vector<std::string> task_files;
  std::vector<int> nodes;
  auto* p_start = pilot->add_subcommand("start", "Acquire an allocation");
  p_start->add_option("--alloc", alloc_file, "Allocation job spec")->required();
  p_start->add_option("--via", flags.backend, "Backend holding the allocation");
  p_start->add_option("--dialect", flags.dialect, "Dialect file for the batch backend");
  p_start->add_option("--config", flags.config_file, "Backend configuration (JSON)");
  p_start->add_option("--cores-per-node", cores)->check(CLI::PositiveNumber);
  p_start->add_option("--gpus-per-node", gpus)->check(CLI::NonNegativeNumber);
  auto* p_submit = pilot->add_subcommand("submit", "Run tasks and report each one's end");
  p_submit->add_option("taskspec", task_files, "Task spec files")->required();
  p_submit->add_option("--repeat", repeat, "Submit every spec this many times")->check(CLI::PositiveNumber);
  p_submit->add_option("--instance", instance, "Target instance");
  auto* p_split = pilot->add_subcommand("split", "Spawn child instances");
  p_split->add_option("--children", children)->required()->check(CLI::PositiveNumber);
  p_split->add_option("--instance", instance, "Parent instance");
  p_split->add_option("--nodes", nodes, "Nodes to grant (default: all free)")->delimiter(',');
  auto* p_drain = pilot->add_subcommand("drain", "Release the allocation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kInvalid;
  }

  Printer out(output == "structured");
  try {
    const auto dir = state_dir(dir_flag);
    if (*run) return cmd_run(dir, flags, spec_file, wait, out);
    if (*status) return cmd_status(dir, id, out);
    if (*cancel) return cmd_cancel(dir, id, out);
    if (*p_start) return cmd_pilot_start(dir, flags, alloc_file, cores, gpus, out);
    if (*p_submit) return cmd_pilot_submit(dir, task_files, repeat, instance, out);
    if (*p_split) return cmd_pilot_split(dir, children, instance, nodes, out);
    if (*p_drain) return cmd_pilot_drain(dir, out);
  } catch (const UnknownId& e) {
    std::cerr << "portjob: " << e.what() << "\n";
    return kUnknownId;
  } catch (const ParseError& e) {
    std::cerr << "portjob: " << e.what() << "\n";
    return kInvalid;
  } catch (const InvalidSpec& e) {
    std::cerr << "portjob: " << e.what() << "\n";
    return kInvalid;
  } catch (const NotFound& e) {
    std::cerr << "portjob: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "portjob: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
