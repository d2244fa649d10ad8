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

#include "portjob/simsched_store.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/file.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <time.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "portjob/error.hpp"

extern char** environ;

namespace portjob::simsched {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

long long monotonic_ns() {
  timespec ts{};
  clock_gettime(CLOCK_MONOTONIC, &ts);
  return static_cast<long long>(ts.tv_sec) * 1000000000LL + ts.tv_nsec;
}

void write_atomic(const fs::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(getpid());
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json opt_time(const std::optional<VTime>& t) { return t ? json(*t) : json(nullptr); }

std::optional<VTime> get_opt_time(const json& doc, const char* key) {
  if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
  return doc[key].get<VTime>();
}

json job_to_json(const SimJob& j, pid_t group) {
  return {{"id", j.id},
          {"nodes", j.nodes},
          {"walltime", j.walltime},
          {"runtime", opt_time(j.runtime)},
          {"exit_code", j.exit_code},
          {"submit_time", j.submit_time},
          {"start_time", opt_time(j.start_time)},
          {"end_time", opt_time(j.end_time)},
          {"token", std::string(to_string(j.token))},
          {"queue", j.queue},
          {"account", j.account},
          {"script", j.script},
          {"pgid", group}};
}

SimJob job_from_json(const json& doc, pid_t* group) {
  SimJob j;
  j.id = doc.at("id").get<JobId>();
  j.nodes = doc.at("nodes").get<std::int64_t>();
  j.walltime = doc.at("walltime").get<VTime>();
  j.runtime = get_opt_time(doc, "runtime");
  j.exit_code = doc.at("exit_code").get<int>();
  j.submit_time = doc.at("submit_time").get<VTime>();
  j.start_time = get_opt_time(doc, "start_time");
  j.end_time = get_opt_time(doc, "end_time");
  auto token = parse_token(doc.at("token").get<std::string>());
  if (!token) throw ParseError("bad token in job record");
  j.token = *token;
  j.queue = doc.value("queue", "");
  j.account = doc.value("account", "");
  j.script = doc.value("script", "");
  if (group) *group = doc.value("pgid", 0);
  return j;
}

bool parse_positive(const std::string& text, std::int64_t& out) {
  if (text.empty() || !std::all_of(text.begin(), text.end(), ::isdigit)) return false;
  try {
    out = std::stoll(text);
  } catch (const std::exception&) {
    return false;
  }
  return out > 0;
}

// Decimal digits of a non-negative value into buf; async-signal-safe.
std::size_t put_decimal(char* buf, long long value) {
  char tmp[32];
  std::size_t n = 0;
  if (value < 0) value = 0;
  do {
    tmp[n++] = static_cast<char>('0' + value % 10);
    value /= 10;
  } while (value > 0);
  for (std::size_t i = 0; i < n; ++i) buf[i] = tmp[n - 1 - i];
  return n;
}

}  // namespace

Directives parse_directives(std::string_view script_text) {
  Directives d;
  std::istringstream in{std::string(script_text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("#SSUB", 0) != 0) continue;
    std::istringstream words(line.substr(5));
    std::string flag, value, trailing;
    words >> flag >> value;
    auto where = "line " + std::to_string(lineno) + ": ";
    if (flag.empty() || value.empty()) throw ParseError(where + "malformed directive '" + line + "'");
    if (words >> trailing) throw ParseError(where + "trailing text in directive '" + line + "'");
    if (flag == "-N") {
      if (!parse_positive(value, d.nodes)) throw ParseError(where + "-N needs a positive integer");
    } else if (flag == "-t") {
      if (!parse_positive(value, d.walltime)) {
        throw ParseError(where + "-t needs a positive number of seconds");
      }
    } else if (flag == "-q") {
      d.queue = value;
    } else if (flag == "-A") {
      d.account = value;
    } else {
      throw ParseError(where + "unknown directive flag '" + flag + "'");
    }
  }
  return d;
}

void SimStore::init(const fs::path& dir, const StoreConfig& config) {
  if (config.nodes < 1 || config.cores_per_node < 1) {
    throw Error("cluster needs at least one node and one core per node");
  }
  if (!config.stepped && !(config.timescale > 0)) throw Error("timescale must be > 0");
  fs::create_directories(dir / "jobs");
  for (const auto& entry : fs::directory_iterator(dir / "jobs")) fs::remove(entry.path());
  fs::remove(dir / "events.log");
  json cluster = {{"total_nodes", config.nodes},
                  {"node_cores", config.cores_per_node},
                  {"backfill", config.backfill},
                  {"stepped", config.stepped},
                  {"timescale", config.timescale},
                  {"epoch_ns", monotonic_ns()},
                  {"now", 0.0},
                  {"next_id", 1},
                  {"active", json::array()}};
  write_atomic(dir / "cluster.json", cluster.dump(2) + "\n");
}

SimStore::SimStore(fs::path dir) : dir_(std::move(dir)) {
  if (!fs::exists(dir_ / "cluster.json")) {
    throw Error("no simulated cluster in " + dir_.string() + " (run 'ssim init')");
  }
  lock_fd_ = open((dir_ / "lock").c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) throw Error("cannot open lock file: " + std::string(std::strerror(errno)));
  while (flock(lock_fd_, LOCK_EX) != 0) {
    if (errno != EINTR) {
      close(lock_fd_);
      throw Error("cannot lock state directory");
    }
  }
  try {
    load();
    reconcile(clock_now());
  } catch (...) {
    close(lock_fd_);
    throw;
  }
}

SimStore::~SimStore() {
  try {
    save();
  } catch (const std::exception&) {
  }
  if (lock_fd_ >= 0) close(lock_fd_);
}

VTime SimStore::clock_now() const {
  if (config_.stepped) return cluster_.now;
  return std::max(cluster_.now, static_cast<VTime>(monotonic_ns() - epoch_ns_) / 1e9 /
                                    config_.timescale);
}

void SimStore::load() {
  json doc = json::parse(read_file(dir_ / "cluster.json"));
  config_.nodes = doc.at("total_nodes").get<std::int64_t>();
  config_.cores_per_node = doc.at("node_cores").get<std::int64_t>();
  config_.backfill = doc.at("backfill").get<bool>();
  config_.stepped = doc.at("stepped").get<bool>();
  config_.timescale = doc.at("timescale").get<double>();
  epoch_ns_ = doc.at("epoch_ns").get<long long>();
  cluster_ = SimCluster{};
  cluster_.total_nodes = config_.nodes;
  cluster_.node_cores = config_.cores_per_node;
  cluster_.backfill = config_.backfill;
  cluster_.now = doc.at("now").get<VTime>();
  cluster_.next_id = doc.at("next_id").get<JobId>();
  for (const auto& id : doc.at("active")) {
    pid_t group = 0;
    auto job = job_from_json(
        json::parse(read_file(dir_ / "jobs" / (std::to_string(id.get<JobId>()) + ".json"))),
        &group);
    if (job.token == Token::RUN) {
      cluster_.running.push_back(std::move(job));
      if (group > 0) groups_[cluster_.running.back().id] = group;
    } else {
      cluster_.pending.push_back(std::move(job));
    }
  }
  std::sort(cluster_.pending.begin(), cluster_.pending.end(),
            [](const SimJob& a, const SimJob& b) { return a.id < b.id; });
  std::sort(cluster_.running.begin(), cluster_.running.end(), [](const SimJob& a, const SimJob& b) {
    return std::tie(*a.start_time, a.id) < std::tie(*b.start_time, b.id);
  });
}

void SimStore::save() {
  for (JobId id : dirty_) {
    const SimJob* job = cluster_.find(id);
    if (!job) continue;
    auto it = groups_.find(id);
    write_atomic(dir_ / "jobs" / (std::to_string(id) + ".json"),
                 job_to_json(*job, it == groups_.end() ? 0 : it->second).dump() + "\n");
  }
  dirty_.clear();
  json doc = {{"total_nodes", config_.nodes},
              {"node_cores", config_.cores_per_node},
              {"backfill", config_.backfill},
              {"stepped", config_.stepped},
              {"timescale", config_.timescale},
              {"epoch_ns", epoch_ns_},
              {"now", cluster_.now},
              {"next_id", cluster_.next_id},
              {"active", active_ids()}};
  write_atomic(dir_ / "cluster.json", doc.dump(2) + "\n");
}

std::vector<JobId> SimStore::active_ids() const {
  std::vector<JobId> ids;
  for (const auto& j : cluster_.running) ids.push_back(j.id);
  for (const auto& j : cluster_.pending) ids.push_back(j.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void SimStore::reconcile(VTime target) {
  // Workloads that exited since the last look.
  for (const auto& job : cluster_.running) {
    auto exit_file = dir_ / "jobs" / (std::to_string(job.id) + ".exit");
    std::ifstream in(exit_file);
    int code = 0;
    long long at_ns = 0;
    if (!(in >> code >> at_ns)) continue;
    VTime at = config_.stepped
                   ? cluster_.now
                   : static_cast<VTime>(at_ns - epoch_ns_) / 1e9 / config_.timescale;
    at = std::clamp(at, *job.start_time, std::max(target, *job.start_time));
    report_exit(cluster_, job.id, at - *job.start_time, code);
    dirty_.insert(job.id);
  }
  apply_side_effects(advance(cluster_, target));
}

void SimStore::apply_side_effects(const std::vector<SimEvent>& events) {
  if (events.empty()) return;
  std::ofstream log(dir_ / "events.log", std::ios::app);
  for (const auto& e : events) {
    log << format_event(e) << "\n";
    dirty_.insert(e.job_id);
    if (e.token == Token::KILL) {
      auto it = groups_.find(e.job_id);
      if (it != groups_.end()) ::kill(-it->second, SIGKILL);
    }
  }
  for (const auto& job : cluster_.running) {
    if (!groups_.count(job.id)) spawn_workload(job);
  }
}

void SimStore::spawn_workload(const SimJob& job) {
  const auto jobs_dir = dir_ / "jobs";
  const std::string script = job.script;
  const std::string workdir = fs::path(script).parent_path().string();
  const std::string out_path = (jobs_dir / (std::to_string(job.id) + ".out")).string();
  const std::string exit_path = (jobs_dir / (std::to_string(job.id) + ".exit")).string();
  const std::string exit_tmp = exit_path + ".tmp";

  std::vector<std::string> env_storage;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    if (entry.rfind("SIMSCHED_JOB_ID=", 0) == 0 || entry.rfind("SIMSCHED_NODES=", 0) == 0) continue;
    env_storage.emplace_back(entry);
  }
  env_storage.push_back("SIMSCHED_JOB_ID=" + std::to_string(job.id));
  env_storage.push_back("SIMSCHED_NODES=" + std::to_string(job.nodes));
  std::vector<char*> envp;
  for (auto& s : env_storage) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::string sh = "/bin/sh";
  std::string arg0 = "sh";
  std::string script_arg = script;
  char* argv[] = {arg0.data(), script_arg.data(), nullptr};

  // Detach through an intermediate process: the workload and its reaper
  // live in their own session, so the tool can exit right away.
  pid_t leader = fork();
  if (leader < 0) throw Error("fork failed: " + std::string(std::strerror(errno)));
  if (leader == 0) {
    setsid();
    int devnull = open("/dev/null", O_RDWR);
    dup2(devnull, 0);
    dup2(devnull, 1);
    dup2(devnull, 2);
    syscall(SYS_close_range, 3U, ~0U, 0U);
    pid_t reaper = fork();
    if (reaper != 0) _exit(reaper < 0 ? 1 : 0);
    pid_t work = fork();
    if (work == 0) {
      if (!workdir.empty() && chdir(workdir.c_str()) != 0) _exit(127);
      int out = open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
      if (out >= 0) {
        dup2(out, 1);
        dup2(out, 2);
        close(out);
      }
      execve(sh.c_str(), argv, envp.data());
      _exit(127);
    }
    int status = 0;
    int code = 127;
    if (work > 0) {
      while (waitpid(work, &status, 0) < 0 && errno == EINTR) {
      }
      code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    }
    char buf[64];
    std::size_t n = put_decimal(buf, code);
    buf[n++] = ' ';
    timespec ts{};
    clock_gettime(CLOCK_MONOTONIC, &ts);
    n += put_decimal(buf + n, static_cast<long long>(ts.tv_sec) * 1000000000LL + ts.tv_nsec);
    buf[n++] = '\n';
    int fd = open(exit_tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      ssize_t ignored = write(fd, buf, n);
      (void)ignored;
      close(fd);
      rename(exit_tmp.c_str(), exit_path.c_str());
    }
    _exit(0);
  }
  int status = 0;
  while (waitpid(leader, &status, 0) < 0 && errno == EINTR) {
  }
  groups_[job.id] = leader;
  dirty_.insert(job.id);
}

JobId SimStore::submit_script(const fs::path& script) {
  auto path = fs::absolute(script);
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read script " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  auto d = parse_directives(buf.str());
  if (d.nodes > cluster_.total_nodes) {
    throw Error("requested " + std::to_string(d.nodes) + " nodes exceeds cluster size " +
                std::to_string(cluster_.total_nodes));
  }
  SimJob job;
  job.nodes = d.nodes;
  job.walltime = static_cast<VTime>(d.walltime);
  job.queue = d.queue;
  job.account = d.account;
  job.script = path.string();
  auto events = simsched::submit(cluster_, job);
  const JobId id = events.front().job_id;
  apply_side_effects(events);
  return id;
}

std::optional<SimJob> SimStore::load_finished(JobId id) const {
  auto path = dir_ / "jobs" / (std::to_string(id) + ".json");
  if (!fs::exists(path)) return std::nullopt;
  return job_from_json(json::parse(read_file(path)), nullptr);
}

std::optional<Token> SimStore::status(JobId id) {
  if (const auto* job = cluster_.find(id)) return job->token;
  if (auto job = load_finished(id)) return job->token;
  return std::nullopt;
}

bool SimStore::cancel(JobId id) {
  if (!cluster_.find(id)) return load_finished(id).has_value();
  apply_side_effects(simsched::cancel(cluster_, id));
  return true;
}

void SimStore::tick(VTime seconds) {
  if (!config_.stepped) throw Error("tick needs a stepped clock (ssim init --stepped)");
  if (seconds < 0) throw Error("tick needs a non-negative duration");
  reconcile(cluster_.now + seconds);
}

}  // namespace portjob::simsched
