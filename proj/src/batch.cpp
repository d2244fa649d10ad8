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

#include "portjob/batch.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include "portjob/error.hpp"

namespace portjob {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Dialect files

namespace {

std::vector<std::string> string_list(const json& v, const char* key) {
  if (!v.is_array()) throw ParseError(std::string(key) + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) throw ParseError(std::string(key) + ": expected an array of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

std::string string_value(const json& v, const char* key) {
  if (!v.is_string()) throw ParseError(std::string(key) + ": expected a string");
  return v.get<std::string>();
}

std::string fill(const std::string& tmpl, const std::string& value) {
  auto pos = tmpl.find("{}");
  if (pos == std::string::npos) return tmpl + " " + value;
  return tmpl.substr(0, pos) + value + tmpl.substr(pos + 2);
}

std::string format_walltime(std::chrono::seconds wall, WalltimeFormat format) {
  const auto s = wall.count();
  switch (format) {
    case WalltimeFormat::seconds: return std::to_string(s);
    case WalltimeFormat::minutes: return std::to_string((s + 59) / 60);
    case WalltimeFormat::hms: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld", static_cast<long long>(s / 3600),
                    static_cast<long long>(s / 60 % 60), static_cast<long long>(s % 60));
      return buf;
    }
  }
  return std::to_string(s);
}

// Single-quoted for /bin/sh.
std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string command_line(const LaunchCommand& cmd) {
  std::string line;
  for (const auto& [k, v] : cmd.environment) line += k + "=" + quote(v) + " ";
  for (std::size_t i = 0; i < cmd.argv.size(); ++i) {
    if (i) line += ' ';
    line += quote(cmd.argv[i]);
  }
  return line;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

}  // namespace

QueueAdapterDescriptor dialect_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("dialect: expected an object");
  static const std::set<std::string> known = {
      "name",          "interpreter",      "submit_argv",       "status_argv",
      "cancel_argv",   "directive_prefix", "directives",        "walltime_format",
      "custom_directives", "id_pattern",   "status_pattern",    "state_map",
      "poll_interval_s",   "exit_code_source"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ParseError("dialect: unknown key '" + key + "'");
  }
  for (const char* required : {"name", "submit_argv", "status_argv", "cancel_argv",
                               "directive_prefix", "state_map"}) {
    if (!doc.contains(required)) throw ParseError(std::string("dialect: missing '") + required + "'");
  }
  QueueAdapterDescriptor d;
  d.name = string_value(doc["name"], "name");
  if (doc.contains("interpreter")) d.interpreter = string_value(doc["interpreter"], "interpreter");
  d.submit_argv = string_list(doc["submit_argv"], "submit_argv");
  d.status_argv = string_list(doc["status_argv"], "status_argv");
  d.cancel_argv = string_list(doc["cancel_argv"], "cancel_argv");
  if (d.submit_argv.empty() || d.status_argv.empty() || d.cancel_argv.empty()) {
    throw ParseError("dialect: command lists must be non-empty");
  }
  d.directive_prefix = string_value(doc["directive_prefix"], "directive_prefix");
  if (doc.contains("directives")) {
    const auto& dir = doc["directives"];
    if (!dir.is_object()) throw ParseError("directives: expected an object");
    for (const auto& [key, value] : dir.items()) {
      auto text = string_value(value, "directives");
      if (key == "nodes") d.nodes_directive = text;
      else if (key == "walltime") d.walltime_directive = text;
      else if (key == "queue") d.queue_directive = text;
      else if (key == "account") d.account_directive = text;
      else throw ParseError("directives: unknown key '" + key + "'");
    }
  }
  if (doc.contains("walltime_format")) {
    auto f = string_value(doc["walltime_format"], "walltime_format");
    if (f == "seconds") d.walltime_format = WalltimeFormat::seconds;
    else if (f == "minutes") d.walltime_format = WalltimeFormat::minutes;
    else if (f == "hms") d.walltime_format = WalltimeFormat::hms;
    else throw ParseError("walltime_format: unknown format '" + f + "'");
  }
  if (doc.contains("custom_directives")) {
    const auto& c = doc["custom_directives"];
    if (!c.is_object()) throw ParseError("custom_directives: expected an object");
    for (const auto& [key, value] : c.items()) {
      d.custom_directives[key] = string_value(value, "custom_directives");
    }
  }
  if (doc.contains("id_pattern")) d.id_pattern = string_value(doc["id_pattern"], "id_pattern");
  if (doc.contains("status_pattern")) {
    d.status_pattern = string_value(doc["status_pattern"], "status_pattern");
  }
  for (const auto* pattern : {&d.id_pattern, &d.status_pattern}) {
    try {
      std::regex probe(*pattern);
    } catch (const std::regex_error& e) {
      throw ParseError("dialect: bad pattern '" + *pattern + "': " + e.what());
    }
  }
  const auto& map = doc["state_map"];
  if (!map.is_object() || map.empty()) throw ParseError("state_map: expected a non-empty object");
  for (const auto& [token, value] : map.items()) {
    auto state = parse_state(string_value(value, "state_map"));
    if (!state) throw ParseError("state_map: unknown state for token '" + token + "'");
    if (*state == JobState::NEW) throw ParseError("state_map: token '" + token + "' maps to NEW");
    d.state_map[token] = *state;
  }
  if (doc.contains("poll_interval_s")) {
    if (!doc["poll_interval_s"].is_number()) throw ParseError("poll_interval_s: expected a number");
    double s = doc["poll_interval_s"].get<double>();
    if (!(s > 0)) throw ParseError("poll_interval_s must be > 0");
    d.poll_interval = std::chrono::duration<double>(s);
  }
  if (doc.contains("exit_code_source")) {
    auto src = string_value(doc["exit_code_source"], "exit_code_source");
    if (src == "exit_file") d.exit_code_source = ExitCodeSource::exit_file;
    else if (src == "status_output") d.exit_code_source = ExitCodeSource::status_output;
    else throw ParseError("exit_code_source: unknown source '" + src + "'");
  }
  return d;
}

QueueAdapterDescriptor load_dialect(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dialect file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("dialect " + path.string() + ": " + e.what());
  }
  return dialect_from_json(doc);
}

// ---------------------------------------------------------------------------
// Scripts

fs::path script_path(const fs::path& work_dir, const std::string& job_id) {
  return work_dir / ("job-" + job_id + ".sub");
}

fs::path exit_file_path(const fs::path& work_dir, const std::string& job_id) {
  return work_dir / ("job-" + job_id + ".ec");
}

SubmitScript render_script(const JobSpec& spec, const QueueAdapterDescriptor& adapter,
                           const std::string& job_id, const fs::path& work_dir,
                           const LauncherOptions& launcher) {
  for (const auto& [key, _] : spec.attributes.custom) {
    if (!adapter.custom_directives.count(key)) {
      throw UnsupportedAttribute("dialect '" + adapter.name + "' has no directive for custom attribute '" +
                                 key + "'");
    }
  }
  std::ostringstream out;
  out << adapter.interpreter << "\n";
  const auto directive = [&](const std::string& tmpl, const std::string& value) {
    out << adapter.directive_prefix << " " << fill(tmpl, value) << "\n";
  };
  directive(adapter.nodes_directive, std::to_string(spec.resources.node_count));
  directive(adapter.walltime_directive,
            format_walltime(spec.attributes.wall_time, adapter.walltime_format));
  if (spec.attributes.queue_name) directive(adapter.queue_directive, *spec.attributes.queue_name);
  if (spec.attributes.account) directive(adapter.account_directive, *spec.attributes.account);
  for (const auto& [key, value] : spec.attributes.custom) {
    directive(adapter.custom_directives.at(key), value);
  }

  if (spec.directory) out << "cd " << quote(*spec.directory) << " || exit 1\n";
  for (const auto& [k, v] : spec.environment) out << "export " << k << "=" << quote(v) << "\n";

  std::string redirs;
  if (spec.stdin_path) redirs += " < " + quote(*spec.stdin_path);
  const auto plan = render_launch(spec, launcher);
  if (plan.processes.size() == 1) {
    if (spec.stdout_path) redirs += " > " + quote(*spec.stdout_path);
    if (spec.stderr_path) {
      redirs += spec.stderr_path == spec.stdout_path ? " 2>&1" : " 2> " + quote(*spec.stderr_path);
    }
    out << command_line(plan.processes.front()) << redirs << "\n";
    out << "__portjob_ec=$?\n";
  } else {
    // Shared output files: truncate once, then every process appends.
    if (spec.stdout_path) {
      out << ": > " << quote(*spec.stdout_path) << "\n";
      redirs += " >> " + quote(*spec.stdout_path);
    }
    if (spec.stderr_path) {
      if (spec.stderr_path == spec.stdout_path) {
        redirs += " 2>&1";
      } else {
        out << ": > " << quote(*spec.stderr_path) << "\n";
        redirs += " 2>> " + quote(*spec.stderr_path);
      }
    }
    out << "__portjob_pids=\n";
    for (const auto& cmd : plan.processes) {
      out << command_line(cmd) << redirs << " &\n";
      out << "__portjob_pids=\"$__portjob_pids $!\"\n";
    }
    out << "__portjob_ec=0\n";
    out << "for __portjob_pid in $__portjob_pids; do\n";
    out << "  wait \"$__portjob_pid\"; __portjob_rc=$?\n";
    out << "  [ \"$__portjob_ec\" -eq 0 ] && __portjob_ec=$__portjob_rc\n";
    out << "done\n";
  }
  if (adapter.exit_code_source == ExitCodeSource::exit_file) {
    out << "printf '%d\\n' \"$__portjob_ec\" > " << quote(exit_file_path(work_dir, job_id).string())
        << "\n";
  }
  out << "exit \"$__portjob_ec\"\n";
  return {out.str(), script_path(work_dir, job_id)};
}

std::string parse_native_id(const std::string& submit_output, const QueueAdapterDescriptor& adapter) {
  const std::regex pattern(adapter.id_pattern);
  for (const auto& line : lines_of(submit_output)) {
    std::smatch m;
    if (std::regex_search(line, m, pattern)) {
      if (m.size() > 1 && m[1].matched) return m[1].str();
      return m[0].str();
    }
  }
  throw IdParseError("no job id in submit output: '" + submit_output + "'");
}

// ---------------------------------------------------------------------------
// Polling

std::map<std::string, PollResult> poll_once(const std::set<std::string>& native_ids,
                                            const QueueAdapterDescriptor& adapter,
                                            const CommandRunner& run,
                                            const ExitCodeLookup& exit_code_of) {
  std::map<std::string, PollResult> results;
  if (native_ids.empty()) return results;
  auto argv = adapter.status_argv;
  argv.insert(argv.end(), native_ids.begin(), native_ids.end());
  auto res = run(argv);
  if (res.exit_code != 0) {
    throw StatusCommandFailed("status command exited " + std::to_string(res.exit_code) + ": " +
                              res.err);
  }

  struct Seen {
    JobState state;
    std::optional<int> code;
  };
  std::map<std::string, Seen> seen;
  const std::regex pattern(adapter.status_pattern);
  for (const auto& line : lines_of(res.out)) {
    std::smatch m;
    if (!std::regex_search(line, m, pattern) || m.size() < 3) continue;
    auto it = adapter.state_map.find(m[2].str());
    if (it == adapter.state_map.end()) continue;  // e.g. UNKNOWN: resolved below
    Seen s{it->second, std::nullopt};
    if (m.size() > 3 && m[3].matched) {
      try {
        s.code = std::stoi(m[3].str());
      } catch (const std::exception&) {
      }
    }
    seen[m[1].str()] = s;
  }

  for (const auto& id : native_ids) {
    PollResult r;
    auto it = seen.find(id);
    if (it != seen.end()) {
      r.state = it->second.state;
      if (r.state == JobState::COMPLETED || r.state == JobState::FAILED) {
        auto code = adapter.exit_code_source == ExitCodeSource::exit_file ? exit_code_of(id)
                                                                          : it->second.code;
        if (code) {
          r.exit_code = *code;
          r.state = *code == 0 ? JobState::COMPLETED : JobState::FAILED;
        } else if (r.state == JobState::COMPLETED) {
          r.exit_code = 0;
        }
      }
    } else if (auto code = exit_code_of(id)) {
      r.state = *code == 0 ? JobState::COMPLETED : JobState::FAILED;
      r.exit_code = *code;
    } else {
      r.state = JobState::FAILED;
      r.message = "job " + id + " vanished from the scheduler";
    }
    results[id] = r;
  }
  return results;
}

// ---------------------------------------------------------------------------
// Executor

BatchOptions batch_options_from_config(const ExecutorConfig& config) {
  BatchOptions options;
  if (!config.is_object() || !config.contains("dialect")) {
    throw Error("batch executor needs a 'dialect' (file path or inline object)");
  }
  const auto& dialect = config["dialect"];
  options.adapter = dialect.is_string() ? load_dialect(dialect.get<std::string>())
                                        : dialect_from_json(dialect);
  if (config.contains("work_dir")) options.work_dir = config["work_dir"].get<std::string>();
  if (config.contains("mpi_launcher")) {
    options.launcher.mpi_launcher = config["mpi_launcher"].get<std::string>();
  }
  if (config.contains("command_env")) {
    for (const auto& [k, v] : config["command_env"].items()) {
      options.command_env[k] = v.get<std::string>();
    }
  }
  if (config.contains("poll_interval_s")) {
    options.adapter.poll_interval =
        std::chrono::duration<double>(config["poll_interval_s"].get<double>());
  }
  return options;
}

BatchExecutor::BatchExecutor(BatchOptions options)
    : ExecutorBase(describe()), options_(std::move(options)) {
  if (!options_.runner) {
    options_.runner = [env = options_.command_env](const std::vector<std::string>& argv) {
      return run_command(argv, env);
    };
  }
  fs::create_directories(options_.work_dir);
  options_.work_dir = fs::absolute(options_.work_dir);
  poller_ = std::thread([this] { poll_loop(); });
}

BatchExecutor::~BatchExecutor() {
  {
    std::lock_guard lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  poller_.join();
  stop_delivery();
}

ExecutorDescriptor BatchExecutor::describe() {
  return {"batch", "1.0", {Capability::attach, Capability::cancel}};
}

std::uint64_t BatchExecutor::status_commands_issued() const {
  std::lock_guard lk(mu_);
  return status_commands_;
}

int BatchExecutor::consecutive_poll_failures() const {
  std::lock_guard lk(mu_);
  return consecutive_failures_;
}

std::optional<std::string> BatchExecutor::last_poll_error() const {
  std::lock_guard lk(mu_);
  return last_error_;
}

CommandResult BatchExecutor::run(const std::vector<std::string>& argv) {
  return options_.runner(argv);
}

std::optional<int> BatchExecutor::exit_code_for(const std::string& native_id) const {
  std::string job_id;
  {
    std::lock_guard lk(mu_);
    if (auto it = owner_.find(native_id); it != owner_.end()) job_id = it->second;
    else if (auto it2 = by_native_.find(native_id); it2 != by_native_.end() && !it2->second.empty())
      job_id = *it2->second.begin();
  }
  if (job_id.empty()) return std::nullopt;
  std::ifstream in(exit_file_path(options_.work_dir, job_id));
  int code;
  if (in >> code) return code;
  return std::nullopt;
}

void BatchExecutor::do_submit(const Job& job) {
  SubmitScript script;
  try {
    script = render_script(job.spec, options_.adapter, job.id, options_.work_dir, options_.launcher);
    std::error_code ec;
    fs::remove(exit_file_path(options_.work_dir, job.id), ec);
    std::ofstream out(script.path, std::ios::trunc);
    out << script.text;
    if (!out.flush()) throw SubmitFailed("cannot write " + script.path.string());
  } catch (const Error& e) {
    post(job.id, JobStatus::make(JobState::FAILED, std::nullopt, e.what()));
    return;
  }

  auto argv = options_.adapter.submit_argv;
  argv.push_back(script.path.string());
  auto res = run(argv);
  if (res.exit_code != 0) {
    std::string msg = "submit command exited " + std::to_string(res.exit_code);
    if (!res.err.empty()) msg += ": " + res.err;
    while (!msg.empty() && msg.back() == '\n') msg.pop_back();
    post(job.id, JobStatus::make(JobState::FAILED, std::nullopt, msg));
    return;
  }
  std::string native;
  try {
    native = parse_native_id(res.out, options_.adapter);
  } catch (const IdParseError& e) {
    post(job.id, JobStatus::make(JobState::FAILED, std::nullopt, e.what()));
    return;
  }
  set_native_id(job.id, native);
  {
    std::lock_guard lk(mu_);
    owner_[native] = job.id;
    by_native_[native].insert(job.id);
  }
  post(job.id, JobStatus::make(JobState::QUEUED));
}

void BatchExecutor::do_cancel(const Job& job) {
  if (!job.native_id) throw UnknownJob("job " + job.id + " has no scheduler id");
  auto argv = options_.adapter.cancel_argv;
  argv.push_back(*job.native_id);
  auto res = run(argv);
  if (res.exit_code != 0) {
    std::cerr << "portjob: cancel of " << *job.native_id << " failed: " << res.err;
  }
  cv_.notify_all();
}

void BatchExecutor::do_attach(const Job& job) {
  const std::string native = *job.native_id;
  {
    std::lock_guard lk(mu_);
    by_native_[native].insert(job.id);
  }
  auto unbind = [&] {
    std::lock_guard lk(mu_);
    auto it = by_native_.find(native);
    if (it == by_native_.end()) return;
    it->second.erase(job.id);
    if (it->second.empty()) by_native_.erase(it);
  };
  std::map<std::string, PollResult> results;
  try {
    results = poll_once({native}, options_.adapter, options_.runner,
                        [this](const std::string& id) { return exit_code_for(id); });
  } catch (const StatusCommandFailed& e) {
    unbind();
    throw UnknownNativeId("cannot query " + native + ": " + e.what());
  }
  const auto& r = results.at(native);
  if (r.message && !r.exit_code && r.state == JobState::FAILED) {
    unbind();
    throw UnknownNativeId("scheduler does not know job " + native);
  }
  apply(job.id, r);
}

void BatchExecutor::apply(const std::string& job_id, const PollResult& r) {
  auto current = state_of(job_id);
  if (!current || is_terminal(*current) || *current == r.state) return;
  const bool ran = r.exit_code.has_value();
  if (*current == JobState::NEW && (r.state != JobState::FAILED || ran)) {
    post(job_id, JobStatus::make(JobState::QUEUED));
    current = JobState::QUEUED;
  }
  // Missed-ACTIVE repair: the poller raced a job that ran to completion.
  if (*current == JobState::QUEUED && (r.state == JobState::COMPLETED || (r.state == JobState::FAILED && ran))) {
    post(job_id, JobStatus::make(JobState::ACTIVE));
  }
  if (r.state == JobState::QUEUED) return;
  post(job_id, JobStatus::make(r.state, r.exit_code, r.message));
}

void BatchExecutor::poll_loop() {
  std::unique_lock lk(mu_);
  auto next = Clock::now();
  for (;;) {
    cv_.wait_until(lk, next, [&] { return stop_; });
    if (stop_) return;
    if (Clock::now() < next) continue;
    next = Clock::now() + std::chrono::duration_cast<Clock::duration>(options_.adapter.poll_interval);

    std::set<std::string> ids;
    for (const auto& [native, jobs] : by_native_) {
      for (const auto& job_id : jobs) {
        auto s = state_of(job_id);
        if (s && !is_terminal(*s)) ids.insert(native);
      }
    }
    if (ids.empty()) continue;
    ++status_commands_;
    lk.unlock();
    std::map<std::string, PollResult> results;
    std::optional<std::string> error;
    try {
      results = poll_once(ids, options_.adapter, options_.runner,
                          [this](const std::string& id) { return exit_code_for(id); });
    } catch (const StatusCommandFailed& e) {
      error = e.what();
    }
    lk.lock();
    if (error) {
      last_error_ = error;
      if (++consecutive_failures_ == options_.failures_before_report) {
        std::cerr << "portjob: " << consecutive_failures_ << " consecutive status failures: "
                  << *error << "\n";
      }
      continue;
    }
    consecutive_failures_ = 0;
    std::vector<std::pair<std::string, PollResult>> updates;
    for (const auto& [native, r] : results) {
      if (auto it = by_native_.find(native); it != by_native_.end()) {
        for (const auto& job_id : it->second) updates.emplace_back(job_id, r);
      }
    }
    lk.unlock();
    for (const auto& [job_id, r] : updates) apply(job_id, r);
    lk.lock();
    for (auto it = by_native_.begin(); it != by_native_.end();) {
      auto& jobs = it->second;
      for (auto j = jobs.begin(); j != jobs.end();) {
        auto s = state_of(*j);
        if (!s || is_terminal(*s)) j = jobs.erase(j);
        else ++j;
      }
      if (jobs.empty()) it = by_native_.erase(it);
      else ++it;
    }
  }
}

}  // namespace portjob
