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

#include <doctest.h>

#include <mutex>

#include "portjob/batch.hpp"
#include "portjob/error.hpp"
#include "support.hpp"

using namespace portjob;
using support::TempDir;

namespace {

QueueAdapterDescriptor slurm_like() {
  return load_dialect(support::source_dir() / "tests" / "fixtures" / "slurm_like.json");
}

QueueAdapterDescriptor simsched_plain() {
  return load_dialect(support::source_dir() / "dialects" / "simsched.json");
}

JobSpec echo_spec() {
  JobSpec s;
  s.executable = "/bin/echo";
  s.arguments = {"hello world"};
  s.attributes.wall_time = std::chrono::seconds(90);
  return s;
}

int count_lines_starting(const std::string& text, const std::string& prefix) {
  int n = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind(prefix, 0) == 0) ++n;
  }
  return n;
}

// In-memory scheduler driven by the test. Records every command.
struct FakeScheduler {
  std::mutex mu;
  std::map<std::string, std::string> tokens;
  std::vector<std::vector<std::string>> calls;
  int next = 100;
  int status_exit = 0;

  CommandRunner runner() {
    return [this](const std::vector<std::string>& argv) {
      std::lock_guard lk(mu);
      calls.push_back(argv);
      CommandResult r;
      r.exit_code = 0;
      if (argv[0] == "ssub") {
        auto id = std::to_string(next++);
        tokens[id] = "PEND";
        r.out = id + "\n";
      } else if (argv[0] == "sstat") {
        r.exit_code = status_exit;
        for (std::size_t i = 1; i < argv.size(); ++i) {
          auto it = tokens.find(argv[i]);
          r.out += argv[i] + "|" + (it == tokens.end() ? "UNKNOWN" : it->second) + "\n";
        }
      } else if (argv[0] == "sscancel") {
        tokens[argv[1]] = "KILL";
      }
      return r;
    };
  }
  void set(const std::string& id, const std::string& token) {
    std::lock_guard lk(mu);
    tokens[id] = token;
  }
  int status_calls() {
    std::lock_guard lk(mu);
    int n = 0;
    for (const auto& c : calls) n += c[0] == "sstat";
    return n;
  }
};

}  // namespace

TEST_CASE("dialect files load and reject malformed input") {
  auto d = simsched_plain();
  CHECK(d.name == "simsched");
  CHECK(d.state_map.at("KILL") == JobState::CANCELED);
  CHECK(d.exit_code_source == ExitCodeSource::exit_file);

  auto doc = nlohmann::json::parse(support::slurp(support::source_dir() / "dialects" / "simsched.json"));
  auto bad = doc;
  bad["surprise"] = 1;
  CHECK_THROWS_AS(dialect_from_json(bad), ParseError);
  bad = doc;
  bad["state_map"]["PEND"] = "NEW";
  CHECK_THROWS_AS(dialect_from_json(bad), ParseError);
  bad = doc;
  bad.erase("submit_argv");
  CHECK_THROWS_AS(dialect_from_json(bad), ParseError);
  bad = doc;
  bad["id_pattern"] = "(";
  CHECK_THROWS_AS(dialect_from_json(bad), ParseError);
}

TEST_CASE("render_script: one directive each for nodes and walltime") {
  TempDir work;
  auto spec = echo_spec();
  spec.resources.node_count = 3;
  auto s = render_script(spec, simsched_plain(), "abc", work.path());
  CHECK(s.path == work / "job-abc.sub");
  CHECK(s.text.rfind("#!/bin/sh\n", 0) == 0);
  CHECK(count_lines_starting(s.text, "#SSUB -N ") == 1);
  CHECK(count_lines_starting(s.text, "#SSUB -t ") == 1);
  CHECK(s.text.find("#SSUB -N 3\n") != std::string::npos);
  CHECK(s.text.find("#SSUB -t 90\n") != std::string::npos);
  CHECK(count_lines_starting(s.text, "#SSUB -q") == 0);

  spec.attributes.queue_name = "debug";
  spec.attributes.account = "proj7";
  s = render_script(spec, simsched_plain(), "abc", work.path());
  CHECK(count_lines_starting(s.text, "#SSUB -q debug") == 1);
  CHECK(count_lines_starting(s.text, "#SSUB -A proj7") == 1);
}

TEST_CASE("render_script is deterministic and honors the dialect") {
  TempDir work;
  auto spec = echo_spec();
  spec.attributes.wall_time = std::chrono::seconds(3725);
  spec.attributes.custom["constraint"] = "haswell";
  spec.environment = {{"ZED", "it's"}, {"ALPHA", "1"}};
  auto a = render_script(spec, slurm_like(), "j1", work.path());
  auto b = render_script(spec, slurm_like(), "j1", work.path());
  CHECK(a.text == b.text);
  CHECK(a.text.rfind("#!/bin/bash\n", 0) == 0);
  CHECK(a.text.find("#SBATCH --time=01:02:05\n") != std::string::npos);
  CHECK(a.text.find("#SBATCH --constraint=haswell\n") != std::string::npos);
  // Sorted, single-quoted exports.
  auto alpha = a.text.find("export ALPHA='1'");
  auto zed = a.text.find("export ZED='it'\\''s'");
  CHECK(alpha != std::string::npos);
  CHECK(zed != std::string::npos);
  CHECK(alpha < zed);
  // status_output dialects leave no exit file behind.
  CHECK(a.text.find(".ec") == std::string::npos);

  CHECK_THROWS_AS(render_script(spec, simsched_plain(), "j1", work.path()), UnsupportedAttribute);
}

TEST_CASE("rendered scripts run under sh and record the exit code") {
  TempDir work;
  for (int code : {0, 1, 42, 255}) {
    JobSpec spec;
    spec.executable = "/bin/sh";
    spec.arguments = {"-c", "echo out; exit " + std::to_string(code)};
    spec.stdout_path = (work / "o.txt").string();
    auto s = render_script(spec, simsched_plain(), "x", work.path());
    support::write_file(s.path, s.text);
    auto r = run_command({"/bin/sh", s.path.string()});
    CHECK(r.exit_code == code);
    CHECK(support::slurp(exit_file_path(work.path(), "x")) == std::to_string(code) + "\n");
    CHECK(support::slurp(work / "o.txt") == "out\n");
  }
}

TEST_CASE("multiple launcher: every rank runs and the first failure wins") {
  TempDir work;
  JobSpec spec;
  spec.executable = "/bin/sh";
  spec.arguments = {"-c", "echo r$PORTJOB_RANK; [ $PORTJOB_RANK = 2 ] && exit 7; exit 0"};
  spec.launcher = Launcher::multiple;
  spec.resources.processes_per_node = 4;
  spec.stdout_path = (work / "o.txt").string();
  auto s = render_script(spec, simsched_plain(), "m", work.path());
  support::write_file(s.path, s.text);
  auto r = run_command({"/bin/sh", s.path.string()});
  CHECK(r.exit_code == 7);
  auto out = support::slurp(work / "o.txt");
  for (int i = 0; i < 4; ++i) CHECK(out.find("r" + std::to_string(i) + "\n") != std::string::npos);
}

TEST_CASE("parse_native_id") {
  auto d = simsched_plain();
  CHECK(parse_native_id("42\n", d) == "42");
  CHECK(parse_native_id("note: queued\n  17  \n", d) == "17");
  CHECK_THROWS_AS(parse_native_id("", d), IdParseError);
  CHECK_THROWS_AS(parse_native_id("error: nope\n", d), IdParseError);
  CHECK(parse_native_id("812;cluster2\n", slurm_like()) == "812");
}

TEST_CASE("poll_once issues one command for all ids") {
  FakeScheduler fake;
  fake.set("1", "PEND");
  fake.set("2", "RUN");
  fake.set("3", "DONE");
  fake.set("4", "KILL");
  fake.set("5", "FAIL");
  std::map<std::string, int> codes = {{"3", 0}, {"5", 9}, {"6", 4}};
  auto lookup = [&](const std::string& id) -> std::optional<int> {
    auto it = codes.find(id);
    return it == codes.end() ? std::nullopt : std::optional<int>(it->second);
  };
  auto r = poll_once({"1", "2", "3", "4", "5", "6", "7"}, simsched_plain(), fake.runner(), lookup);
  CHECK(fake.status_calls() == 1);
  CHECK(r.at("1").state == JobState::QUEUED);
  CHECK(r.at("2").state == JobState::ACTIVE);
  CHECK(r.at("3") == PollResult{JobState::COMPLETED, 0, std::nullopt});
  CHECK(r.at("4").state == JobState::CANCELED);
  CHECK(r.at("5") == PollResult{JobState::FAILED, 9, std::nullopt});
  // Forgotten by the scheduler but an exit file exists.
  CHECK(r.at("6") == PollResult{JobState::FAILED, 4, std::nullopt});
  CHECK(r.at("7").state == JobState::FAILED);
  CHECK(r.at("7").message);

  CHECK(poll_once({}, simsched_plain(), fake.runner(), lookup).empty());
  CHECK(fake.status_calls() == 1);

  fake.status_exit = 1;
  CHECK_THROWS_AS(poll_once({"1"}, simsched_plain(), fake.runner(), lookup), StatusCommandFailed);
}

TEST_CASE("poll_once reads exit codes from status output when configured") {
  auto d = slurm_like();
  CommandRunner run = [](const std::vector<std::string>&) {
    return CommandResult{0, "10|COMPLETED|0\n11|FAILED|3\n12|TIMEOUT\n", ""};
  };
  auto r = poll_once({"10", "11", "12"}, d, run, [](const std::string&) { return std::nullopt; });
  CHECK(r.at("10") == PollResult{JobState::COMPLETED, 0, std::nullopt});
  CHECK(r.at("11") == PollResult{JobState::FAILED, 3, std::nullopt});
  CHECK(r.at("12").state == JobState::FAILED);
  CHECK_FALSE(r.at("12").exit_code);
}

TEST_CASE("batch executor with a scripted scheduler") {
  TempDir work;
  FakeScheduler fake;
  BatchOptions o;
  o.adapter = simsched_plain();
  o.adapter.poll_interval = std::chrono::milliseconds(20);
  o.work_dir = work.path();
  o.runner = fake.runner();
  BatchExecutor ex(o);

  SUBCASE("history through every state") {
    auto job = ex.submit(echo_spec());
    CHECK(job.native_id == "100");
    CHECK(support::slurp(work / ("job-" + job.id + ".sub")).find("/bin/echo") != std::string::npos);
    ex.wait(job, {JobState::QUEUED}, std::chrono::seconds(5));
    fake.set("100", "RUN");
    ex.wait(job, {JobState::ACTIVE}, std::chrono::seconds(5));
    support::write_file(exit_file_path(work.path(), job.id), "0\n");
    fake.set("100", "DONE");
    auto st = ex.wait(job, {}, std::chrono::seconds(5));
    CHECK(st.state == JobState::COMPLETED);
    CHECK(st.exit_code == 0);
    CHECK(ex.snapshot(job.id).states() ==
          std::vector<JobState>{JobState::NEW, JobState::QUEUED, JobState::ACTIVE,
                                JobState::COMPLETED});
  }

  SUBCASE("missed ACTIVE is repaired") {
    auto job = ex.submit(echo_spec());
    support::write_file(exit_file_path(work.path(), job.id), "3\n");
    fake.set("100", "FAIL");
    auto st = ex.wait(job, {}, std::chrono::seconds(5));
    CHECK(st.state == JobState::FAILED);
    CHECK(st.exit_code == 3);
    CHECK(ex.snapshot(job.id).states() ==
          std::vector<JobState>{JobState::NEW, JobState::QUEUED, JobState::ACTIVE,
                                JobState::FAILED});
  }

  SUBCASE("cancel goes through the cancel command") {
    auto job = ex.submit(echo_spec());
    ex.cancel(job);
    auto st = ex.wait(job, {}, std::chrono::seconds(5));
    INFO(st.message.value_or(""));
    CHECK(st.state == JobState::CANCELED);
  }

  SUBCASE("submit failures end the job FAILED") {
    auto spec = echo_spec();
    spec.attributes.custom["gres"] = "gpu";
    auto job = ex.submit(spec);
    auto st = ex.wait(job, {}, std::chrono::seconds(5));
    CHECK(st.state == JobState::FAILED);
    REQUIRE(st.message);
    CHECK(st.message->find("gres") != std::string::npos);
  }

  SUBCASE("status command failures are retried") {
    auto job = ex.submit(echo_spec());
    fake.status_exit = 2;
    INFO(to_string(ex.snapshot(job.id).state()));
    CHECK(support::eventually([&] { return ex.consecutive_poll_failures() >= 3; }));
    CHECK(ex.last_poll_error());
    fake.status_exit = 0;
    fake.set("100", "RUN");
    ex.wait(job, {JobState::ACTIVE}, std::chrono::seconds(5));
    CHECK(ex.consecutive_poll_failures() == 0);
  }

  SUBCASE("attach to an existing native id") {
    auto job = ex.submit(echo_spec());
    fake.set("100", "RUN");
    Job other;
    other.id = make_job_id();
    auto attached = ex.attach(other, "100");
    ex.wait(attached, {JobState::ACTIVE}, std::chrono::seconds(5));
    CHECK_THROWS_AS(ex.attach(Job{}, "999"), UnknownNativeId);
  }
}

TEST_CASE("batch executor end to end against the simulated scheduler") {
  simsched::StoreConfig config;
  config.nodes = 4;
  config.timescale = 0.01;
  support::SimCluster cluster(config);
  BatchExecutor ex(cluster.options(0.1));

  auto ok_spec = [](int code) {
    JobSpec s;
    s.executable = "/bin/sh";
    s.arguments = {"-c", "exit " + std::to_string(code)};
    s.attributes.wall_time = std::chrono::seconds(1000);
    return s;
  };

  auto a = ex.submit(ok_spec(0));
  auto b = ex.submit(ok_spec(5));
  auto sa = ex.wait(a, {}, std::chrono::seconds(20));
  auto sb = ex.wait(b, {}, std::chrono::seconds(20));
  CHECK(sa.state == JobState::COMPLETED);
  CHECK(sb.state == JobState::FAILED);
  CHECK(sb.exit_code == 5);
  const std::vector<JobState> ok = {JobState::NEW, JobState::QUEUED, JobState::ACTIVE,
                                    JobState::COMPLETED};
  CHECK(ex.snapshot(a.id).states() == ok);

  JobSpec out_spec;
  out_spec.executable = "/bin/echo";
  out_spec.arguments = {"through the queue"};
  out_spec.stdout_path = (cluster.work / "echo.out").string();
  auto c = ex.submit(out_spec);
  CHECK(ex.wait(c, {}, std::chrono::seconds(20)).state == JobState::COMPLETED);
  CHECK(support::slurp(cluster.work / "echo.out") == "through the queue\n");

  JobSpec sleeper = ok_spec(0);
  sleeper.arguments = {"-c", "sleep 30"};
  auto d = ex.submit(sleeper);
  ex.wait(d, {JobState::ACTIVE}, std::chrono::seconds(20));
  ex.cancel(d);
  CHECK(ex.wait(d, {}, std::chrono::seconds(20)).state == JobState::CANCELED);

  JobSpec huge = ok_spec(0);
  huge.resources.node_count = 99;
  huge.launcher = Launcher::multiple;
  auto e = ex.submit(huge);
  auto se = ex.wait(e, {}, std::chrono::seconds(20));
  CHECK(se.state == JobState::FAILED);
  REQUIRE(se.message);
  CHECK(se.message->find("exceeds") != std::string::npos);
}
