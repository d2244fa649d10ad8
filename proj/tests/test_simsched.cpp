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

#include <random>

#include "oracles/sim_oracle.hpp"
#include "portjob/simsched.hpp"
#include "sim_driver.hpp"

namespace ss = portjob::simsched;

namespace {

ss::SimJob make_job(ss::JobId id, std::int64_t nodes, double walltime, double runtime) {
  ss::SimJob j;
  j.id = id;
  j.nodes = nodes;
  j.walltime = walltime;
  j.runtime = runtime;
  return j;
}

ss::SimCluster worked_example_queue() {
  ss::SimCluster c;
  c.total_nodes = 4;
  c.pending = {make_job(1, 3, 10, 10), make_job(2, 2, 5, 5), make_job(3, 1, 5, 5)};
  return c;
}

std::vector<ss::JobId> ids(const ss::ScheduleResult& r) {
  std::vector<ss::JobId> out;
  for (const auto& s : r.starts) out.push_back(s.job_id);
  return out;
}

}  // namespace

TEST_CASE("schedule_step on an empty queue starts nothing") {
  ss::SimCluster c;
  c.total_nodes = 4;
  CHECK(ss::schedule_step(c, false).starts.empty());
  CHECK(ss::schedule_step(c, true).starts.empty());
}

TEST_CASE("strict FIFO stops at the first job that does not fit") {
  auto c = worked_example_queue();
  auto r = ss::schedule_step(c, false);
  CHECK(ids(r) == std::vector<ss::JobId>{1});
  CHECK_FALSE(r.reservation);
}

TEST_CASE("EASY backfill starts J3 and reserves t=10 for J2") {
  auto c = worked_example_queue();
  auto r = ss::schedule_step(c, true);
  CHECK(ids(r) == std::vector<ss::JobId>{1, 3});
  CHECK(r.starts[1].backfilled);
  REQUIRE(r.reservation);
  CHECK(r.reservation->job_id == 2);
  CHECK(r.reservation->time == doctest::Approx(10));
}

TEST_CASE("backfill candidate that would delay the reservation is held back") {
  ss::SimCluster c;
  c.total_nodes = 4;
  c.now = 0;
  auto running = make_job(1, 3, 10, 10);
  running.start_time = 0;
  running.token = ss::Token::RUN;
  c.running = {running};
  // Head needs all 4 nodes at t=10; a 1-node 15 s job would hold one past it.
  c.pending = {make_job(2, 4, 5, 5), make_job(3, 1, 15, 15), make_job(4, 1, 10, 10)};
  auto r = ss::schedule_step(c, true);
  CHECK(ids(r) == std::vector<ss::JobId>{4});
}

TEST_CASE("backfill may use nodes left spare at the reservation") {
  ss::SimCluster c;
  c.total_nodes = 4;
  auto running = make_job(1, 2, 10, 10);
  running.start_time = 0;
  running.token = ss::Token::RUN;
  c.running = {running};
  // Head needs 3 at t=10, one node spare then: a long 1-node job may run.
  c.pending = {make_job(2, 3, 5, 5), make_job(3, 1, 50, 50), make_job(4, 1, 50, 50)};
  auto r = ss::schedule_step(c, true);
  CHECK(ids(r) == std::vector<ss::JobId>{3});
}

TEST_CASE("advance: single job starts at 0 and finishes at its runtime") {
  ss::SimCluster c;
  c.total_nodes = 1;
  auto ev = ss::submit(c, make_job(0, 1, 100, 5));
  auto more = ss::advance(c, 10);
  ev.insert(ev.end(), more.begin(), more.end());
  REQUIRE(ev.size() == 3);
  CHECK(ss::format_event(ev[0]) == "0.000 submit 1 PEND");
  CHECK(ss::format_event(ev[1]) == "0.000 start 1 RUN");
  CHECK(ss::format_event(ev[2]) == "5.000 finish 1 DONE");
  CHECK(c.now == doctest::Approx(10));
}

TEST_CASE("advance: runtime beyond walltime is killed at the walltime") {
  ss::SimCluster c;
  c.total_nodes = 1;
  ss::submit(c, make_job(0, 1, 10, 20));
  auto ev = ss::advance(c, 30);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].time == doctest::Approx(10));
  CHECK(ev[0].token == ss::Token::KILL);
}

TEST_CASE("advance: second of two 1-node jobs starts when the first finishes") {
  // Oracle first: the naive stepper fixes the expected times.
  auto expected = oracle::simulate(1, false, {{1, 10, 4, 0}, {1, 10, 4, 0}});
  CHECK(expected.start == std::vector<int>{0, 4});

  ss::SimCluster c;
  c.total_nodes = 1;
  ss::submit(c, make_job(0, 1, 10, 4));
  ss::submit(c, make_job(0, 1, 10, 4));
  ss::advance(c, 100);
  REQUIRE(c.finished.size() == 2);
  CHECK(*c.finished[1].start_time == doctest::Approx(expected.start[1]));
  CHECK(*c.finished[0].end_time == doctest::Approx(*c.finished[1].start_time));
}

TEST_CASE("nonzero exit code finishes as FAIL") {
  ss::SimCluster c;
  c.total_nodes = 2;
  auto j = make_job(0, 1, 10, 2);
  j.exit_code = 3;
  ss::submit(c, j);
  ss::advance(c, 5);
  REQUIRE(c.finished.size() == 1);
  CHECK(c.finished[0].token == ss::Token::FAIL);
}

TEST_CASE("oversized job fails at submit") {
  ss::SimCluster c;
  c.total_nodes = 2;
  auto ev = ss::submit(c, make_job(0, 3, 10, 1));
  REQUIRE(ev.size() == 2);
  CHECK(ev[1].token == ss::Token::FAIL);
  CHECK(c.pending.empty());
}

TEST_CASE("cancel: pending and running jobs end KILL and free their nodes") {
  ss::SimCluster c;
  c.total_nodes = 1;
  ss::submit(c, make_job(0, 1, 100, 50));
  ss::submit(c, make_job(0, 1, 100, 50));
  auto ev = ss::cancel(c, 2);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == ss::SimEvent::Kind::cancel);
  CHECK(c.find(2)->token == ss::Token::KILL);

  ss::submit(c, make_job(0, 1, 100, 50));
  ev = ss::cancel(c, 1);
  // Job 3 takes the freed node immediately.
  REQUIRE(ev.size() == 2);
  CHECK(ev[1].kind == ss::SimEvent::Kind::start);
  CHECK(ev[1].job_id == 3);
  CHECK(ss::cancel(c, 99).empty());
}

TEST_CASE("report_exit ends a job of unknown runtime") {
  ss::SimCluster c;
  c.total_nodes = 1;
  ss::SimJob j;
  j.nodes = 1;
  j.walltime = 100;
  ss::submit(c, j);
  ss::advance(c, 7);
  CHECK(c.running.size() == 1);
  ss::report_exit(c, 1, 3, 0);
  auto ev = ss::advance(c, 7);
  REQUIRE(ev.size() == 1);
  // Reported in the past: the finish lands at the current clock, not before.
  CHECK(ev[0].time == doctest::Approx(7));
  CHECK(ev[0].token == ss::Token::DONE);
}

TEST_CASE("randomized: engine matches the time-stepping oracle") {
  std::mt19937 rng(20261018);
  for (int round = 0; round < 300; ++round) {
    auto inst = simtest::random_instance(rng);
    for (bool backfill : {false, true}) {
      auto expected = oracle::simulate(inst.nodes, backfill, inst.jobs);
      auto got = simtest::run_engine(inst.nodes, backfill, inst.jobs);
      INFO("round " << round << " backfill " << backfill);
      REQUIRE(got.outcome.start == expected.start);
      REQUIRE(got.outcome.end == expected.end);
      REQUIRE(got.outcome.killed == expected.killed);
      REQUIRE_FALSE(got.oversubscribed);
    }
  }
}

TEST_CASE("randomized: blocked head never starts after its first reservation") {
  std::mt19937 rng(7);
  for (int round = 0; round < 300; ++round) {
    auto inst = simtest::random_instance(rng, 8, 6);
    auto run = simtest::run_engine(inst.nodes, true, inst.jobs);
    for (const auto& [id, reserved] : run.first_reservation) {
      const int start = run.outcome.start[static_cast<std::size_t>(id - 1)];
      INFO("round " << round << " job " << id);
      CHECK(start <= reserved);
    }
  }
}

TEST_CASE("identical inputs give byte-identical event streams") {
  std::mt19937 rng(99);
  for (int round = 0; round < 50; ++round) {
    auto inst = simtest::random_instance(rng);
    auto a = simtest::run_engine(inst.nodes, true, inst.jobs);
    auto b = simtest::run_engine(inst.nodes, true, inst.jobs);
    std::string sa, sb;
    for (const auto& e : a.events) sa += ss::format_event(e) + "\n";
    for (const auto& e : b.events) sb += ss::format_event(e) + "\n";
    CHECK(sa == sb);
  }
}
