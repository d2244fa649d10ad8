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

#include <sys/types.h>

#include <cstdint>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "portjob/executor.hpp"
#include "portjob/launch.hpp"

namespace portjob {

struct NodeInventory {
  int id = 0;
  int cores = 0;
  int gpus = 0;

  friend bool operator==(const NodeInventory&, const NodeInventory&) = default;
};

// Cores and gpus one task holds on one node.
struct NodeShare {
  int node = 0;
  std::vector<int> cores;
  std::vector<int> gpus;

  friend bool operator==(const NodeShare&, const NodeShare&) = default;
};

// Per-process binding (exported to the process) plus the per-node totals
// the slot reserves. Exclusive slots reserve whole nodes.
struct Slot {
  std::vector<NodeShare> processes;
  std::vector<NodeShare> nodes;

  friend bool operator==(const Slot&, const Slot&) = default;
};

class ResourcePool {
 public:
  ResourcePool() = default;
  explicit ResourcePool(std::vector<NodeInventory> nodes);
  static ResourcePool uniform(int node_count, int cores, int gpus = 0, int first_id = 0);

  const std::vector<NodeInventory>& nodes() const { return nodes_; }
  std::set<int> node_ids() const;
  bool has_node(int id) const;
  const NodeInventory& node(int id) const;

  int free_cores(int node) const;
  int free_gpus(int node) const;
  bool core_free(int node, int core) const;
  bool gpu_free(int node, int gpu) const;
  // No live slot touches the node.
  bool node_idle(int node) const;

  // Whether a task with this demand fits the empty pool.
  bool can_ever_fit(const ResourceSpec& demand) const;

  // Both return false and leave the pool unchanged when an index is not in
  // the expected state; callers treat that as an oversubscription.
  bool take(const Slot& slot);
  bool give_back(const Slot& slot);

  // A pool over a subset of the nodes, all free.
  ResourcePool subset(const std::vector<int>& node_ids) const;
  ResourcePool without(const std::set<int>& node_ids) const;

  // Equal iff same node ids and capacities; free state is ignored.
  friend bool operator==(const ResourcePool& a, const ResourcePool& b) { return a.nodes_ == b.nodes_; }

 private:
  std::size_t index_of(int node) const;

  std::vector<NodeInventory> nodes_;  // ascending id
  std::vector<std::vector<bool>> core_busy_;
  std::vector<std::vector<bool>> gpu_busy_;
};

struct PendingTask {
  std::string id;
  ResourceSpec demand;
};

struct Placement {
  std::string task_id;
  Slot slot;

  friend bool operator==(const Placement&, const Placement&) = default;
};

// Greedy FIFO first-fit. Tasks that do not fit are skipped, later ones may
// still be placed. Multi-node tasks take the lowest-id nodes that fit,
// lowest free indices on each.
std::vector<Placement> schedule_tasks(const ResourcePool& pool,
                                      const std::vector<PendingTask>& pending);

// The placement a single task gets on `pool`, if any.
std::optional<Slot> place(const ResourcePool& pool, const ResourceSpec& demand);

// Round-robin from `cursor` over children that could ever fit each task.
// nullopt marks tasks no child can take. `cursor` is advanced.
std::vector<std::optional<std::size_t>> distribute(const std::vector<ResourcePool>& children,
                                                   const std::vector<ResourceSpec>& tasks,
                                                   std::size_t& cursor);

// Contiguous, near-equal partition of `node_ids` into k groups; earlier
// groups get the remainder.
std::vector<std::vector<int>> partition_nodes(const std::vector<int>& node_ids, int k);

class PilotExecutor;

// One scheduling domain of a pilot. Children own disjoint subsets of the
// parent's nodes; the parent keeps scheduling its own tasks on the rest.
class Instance {
 public:
  const std::string& id() const { return id_; }
  const ResourcePool& pool() const { return pool_; }
  // Pool minus nodes granted to children, with live free state.
  const ResourcePool& own() const { return own_; }
  const Instance* parent() const { return parent_; }
  std::vector<const Instance*> children() const;
  std::size_t depth() const;
  std::size_t pending() const { return pending_.size(); }
  std::size_t running() const { return running_.size(); }

  // Throws std::logic_error naming the first broken invariant.
  void check_invariants() const;

 private:
  friend class PilotExecutor;
  Instance(std::string id, ResourcePool pool, Instance* parent);

  std::string id_;
  ResourcePool pool_;
  ResourcePool own_;
  Instance* parent_ = nullptr;
  std::vector<std::unique_ptr<Instance>> children_;
  std::size_t cursor_ = 0;
  std::deque<std::string> pending_;          // task ids, FIFO
  std::map<std::string, Slot> running_;      // task id -> slot
};

struct PilotOptions {
  int cores_per_node = 4;
  int gpus_per_node = 0;
  ProcessGroupRunner::Seconds grace{5.0};
  // How long start_pilot waits for the allocation to become ACTIVE.
  Executor::Duration start_timeout{300.0};
};

// Runs tasks inside an allocation. Registered as "pilot". Plain submit()
// targets the root instance; submit_to() targets any instance. An instance
// with children hands each task on by distribute().
class PilotExecutor final : public ExecutorBase {
 public:
  // Agent over a pool with no allocation behind it.
  PilotExecutor(ResourcePool pool, PilotOptions options = {});
  ~PilotExecutor() override;

  static ExecutorDescriptor describe();

  Job submit(JobSpec spec) override;
  Instance& root() { return *root_; }
  // nullptr for ids not in the tree.
  Instance* find(const std::string& instance_id);
  Job submit_to(Instance& instance, const JobSpec& task);

  // Children over `node_ids` (all idle, ungranted nodes of the parent when
  // empty). Throws InsufficientFreeNodes.
  std::vector<Instance*> spawn_child(Instance& parent, std::vector<int> node_ids, int k);

  // Waits for every task to finish, then releases the allocation.
  void drain(std::optional<Duration> timeout = std::nullopt);

  // Ties the pilot to a running allocation tracked by `exec`: when it
  // ends, queued and running tasks end FAILED("allocation ended"). With
  // `release` the destructor cancels the allocation; otherwise it is left
  // running for a later holder.
  void hold(std::unique_ptr<Executor> exec, const Job& allocation, bool release = true);

  // Allocation job, when the pilot holds one.
  std::optional<Job> allocation() const;
  bool allocation_ended() const;

  std::uint64_t oversubscriptions() const;
  std::uint64_t scheduling_passes() const;
  std::size_t live_tasks() const;

 protected:
  ValidationMode validation_mode() const override { return ValidationMode::task; }
  void do_submit(const Job& job) override;
  void do_cancel(const Job& job) override;
  void do_attach(const Job& job) override;

 private:
  struct Task {
    std::string job_id;
    JobSpec spec;
    Instance* owner = nullptr;
    std::optional<pid_t> group;
    std::vector<std::string> watchers;  // job ids bound to this task, submitter first
    bool ended_by_allocation = false;
    bool done = false;
  };

  void enqueue(Instance& target, const std::string& job_id, const JobSpec& spec);
  void schedule(Instance& inst);
  void launch(Instance& inst, const std::string& job_id, const Slot& slot);
  void finish(const std::string& job_id, JobStatus status);
  void verify(const Instance& inst);
  void end_allocation(const std::string& why);
  Instance* find_instance(Instance& from, const std::string& id);

  void post_all(Task& task, const JobStatus& status);

  PilotOptions options_;
  std::unique_ptr<ProcessGroupRunner> runner_;

  // submit() and submit_to() pass their target to do_submit() here.
  std::mutex submit_mu_;
  Instance* target_ = nullptr;

  mutable std::mutex mu_;
  std::unique_ptr<Instance> root_;
  std::map<std::string, Task> tasks_;               // job id -> task
  std::map<std::string, std::string> by_native_;    // native id -> job id
  std::uint64_t next_task_ = 0;
  std::uint64_t oversubscriptions_ = 0;
  std::uint64_t passes_ = 0;
  std::size_t live_ = 0;
  std::condition_variable idle_cv_;
  bool ended_ = false;

  std::unique_ptr<Executor> alloc_exec_;
  std::optional<Job> alloc_job_;
  std::uint64_t alloc_callback_ = 0;
  bool release_ = true;
};

// Submits `allocation` through backend `via`, waits for it to become
// ACTIVE and returns an agent over node_count x cores_per_node (a single
// node via "local"). Throws SubmitFailed when the allocation is rejected
// and AgentStartFailed when it ends or times out before running.
std::unique_ptr<PilotExecutor> start_pilot(const JobSpec& allocation, const std::string& via,
                                           const ExecutorConfig& via_config,
                                           const ExecutorRegistry& registry,
                                           PilotOptions options = {});

}  // namespace portjob
