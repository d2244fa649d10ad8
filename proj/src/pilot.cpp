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

#include "portjob/pilot.hpp"

#include <algorithm>
#include <stdexcept>

#include "portjob/error.hpp"
#include "portjob/process.hpp"

namespace portjob {

// ---------------------------------------------------------------------------
// ResourcePool

ResourcePool::ResourcePool(std::vector<NodeInventory> nodes) : nodes_(std::move(nodes)) {
  std::sort(nodes_.begin(), nodes_.end(),
            [](const NodeInventory& a, const NodeInventory& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (i && nodes_[i].id == nodes_[i - 1].id) {
      throw Error("duplicate node id " + std::to_string(nodes_[i].id));
    }
    if (nodes_[i].cores < 0 || nodes_[i].gpus < 0) throw Error("negative node capacity");
    core_busy_.emplace_back(static_cast<std::size_t>(nodes_[i].cores), false);
    gpu_busy_.emplace_back(static_cast<std::size_t>(nodes_[i].gpus), false);
  }
}

ResourcePool ResourcePool::uniform(int node_count, int cores, int gpus, int first_id) {
  std::vector<NodeInventory> nodes;
  for (int i = 0; i < node_count; ++i) nodes.push_back({first_id + i, cores, gpus});
  return ResourcePool(std::move(nodes));
}

std::size_t ResourcePool::index_of(int node) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), node,
                             [](const NodeInventory& n, int id) { return n.id < id; });
  if (it == nodes_.end() || it->id != node) throw Error("node " + std::to_string(node) + " not in pool");
  return static_cast<std::size_t>(it - nodes_.begin());
}

std::set<int> ResourcePool::node_ids() const {
  std::set<int> out;
  for (const auto& n : nodes_) out.insert(n.id);
  return out;
}

bool ResourcePool::has_node(int id) const {
  return std::binary_search(nodes_.begin(), nodes_.end(), NodeInventory{id, 0, 0},
                            [](const NodeInventory& a, const NodeInventory& b) { return a.id < b.id; });
}

const NodeInventory& ResourcePool::node(int id) const { return nodes_[index_of(id)]; }

int ResourcePool::free_cores(int node) const {
  const auto& v = core_busy_[index_of(node)];
  return static_cast<int>(std::count(v.begin(), v.end(), false));
}

int ResourcePool::free_gpus(int node) const {
  const auto& v = gpu_busy_[index_of(node)];
  return static_cast<int>(std::count(v.begin(), v.end(), false));
}

bool ResourcePool::core_free(int node, int core) const {
  const auto& v = core_busy_[index_of(node)];
  return core >= 0 && static_cast<std::size_t>(core) < v.size() && !v[static_cast<std::size_t>(core)];
}

bool ResourcePool::gpu_free(int node, int gpu) const {
  const auto& v = gpu_busy_[index_of(node)];
  return gpu >= 0 && static_cast<std::size_t>(gpu) < v.size() && !v[static_cast<std::size_t>(gpu)];
}

bool ResourcePool::node_idle(int node) const {
  const auto i = index_of(node);
  return std::none_of(core_busy_[i].begin(), core_busy_[i].end(), [](bool b) { return b; }) &&
         std::none_of(gpu_busy_[i].begin(), gpu_busy_[i].end(), [](bool b) { return b; });
}

bool ResourcePool::can_ever_fit(const ResourceSpec& demand) const {
  const auto cores = demand.processes_per_node * demand.cpu_cores_per_process;
  const auto gpus = demand.processes_per_node * demand.gpu_cores_per_process;
  std::int64_t fitting = 0;
  for (const auto& n : nodes_) {
    if (n.cores >= cores && n.gpus >= gpus) ++fitting;
  }
  return fitting >= demand.node_count;
}

bool ResourcePool::take(const Slot& slot) {
  for (const auto& share : slot.nodes) {
    if (!has_node(share.node)) return false;
    for (int c : share.cores) {
      if (!core_free(share.node, c)) return false;
    }
    for (int g : share.gpus) {
      if (!gpu_free(share.node, g)) return false;
    }
  }
  for (const auto& share : slot.nodes) {
    const auto i = index_of(share.node);
    for (int c : share.cores) core_busy_[i][static_cast<std::size_t>(c)] = true;
    for (int g : share.gpus) gpu_busy_[i][static_cast<std::size_t>(g)] = true;
  }
  return true;
}

bool ResourcePool::give_back(const Slot& slot) {
  for (const auto& share : slot.nodes) {
    if (!has_node(share.node)) return false;
    const auto i = index_of(share.node);
    for (int c : share.cores) {
      if (c < 0 || static_cast<std::size_t>(c) >= core_busy_[i].size() ||
          !core_busy_[i][static_cast<std::size_t>(c)]) {
        return false;
      }
    }
    for (int g : share.gpus) {
      if (g < 0 || static_cast<std::size_t>(g) >= gpu_busy_[i].size() ||
          !gpu_busy_[i][static_cast<std::size_t>(g)]) {
        return false;
      }
    }
  }
  for (const auto& share : slot.nodes) {
    const auto i = index_of(share.node);
    for (int c : share.cores) core_busy_[i][static_cast<std::size_t>(c)] = false;
    for (int g : share.gpus) gpu_busy_[i][static_cast<std::size_t>(g)] = false;
  }
  return true;
}

ResourcePool ResourcePool::subset(const std::vector<int>& node_ids) const {
  std::vector<NodeInventory> nodes;
  for (int id : node_ids) nodes.push_back(node(id));
  return ResourcePool(std::move(nodes));
}

ResourcePool ResourcePool::without(const std::set<int>& node_ids) const {
  ResourcePool out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (node_ids.count(nodes_[i].id)) continue;
    out.nodes_.push_back(nodes_[i]);
    out.core_busy_.push_back(core_busy_[i]);
    out.gpu_busy_.push_back(gpu_busy_[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Placement

std::optional<Slot> place(const ResourcePool& pool, const ResourceSpec& demand) {
  const int ppn = static_cast<int>(demand.processes_per_node);
  const int cpp = static_cast<int>(demand.cpu_cores_per_process);
  const int gpp = static_cast<int>(demand.gpu_cores_per_process);
  const int need_cores = ppn * cpp;
  const int need_gpus = ppn * gpp;

  std::vector<int> chosen;
  for (const auto& n : pool.nodes()) {
    if (static_cast<std::int64_t>(chosen.size()) == demand.node_count) break;
    if (n.cores < need_cores || n.gpus < need_gpus) continue;
    if (demand.exclusive ? pool.node_idle(n.id)
                         : pool.free_cores(n.id) >= need_cores && pool.free_gpus(n.id) >= need_gpus) {
      chosen.push_back(n.id);
    }
  }
  if (static_cast<std::int64_t>(chosen.size()) < demand.node_count) return std::nullopt;

  Slot slot;
  for (int id : chosen) {
    const auto& inv = pool.node(id);
    NodeShare share{id, {}, {}};
    const int take_cores = demand.exclusive ? inv.cores : need_cores;
    const int take_gpus = demand.exclusive ? inv.gpus : need_gpus;
    for (int c = 0; c < inv.cores && static_cast<int>(share.cores.size()) < take_cores; ++c) {
      if (pool.core_free(id, c)) share.cores.push_back(c);
    }
    for (int g = 0; g < inv.gpus && static_cast<int>(share.gpus.size()) < take_gpus; ++g) {
      if (pool.gpu_free(id, g)) share.gpus.push_back(g);
    }
    for (int p = 0; p < ppn; ++p) {
      NodeShare proc{id, {}, {}};
      proc.cores.assign(share.cores.begin() + p * cpp, share.cores.begin() + (p + 1) * cpp);
      proc.gpus.assign(share.gpus.begin() + p * gpp, share.gpus.begin() + (p + 1) * gpp);
      slot.processes.push_back(std::move(proc));
    }
    slot.nodes.push_back(std::move(share));
  }
  return slot;
}

std::vector<Placement> schedule_tasks(const ResourcePool& pool,
                                      const std::vector<PendingTask>& pending) {
  ResourcePool free = pool;
  std::vector<Placement> out;
  for (const auto& task : pending) {
    auto slot = place(free, task.demand);
    if (!slot) continue;
    free.take(*slot);
    out.push_back({task.id, std::move(*slot)});
  }
  return out;
}

std::vector<std::optional<std::size_t>> distribute(const std::vector<ResourcePool>& children,
                                                   const std::vector<ResourceSpec>& tasks,
                                                   std::size_t& cursor) {
  std::vector<std::optional<std::size_t>> out;
  const std::size_t n = children.size();
  for (const auto& task : tasks) {
    std::optional<std::size_t> pick;
    for (std::size_t step = 0; step < n && !pick; ++step) {
      const std::size_t c = (cursor + step) % n;
      if (children[c].can_ever_fit(task)) pick = c;
    }
    if (pick) cursor = (*pick + 1) % n;
    out.push_back(pick);
  }
  return out;
}

std::vector<std::vector<int>> partition_nodes(const std::vector<int>& node_ids, int k) {
  if (k <= 0) throw InsufficientFreeNodes("child count must be at least 1");
  const auto n = static_cast<int>(node_ids.size());
  if (n < k) {
    throw InsufficientFreeNodes("cannot split " + std::to_string(n) + " nodes into " +
                                std::to_string(k) + " children");
  }
  std::vector<std::vector<int>> out;
  auto it = node_ids.begin();
  for (int i = 0; i < k; ++i) {
    const int size = n / k + (i < n % k ? 1 : 0);
    out.emplace_back(it, it + size);
    it += size;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Instance

Instance::Instance(std::string id, ResourcePool pool, Instance* parent)
    : id_(std::move(id)), pool_(pool), own_(std::move(pool)), parent_(parent) {}

std::vector<const Instance*> Instance::children() const {
  std::vector<const Instance*> out;
  for (const auto& c : children_) out.push_back(c.get());
  return out;
}

std::size_t Instance::depth() const {
  std::size_t d = 0;
  for (const Instance* p = parent_; p; p = p->parent_) ++d;
  return d;
}

void Instance::check_invariants() const {
  const auto mine = pool_.node_ids();
  std::set<int> granted;
  for (const auto& child : children_) {
    for (int id : child->pool_.node_ids()) {
      if (!mine.count(id)) {
        throw std::logic_error(child->id_ + " holds node " + std::to_string(id) + " outside " + id_);
      }
      if (!granted.insert(id).second) {
        throw std::logic_error("node " + std::to_string(id) + " granted twice by " + id_);
      }
    }
    for (const auto& inv : child->pool_.nodes()) {
      if (!(inv == pool_.node(inv.id))) throw std::logic_error(child->id_ + " capacity mismatch");
    }
  }
  for (int id : own_.node_ids()) {
    if (granted.count(id)) {
      throw std::logic_error(id_ + " schedules on node " + std::to_string(id) + " granted to a child");
    }
  }
  for (const auto& [task, slot] : running_) {
    for (const auto& share : slot.nodes) {
      if (!own_.has_node(share.node)) {
        throw std::logic_error("task " + task + " runs outside the own pool of " + id_);
      }
    }
  }
  for (const auto& child : children_) {
    if (child->parent_ != this) throw std::logic_error(child->id_ + " has the wrong parent");
    child->check_invariants();
  }
}

// ---------------------------------------------------------------------------
// PilotExecutor

ExecutorDescriptor PilotExecutor::describe() {
  return {"pilot", "1.0", {Capability::attach, Capability::cancel, Capability::nested}};
}

PilotExecutor::PilotExecutor(ResourcePool pool, PilotOptions options)
    : ExecutorBase(describe()),
      options_(options),
      runner_(std::make_unique<ProcessGroupRunner>(options.grace)),
      root_(new Instance("0", std::move(pool), nullptr)) {}

PilotExecutor::~PilotExecutor() {
  if (alloc_exec_) {
    try {
      if (release_ && alloc_job_ && !alloc_exec_->snapshot(alloc_job_->id).terminal()) {
        alloc_exec_->cancel(*alloc_job_);
      }
    } catch (const Error&) {
    }
    alloc_exec_.reset();
  }
  runner_.reset();
  stop_delivery();
}

std::optional<Job> PilotExecutor::allocation() const {
  std::lock_guard lk(mu_);
  if (!alloc_exec_ || !alloc_job_) return std::nullopt;
  return alloc_exec_->snapshot(alloc_job_->id);
}

bool PilotExecutor::allocation_ended() const {
  std::lock_guard lk(mu_);
  return ended_;
}

std::uint64_t PilotExecutor::oversubscriptions() const {
  std::lock_guard lk(mu_);
  return oversubscriptions_;
}

std::uint64_t PilotExecutor::scheduling_passes() const {
  std::lock_guard lk(mu_);
  return passes_;
}

std::size_t PilotExecutor::live_tasks() const {
  std::lock_guard lk(mu_);
  return live_;
}

Job PilotExecutor::submit(JobSpec spec) {
  std::lock_guard lk(submit_mu_);
  target_ = root_.get();
  return ExecutorBase::submit(std::move(spec));
}

Job PilotExecutor::submit_to(Instance& instance, const JobSpec& task) {
  std::lock_guard lk(submit_mu_);
  target_ = &instance;
  return ExecutorBase::submit(task);
}

void PilotExecutor::post_all(Task& task, const JobStatus& status) {
  for (const auto& id : task.watchers) post(id, status);
}

void PilotExecutor::do_submit(const Job& job) {
  if (job.spec.launcher == Launcher::mpi_like) {
    post(job.id, JobStatus::make(JobState::FAILED, std::nullopt,
                                 "launcher 'mpi_like' is not available to pilot tasks"));
    return;
  }
  std::lock_guard lk(mu_);
  const std::string native = "task-" + std::to_string(next_task_++);
  set_native_id(job.id, native);
  by_native_[native] = job.id;
  Task task;
  task.job_id = job.id;
  task.spec = job.spec;
  task.watchers = {job.id};
  tasks_.emplace(job.id, std::move(task));
  ++live_;
  enqueue(target_ ? *target_ : *root_, job.id, job.spec);
}

void PilotExecutor::enqueue(Instance& target, const std::string& job_id, const JobSpec& spec) {
  auto& task = tasks_.at(job_id);
  const auto fail = [&](const std::string& msg) {
    post_all(task, JobStatus::make(JobState::FAILED, std::nullopt, msg));
    task.done = true;
    --live_;
    idle_cv_.notify_all();
  };
  if (ended_) return fail("allocation ended");
  if (!target.children_.empty()) {
    std::vector<ResourcePool> pools;
    for (const auto& c : target.children_) pools.push_back(c->pool_);
    auto pick = distribute(pools, {spec.resources}, target.cursor_).front();
    if (!pick) return fail("no child instance of " + target.id_ + " can fit the task");
    return enqueue(*target.children_[*pick], job_id, spec);
  }
  if (!target.own_.can_ever_fit(spec.resources)) {
    return fail(OversizedTask("task demand exceeds the pool of instance " + target.id_).what());
  }
  task.owner = &target;
  post_all(task, JobStatus::make(JobState::QUEUED));
  target.pending_.push_back(job_id);
  schedule(target);
}

void PilotExecutor::schedule(Instance& inst) {
  if (inst.pending_.empty()) return;
  ++passes_;
  std::vector<PendingTask> pending;
  pending.reserve(inst.pending_.size());
  for (const auto& id : inst.pending_) pending.push_back({id, tasks_.at(id).spec.resources});
  auto placements = schedule_tasks(inst.own_, pending);
  if (placements.empty()) return;
  std::set<std::string> placed;
  for (auto& p : placements) {
    if (!inst.own_.take(p.slot)) {
      ++oversubscriptions_;
      continue;
    }
    inst.running_[p.task_id] = p.slot;
    placed.insert(p.task_id);
  }
  std::erase_if(inst.pending_, [&](const std::string& id) { return placed.count(id) > 0; });
  verify(inst);
  for (const auto& p : placements) {
    if (placed.count(p.task_id)) launch(inst, p.task_id, p.slot);
  }
}

void PilotExecutor::verify(const Instance& inst) {
  // Recount live slots from scratch against the inventory.
  std::map<int, std::set<int>> cores, gpus;
  for (const auto& [_, slot] : inst.running_) {
    for (const auto& share : slot.nodes) {
      if (!inst.own_.has_node(share.node)) {
        ++oversubscriptions_;
        continue;
      }
      const auto& inv = inst.own_.node(share.node);
      for (int c : share.cores) {
        if (c < 0 || c >= inv.cores || !cores[share.node].insert(c).second) ++oversubscriptions_;
      }
      for (int g : share.gpus) {
        if (g < 0 || g >= inv.gpus || !gpus[share.node].insert(g).second) ++oversubscriptions_;
      }
    }
  }
  for (const auto& inv : inst.own_.nodes()) {
    const int used = static_cast<int>(cores[inv.id].size());
    if (used + inst.own_.free_cores(inv.id) != inv.cores) ++oversubscriptions_;
  }
}

namespace {

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

void PilotExecutor::launch(Instance& inst, const std::string& job_id, const Slot& slot) {
  auto& task = tasks_.at(job_id);
  JobSpec spec = task.spec;
  LaunchPlan plan;
  try {
    plan = render_launch(spec, {});
  } catch (const Error& e) {
    inst.own_.give_back(slot);
    inst.running_.erase(job_id);
    post_all(task, JobStatus::make(JobState::FAILED, std::nullopt, e.what()));
    task.done = true;
    --live_;
    idle_cv_.notify_all();
    return;
  }
  for (std::size_t i = 0; i < plan.processes.size() && i < slot.processes.size(); ++i) {
    const auto& proc = slot.processes[i];
    auto& env = plan.processes[i].environment;
    env["PORTJOB_NODE"] = std::to_string(proc.node);
    env["PORTJOB_CORES"] = join(proc.cores);
    env["PORTJOB_GPUS"] = join(proc.gpus);
  }
  try {
    task.group = runner_->launch(spec, plan, minimal_base_environment(),
                                 [this, job_id](const JobStatus& st) { finish(job_id, st); });
  } catch (const SubmitFailed& e) {
    inst.own_.give_back(slot);
    inst.running_.erase(job_id);
    post_all(task, JobStatus::make(JobState::FAILED, std::nullopt, e.what()));
    task.done = true;
    --live_;
    idle_cv_.notify_all();
    return;
  }
  post_all(task, JobStatus::make(JobState::ACTIVE));
}

void PilotExecutor::finish(const std::string& job_id, JobStatus status) {
  std::lock_guard lk(mu_);
  auto it = tasks_.find(job_id);
  if (it == tasks_.end() || it->second.done) return;
  auto& task = it->second;
  if (task.ended_by_allocation && status.state != JobState::COMPLETED) {
    status = JobStatus::make(JobState::FAILED, std::nullopt, "allocation ended");
  }
  post_all(task, status);
  task.done = true;
  task.group.reset();
  --live_;
  idle_cv_.notify_all();
  if (Instance* inst = task.owner) {
    auto slot = inst->running_.find(job_id);
    if (slot != inst->running_.end()) {
      if (!inst->own_.give_back(slot->second)) ++oversubscriptions_;
      inst->running_.erase(slot);
    }
    if (!ended_) schedule(*inst);
  }
}

void PilotExecutor::do_cancel(const Job& job) {
  std::lock_guard lk(mu_);
  auto nat = by_native_.find(job.native_id.value_or(""));
  if (nat == by_native_.end()) throw UnknownJob("unknown task " + job.id);
  auto& task = tasks_.at(nat->second);
  if (task.done) return;
  if (task.group) {
    runner_->cancel(*task.group);
    return;
  }
  if (Instance* inst = task.owner) {
    std::erase(inst->pending_, task.job_id);
  }
  post_all(task, JobStatus::make(JobState::CANCELED, std::nullopt, "canceled"));
  task.done = true;
  --live_;
  idle_cv_.notify_all();
}

void PilotExecutor::do_attach(const Job& job) {
  std::lock_guard lk(mu_);
  auto nat = by_native_.find(*job.native_id);
  if (nat == by_native_.end()) throw UnknownNativeId("no pilot task " + *job.native_id);
  auto& task = tasks_.at(nat->second);
  const auto original = snapshot(task.job_id);
  for (const auto& st : original.status_history) {
    if (st.state != JobState::NEW) post(job.id, st);
  }
  task.watchers.push_back(job.id);
}

std::vector<Instance*> PilotExecutor::spawn_child(Instance& parent, std::vector<int> node_ids,
                                                  int k) {
  std::lock_guard lk(mu_);
  if (node_ids.empty()) {
    for (const auto& n : parent.own_.nodes()) {
      if (parent.own_.node_idle(n.id)) node_ids.push_back(n.id);
    }
  }
  std::sort(node_ids.begin(), node_ids.end());
  if (std::adjacent_find(node_ids.begin(), node_ids.end()) != node_ids.end()) {
    throw InsufficientFreeNodes("node list repeats a node");
  }
  for (int id : node_ids) {
    if (!parent.own_.has_node(id)) {
      throw InsufficientFreeNodes("node " + std::to_string(id) + " is not available in instance " +
                                  parent.id_);
    }
    if (!parent.own_.node_idle(id)) {
      throw InsufficientFreeNodes("node " + std::to_string(id) + " has live tasks in instance " +
                                  parent.id_);
    }
  }
  auto groups = partition_nodes(node_ids, k);

  std::vector<Instance*> out;
  for (const auto& group : groups) {
    const std::string id = parent.id_ + "." + std::to_string(parent.children_.size());
    parent.children_.emplace_back(new Instance(id, parent.pool_.subset(group), &parent));
    out.push_back(parent.children_.back().get());
  }
  parent.own_ = parent.own_.without({node_ids.begin(), node_ids.end()});

  // Queued tasks that only fit on the granted nodes can never run here now.
  std::vector<std::string> stranded;
  for (const auto& id : parent.pending_) {
    if (!parent.own_.can_ever_fit(tasks_.at(id).spec.resources)) stranded.push_back(id);
  }
  for (const auto& id : stranded) {
    std::erase(parent.pending_, id);
    auto& task = tasks_.at(id);
    post_all(task, JobStatus::make(JobState::FAILED, std::nullopt,
                                   "instance " + parent.id_ + " no longer fits the task"));
    task.done = true;
    --live_;
  }
  idle_cv_.notify_all();
  return out;
}

Instance* PilotExecutor::find(const std::string& instance_id) {
  std::lock_guard lk(mu_);
  return find_instance(*root_, instance_id);
}

Instance* PilotExecutor::find_instance(Instance& from, const std::string& id) {
  if (from.id_ == id) return &from;
  for (auto& c : from.children_) {
    if (auto* hit = find_instance(*c, id)) return hit;
  }
  return nullptr;
}

void PilotExecutor::end_allocation(const std::string& why) {
  std::lock_guard lk(mu_);
  if (ended_) return;
  ended_ = true;
  for (auto& [id, task] : tasks_) {
    if (task.done) continue;
    if (task.group) {
      task.ended_by_allocation = true;
      continue;
    }
    if (task.owner) std::erase(task.owner->pending_, id);
    post_all(task, JobStatus::make(JobState::FAILED, std::nullopt, why));
    task.done = true;
    --live_;
  }
  idle_cv_.notify_all();
  runner_->kill_all();
}

void PilotExecutor::drain(std::optional<Duration> timeout) {
  {
    std::unique_lock lk(mu_);
    const auto done = [&] { return live_ == 0; };
    if (timeout) {
      if (!idle_cv_.wait_for(lk, *timeout, done)) throw Timeout("pilot tasks still running");
    } else {
      idle_cv_.wait(lk, done);
    }
  }
  if (alloc_exec_ && alloc_job_) {
    alloc_exec_->cancel(*alloc_job_);
    alloc_exec_->wait(*alloc_job_, {}, options_.start_timeout);
  }
  end_allocation("allocation ended");
}

void PilotExecutor::hold(std::unique_ptr<Executor> exec, const Job& allocation, bool release) {
  const std::string alloc_id = allocation.id;
  {
    std::lock_guard lk(mu_);
    if (alloc_exec_) throw Error("pilot already holds an allocation");
    alloc_job_ = allocation;
    release_ = release;
  }
  alloc_callback_ = exec->add_callback([this, alloc_id](const std::string& id, const JobStatus& s) {
    if (id == alloc_id && is_terminal(s.state)) end_allocation("allocation ended");
  });
  const bool over = exec->snapshot(alloc_id).terminal();
  {
    std::lock_guard lk(mu_);
    alloc_exec_ = std::move(exec);
  }
  if (over) end_allocation("allocation ended");
}

std::unique_ptr<PilotExecutor> start_pilot(const JobSpec& allocation, const std::string& via,
                                           const ExecutorConfig& via_config,
                                           const ExecutorRegistry& registry,
                                           PilotOptions options) {
  auto exec = registry.create(via, via_config);
  auto job = exec->submit(allocation);
  if (job.states() == std::vector<JobState>{JobState::NEW, JobState::FAILED}) {
    throw SubmitFailed("allocation rejected: " + job.status().message.value_or("no reason given"));
  }
  JobStatus st;
  try {
    st = exec->wait(job, {JobState::ACTIVE}, options.start_timeout);
  } catch (const Timeout&) {
    exec->cancel(job);
    throw AgentStartFailed("allocation did not start in time");
  }
  if (st.state != JobState::ACTIVE) {
    throw AgentStartFailed("allocation ended " + std::string(to_string(st.state)) +
                           " before running" + (st.message ? ": " + *st.message : ""));
  }

  const bool local = exec->descriptor().name == "local";
  const int nodes = local ? 1 : static_cast<int>(allocation.resources.node_count);
  auto pilot = std::make_unique<PilotExecutor>(
      ResourcePool::uniform(nodes, options.cores_per_node, options.gpus_per_node), options);
  pilot->hold(std::move(exec), job);
  return pilot;
}

}  // namespace portjob
