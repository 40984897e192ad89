/*
 * Copyright 2025 Stanford University, NVIDIA Corporation
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "taskdual/duality.h"

#include <cstring>

namespace taskdual {

  ActorOnTasks::ActorOnTasks(TaskRuntime &rt, TaskId first_task_id)
    : rt_(rt)
    , next_tid_(first_task_id)
  {}

  ActorOnTasks::~ActorOnTasks()
  {
    if(!ActorRuntime::in_handler()) {
      std::unique_lock lock(pending_mutex_);
      pending_cv_.wait_for(lock, std::chrono::minutes(10), [this] { return pending_ == 0; });
    }
  }

  void ActorOnTasks::register_actor(std::shared_ptr<Actor> actor, ActorId aid,
                                    ProcessorId target)
  {
    if(!actor)
      throw ValidationError("register_actor: null actor");
    if(!rt_.machine().valid(target))
      throw ValidationError("register_actor: invalid processor " +
                            std::to_string(target.value()));
    std::vector<MessageId> mids = actor->handled_messages();
    if(mids.empty())
      throw ValidationError("actor " + std::to_string(aid) +
                            " declares no handled messages and cannot be bound to tasks");

    ActorOnTasksBinding b;
    b.proc = target;
    Actor *raw = actor.get();
    auto [ready, state] = rt_.alloc(rt_.machine().local_memory(target), sizeof(Actor *));
    rt_.wait(ready);
    std::memcpy(rt_.machine().bytes(state).data(), &raw, sizeof(raw));
    b.state = state;

    std::unique_lock lock(bind_mutex_);
    if(bindings_.count(aid))
      throw ValidationError("actor " + std::to_string(aid) + " is already registered");
    for(MessageId mid : mids) {
      while(rt_.find_task(next_tid_) != nullptr)
        next_tid_++;
      TaskId tid = next_tid_++;
      rt_.register_task(tid, [this, state, mid](TaskContext &ctx, ByteView args) {
        Actor *self = nullptr;
        std::memcpy(&self, ctx.bytes(state).data(), sizeof(self));
        self->handle_message(mid, *this, args);
      });
      b.tasks.emplace(mid, tid);
    }
    bindings_.emplace(aid, std::move(b));
    keep_alive_.push_back(std::move(actor));
  }

  void ActorOnTasks::send_message(ActorId aid, MessageId mid, ByteView args)
  {
    ProcessorId proc;
    TaskId tid = -1;
    {
      std::shared_lock lock(bind_mutex_);
      auto it = bindings_.find(aid);
      if(it == bindings_.end())
        throw ValidationError("send_message: actor " + std::to_string(aid) + " is not bound");
      auto t = it->second.tasks.find(mid);
      if(t == it->second.tasks.end())
        throw ValidationError("send_message: actor " + std::to_string(aid) +
                              " has no task for message " + std::to_string(mid));
      proc = it->second.proc;
      tid = t->second;
    }
    sends_.fetch_add(1);
    {
      std::lock_guard lock(pending_mutex_);
      pending_++;
    }
    {
      std::int64_t sender = HOST_SENDER;
      if(ExecutionContext *ctx = ExecutionContext::current())
        sender = ctx->id();
      std::lock_guard lock(stats_mutex_);
      stats_.total++;
      stats_.per_pair[{sender, aid}]++;
    }
    Event ev = rt_.launch(proc, tid, args, {});
    launches_.fetch_add(1);
    if(!rt_.subscribe(ev, [this](bool poisoned) { finished(poisoned); }))
      finished(rt_.is_poisoned(ev));
  }

  void ActorOnTasks::finished(bool poisoned)
  {
    if(poisoned)
      failed_.fetch_add(1);
    std::lock_guard lock(pending_mutex_);
    if(--pending_ == 0)
      pending_cv_.notify_all();
  }

  MessageStats ActorOnTasks::run_until_quiescent(Nanos timeout)
  {
    if(ActorRuntime::in_handler())
      throw ContractViolation("run_until_quiescent called from a handler");
    std::unique_lock lock(pending_mutex_);
    if(!pending_cv_.wait_for(lock, timeout, [this] { return pending_ == 0; }))
      throw TimeoutError("lifted actor program did not quiesce");
    lock.unlock();
    std::lock_guard slock(stats_mutex_);
    MessageStats out = stats_;
    out.errors = failed_.load();
    return out;
  }

  const ActorOnTasksBinding &ActorOnTasks::binding(ActorId aid) const
  {
    std::shared_lock lock(bind_mutex_);
    auto it = bindings_.find(aid);
    if(it == bindings_.end())
      throw ValidationError("actor " + std::to_string(aid) + " is not bound");
    return it->second;
  }

  std::unique_ptr<ActorOnTasks> lift_actors_onto_tasks(TaskRuntime &rt,
                                                       std::vector<ActorPlacement> program)
  {
    auto facade = std::make_unique<ActorOnTasks>(rt);
    for(ActorPlacement &p : program)
      facade->register_actor(std::move(p.actor), p.aid, p.proc);
    return facade;
  }

  std::unique_ptr<TaskRuntime> tasks_on_actors(Machine &machine, ActorRuntime &actors)
  {
    return std::make_unique<TaskRuntime>(machine, actors);
  }

} // namespace taskdual
