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

// Adapters between the two execution models: actors lifted onto tasks, and
// the task runtime built from actors.

#ifndef TASKDUAL_DUALITY_H
#define TASKDUAL_DUALITY_H

#include "taskdual/task_rt.h"

#include <condition_variable>
#include <map>

namespace taskdual {

  struct ActorPlacement {
    std::shared_ptr<Actor> actor;
    ActorId aid = 0;
    ProcessorId proc;
  };

  struct ActorOnTasksBinding {
    // Holds the actor's state handle; lives in the processor's local memory.
    Allocation state;
    ProcessorId proc;
    std::map<MessageId, TaskId> tasks;
  };

  // An actor runtime whose send_message is a task launch with no
  // preconditions. Handlers of one actor run on its processor's worker, so
  // they stay serialized.
  class ActorOnTasks final : public ActorRT {
  public:
    explicit ActorOnTasks(TaskRuntime &rt, TaskId first_task_id = 1 << 20);
    ~ActorOnTasks() override;

    ActorOnTasks(const ActorOnTasks &) = delete;
    ActorOnTasks &operator=(const ActorOnTasks &) = delete;

    // Binds the actor: allocates its state cell and registers one task per
    // handled message. Must happen before the first message to aid.
    void register_actor(std::shared_ptr<Actor> actor, ActorId aid, ProcessorId target) override;
    void send_message(ActorId aid, MessageId mid, ByteView args) override;
    MessageStats run_until_quiescent(Nanos timeout = std::chrono::seconds(60)) override;

    const ActorOnTasksBinding &binding(ActorId aid) const;
    std::uint64_t sends() const { return sends_.load(); }
    std::uint64_t launches() const { return launches_.load(); }
    std::uint64_t failed_handlers() const { return failed_.load(); }
    TaskRuntime &tasks() { return rt_; }

  private:
    void finished(bool poisoned);

    TaskRuntime &rt_;
    TaskId next_tid_;

    mutable std::shared_mutex bind_mutex_;
    std::map<ActorId, ActorOnTasksBinding> bindings_;
    std::vector<std::shared_ptr<Actor>> keep_alive_;

    std::atomic<std::uint64_t> sends_{0}, launches_{0}, failed_{0};
    std::mutex pending_mutex_;
    std::condition_variable pending_cv_;
    std::uint64_t pending_ = 0;

    std::mutex stats_mutex_;
    MessageStats stats_;
  };

  std::unique_ptr<ActorOnTasks> lift_actors_onto_tasks(TaskRuntime &rt,
                                                       std::vector<ActorPlacement> program);

  // The task runtime as a scheduler actor plus one worker actor per
  // processor and copy channel, all hosted by the given actor runtime.
  std::unique_ptr<TaskRuntime> tasks_on_actors(Machine &machine, ActorRuntime &actors);

} // namespace taskdual

#endif
