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

// Explicitly-parallel task runtime. Every operation returns an Event and is
// predicated on a set of Events. The runtime itself is a set of actors: one
// Scheduler that tracks pending operations and event dependencies, and one
// Worker per processor (plus one per copy channel) that executes ready work.

#ifndef TASKDUAL_TASK_RT_H
#define TASKDUAL_TASK_RT_H

#include "taskdual/actor_rt.h"
#include "taskdual/event.h"

#include <unordered_map>

namespace taskdual {

  class TaskRuntime;

  // Handed to every task body. Device work enqueued here is tracked so the
  // runtime can decide when the task counts as complete.
  class TaskContext {
  public:
    TaskContext(TaskRuntime &rt, ProcessorId proc, std::optional<DeviceStream> stream);

    TaskRuntime &runtime() { return rt_; }
    Machine &machine();
    ProcessorId processor() const { return proc_; }

    std::span<std::byte> bytes(const Allocation &a);
    std::span<const std::byte> bytes(const Allocation &a) const;

    const std::optional<DeviceStream> &stream() const { return stream_; }
    DeviceEvent enqueue_device(DeviceKernel kernel, std::span<const DeviceEvent> waits = {});
    const std::vector<DeviceEvent> &device_events() const { return issued_; }

  private:
    TaskRuntime &rt_;
    ProcessorId proc_;
    std::optional<DeviceStream> stream_;
    std::vector<DeviceEvent> issued_;
  };

  using TaskFn = std::function<void(TaskContext &, ByteView args)>;

  struct RegisteredTask {
    TaskFn body;
    // Simulated device work enqueued after the body returns.
    std::optional<Nanos> device_work;
  };

  struct OpRecord {
    Event event;
    enum class Kind : std::uint8_t { TASK, COPY, ALLOC } kind;
    TaskId tid = -1;
    std::uint32_t context = 0;
    TimePoint start;
    TimePoint end;
  };

  class TaskRuntime {
  public:
    TaskRuntime(Machine &machine, ActorRuntime &actors);
    ~TaskRuntime();

    TaskRuntime(const TaskRuntime &) = delete;
    TaskRuntime &operator=(const TaskRuntime &) = delete;

    void register_task(TaskId tid, TaskFn body, std::optional<Nanos> device_work = std::nullopt);
    const RegisteredTask *find_task(TaskId tid) const;

    Event launch(ProcessorId p, TaskId tid, ByteView args, std::span<const Event> pre = {});
    // Overrides the registered device work for this launch.
    Event launch(ProcessorId p, TaskId tid, ByteView args, std::span<const Event> pre,
                 std::optional<Nanos> device_work);
    std::pair<Event, Allocation> alloc(MemoryId m, std::size_t size,
                                       std::span<const Event> pre = {});
    Event copy(const Allocation &src, const Allocation &dst, std::span<const Event> pre = {});
    Event merge_events(std::span<const Event> pre);
    Event merge_events(std::initializer_list<Event> pre)
    {
      return merge_events(std::span<const Event>(pre.begin(), pre.size()));
    }

    // Host threads only.
    void wait(Event e, Nanos timeout = std::chrono::seconds(60));

    Event create_user_event() { return events_.create(); }
    void trigger(Event e, bool poisoned = false) { events_.trigger(e, poisoned); }
    bool has_triggered(Event e) const { return events_.has_triggered(e); }
    bool is_poisoned(Event e) const { return events_.is_poisoned(e); }
    bool subscribe(Event e, EventTable::Waiter w) { return events_.subscribe(e, std::move(w)); }

    Machine &machine() { return machine_; }
    ActorRuntime &actors() { return actors_; }
    ActorId scheduler_id() const { return scheduler_id_; }

    std::uint64_t launches() const { return launches_.load(); }
    std::uint64_t executed() const { return executed_.load(); }

    void set_op_logging(bool on);
    std::vector<OpRecord> op_log() const;
    void record_op(const OpRecord &rec);

  private:
    class Scheduler;
    class Worker;
    friend class Scheduler;
    friend class Worker;

    Event submit(std::uint8_t kind, std::uint32_t target, TaskId tid, ByteView args,
                 std::span<const Event> pre, std::int64_t device_ns, const Allocation &src,
                 const Allocation &dst);

    Machine &machine_;
    ActorRuntime &actors_;
    EventTable events_;

    mutable std::shared_mutex tasks_mutex_;
    std::unordered_map<TaskId, RegisteredTask> tasks_;

    ActorId scheduler_id_;
    std::vector<ActorId> proc_workers_;
    std::vector<ActorId> channel_workers_;

    std::atomic<std::uint64_t> launches_{0};
    std::atomic<std::uint64_t> executed_{0};

    std::atomic<bool> logging_{false};
    mutable std::mutex log_mutex_;
    std::vector<OpRecord> log_;
  };

} // namespace taskdual

#endif
