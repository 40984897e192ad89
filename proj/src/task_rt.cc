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

#include "taskdual/task_rt.h"

#include "taskdual/serialize.h"

namespace taskdual {

  namespace {
    enum : MessageId
    {
      LAUNCH = 1,
      TASK_DONE,
      SCHEDULE,
      PRED_TRIGGERED,
      EXEC,
    };

    enum : std::uint8_t
    {
      KIND_TASK = 0,
      KIND_COPY = 1,
      KIND_ALLOC = 2,
    };

    constexpr std::int64_t NO_DEVICE_WORK = -1;
  } // namespace

  ////////////////////////////////////////////////////////////////////////
  //
  // class TaskContext

  TaskContext::TaskContext(TaskRuntime &rt, ProcessorId proc, std::optional<DeviceStream> stream)
    : rt_(rt)
    , proc_(proc)
    , stream_(stream)
  {}

  Machine &TaskContext::machine() { return rt_.machine(); }

  std::span<std::byte> TaskContext::bytes(const Allocation &a) { return machine().bytes(a); }

  std::span<const std::byte> TaskContext::bytes(const Allocation &a) const
  {
    return static_cast<const Machine &>(rt_.machine()).bytes(a);
  }

  DeviceEvent TaskContext::enqueue_device(DeviceKernel kernel, std::span<const DeviceEvent> waits)
  {
    if(!stream_)
      throw ValidationError("processor " + std::to_string(proc_.value()) + " has no device");
    DeviceEvent ev = machine().stream_enqueue(*stream_, std::move(kernel), waits);
    issued_.push_back(ev);
    return ev;
  }

  ////////////////////////////////////////////////////////////////////////
  //
  // class TaskRuntime::Scheduler

  class TaskRuntime::Scheduler final : public Actor {
  public:
    explicit Scheduler(TaskRuntime &rt)
      : rt_(rt)
    {}

    void handle_message(MessageId mid, ActorRT &, ByteView args) override
    {
      ByteReader in(args);
      switch(mid) {
      case LAUNCH:
      {
        Pending op;
        std::vector<Event> pre;
        in >> op.kind >> op.target >> op.ev >> op.tid >> op.device_ns >> op.src >> op.dst >>
            op.args >> pre;
        register_pending(std::move(op), pre);
        break;
      }
      case TASK_DONE:
      {
        Event ev;
        bool poisoned = false;
        in >> ev >> poisoned;
        // waiters owned by this scheduler decrement inline
        rt_.events_.trigger(ev, poisoned);
        break;
      }
      case PRED_TRIGGERED:
      {
        std::uint64_t key = 0;
        bool poisoned = false;
        in >> key >> poisoned;
        satisfy(key, poisoned);
        break;
      }
      case SCHEDULE:
      {
        schedule_queued_ = false;
        dispatch_ready();
        break;
      }
      default:
        throw Error("scheduler: unexpected message " + std::to_string(mid));
      }
    }

  private:
    struct Pending {
      std::uint8_t kind = KIND_TASK;
      std::uint32_t target = 0;
      Event ev;
      TaskId tid = -1;
      std::int64_t device_ns = NO_DEVICE_WORK;
      Allocation src, dst;
      Bytes args;
      std::uint32_t remaining = 0;
      bool poisoned = false;
    };

    void register_pending(Pending op, const std::vector<Event> &pre)
    {
      const std::uint64_t key = op.ev.id;
      // one guard count so early satisfactions can't release the op
      op.remaining = 1;
      for(const Event &e : pre) {
        bool waiting = rt_.events_.subscribe(e, [this, key](bool poisoned) {
          if(ActorRuntime::current_actor() == rt_.scheduler_id_) {
            satisfy(key, poisoned);
          } else {
            ByteWriter out;
            out << key << poisoned;
            rt_.actors_.send_message(rt_.scheduler_id_, PRED_TRIGGERED, out.take());
          }
        });
        if(waiting)
          op.remaining++;
        else if(rt_.events_.is_poisoned(e))
          op.poisoned = true;
      }
      pending_.emplace(key, std::move(op));
      satisfy(key, false);
    }

    void satisfy(std::uint64_t key, bool poisoned)
    {
      auto it = pending_.find(key);
      if(it == pending_.end())
        throw Error("scheduler: no pending operation for event " + std::to_string(key));
      it->second.poisoned |= poisoned;
      if(--it->second.remaining == 0) {
        ready_.push_back(key);
        if(!schedule_queued_) {
          schedule_queued_ = true;
          rt_.actors_.send_message(rt_.scheduler_id_, SCHEDULE, Bytes{});
        }
      }
    }

    void dispatch_ready()
    {
      std::vector<std::uint64_t> batch;
      batch.swap(ready_);
      for(std::uint64_t key : batch) {
        auto it = pending_.find(key);
        Pending op = std::move(it->second);
        pending_.erase(it);
        if(op.poisoned) {
          rt_.events_.trigger(op.ev, true);
          continue;
        }
        switch(op.kind) {
        case KIND_ALLOC:
          rt_.events_.trigger(op.ev);
          break;
        case KIND_TASK:
        {
          ByteWriter out;
          out << KIND_TASK << op.ev << op.tid << op.device_ns << op.args;
          rt_.actors_.send_message(rt_.proc_workers_[op.target], EXEC, out.take());
          break;
        }
        case KIND_COPY:
        {
          ByteWriter out;
          out << KIND_COPY << op.ev << op.src << op.dst;
          rt_.actors_.send_message(rt_.channel_workers_[op.target], EXEC, out.take());
          break;
        }
        }
      }
    }

    TaskRuntime &rt_;
    std::unordered_map<std::uint64_t, Pending> pending_;
    std::vector<std::uint64_t> ready_;
    bool schedule_queued_ = false;
  };

  ////////////////////////////////////////////////////////////////////////
  //
  // class TaskRuntime::Worker

  class TaskRuntime::Worker final : public Actor {
  public:
    Worker(TaskRuntime &rt, ProcessorId proc, std::uint32_t context,
           std::optional<DeviceStream> stream)
      : rt_(rt)
      , proc_(proc)
      , context_(context)
      , stream_(stream)
    {}

    void handle_message(MessageId mid, ActorRT &, ByteView args) override
    {
      if(mid != EXEC)
        throw Error("worker: unexpected message " + std::to_string(mid));
      ByteReader in(args);
      std::uint8_t kind = 0;
      Event ev;
      in >> kind >> ev;
      bool poisoned = false;
      OpRecord rec{ev, OpRecord::Kind::TASK, -1, context_, Clock::now(), {}};
      if(kind == KIND_TASK) {
        std::int64_t device_ns = NO_DEVICE_WORK;
        Bytes targs;
        in >> rec.tid >> device_ns >> targs;
        poisoned = !run_task(rec.tid, device_ns, targs);
      } else {
        Allocation src, dst;
        in >> src >> dst;
        rec.kind = OpRecord::Kind::COPY;
        try {
          rt_.machine_.copy_bytes(src, dst);
        } catch(const std::exception &) {
          poisoned = true;
        }
      }
      rec.end = Clock::now();
      rt_.executed_.fetch_add(1);
      rt_.record_op(rec);
      ByteWriter out;
      out << ev << poisoned;
      rt_.actors_.send_message(rt_.scheduler_id_, TASK_DONE, out.take());
    }

  private:
    bool run_task(TaskId tid, std::int64_t device_ns, ByteView targs)
    {
      const RegisteredTask *task = rt_.find_task(tid);
      if(task == nullptr)
        return false;
      TaskContext ctx(rt_, proc_, stream_);
      try {
        task->body(ctx, targs);
        if(device_ns != NO_DEVICE_WORK)
          ctx.enqueue_device(DeviceKernel{Nanos(device_ns), "task" + std::to_string(tid), {}});
      } catch(const std::exception &) {
        return false;
      }
      // the baseline runtime completes a task only after its device work
      for(const DeviceEvent &d : ctx.device_events())
        rt_.machine_.wait_device(d);
      return true;
    }

    TaskRuntime &rt_;
    ProcessorId proc_;
    std::uint32_t context_;
    std::optional<DeviceStream> stream_;
  };

  ////////////////////////////////////////////////////////////////////////
  //
  // class TaskRuntime

  TaskRuntime::TaskRuntime(Machine &machine, ActorRuntime &actors)
    : machine_(machine)
    , actors_(actors)
  {
    scheduler_id_ = actors_.allocate_actor_id();
    actors_.register_actor(std::make_shared<Scheduler>(*this), scheduler_id_,
                           machine_.utility_context());
    for(std::uint32_t p = 0; p < machine_.processor_count(); p++) {
      ProcessorId proc(p);
      std::optional<DeviceStream> stream;
      if(auto dev = machine_.local_device(proc))
        stream = machine_.create_stream(*dev);
      ActorId aid = actors_.allocate_actor_id();
      actors_.register_actor(
          std::make_shared<Worker>(*this, proc, machine_.context(proc).id(), stream), aid, proc);
      proc_workers_.push_back(aid);
    }
    for(std::uint32_t c = 0; c < machine_.channel_count(); c++) {
      ChannelId chan(c);
      ActorId aid = actors_.allocate_actor_id();
      actors_.register_actor(std::make_shared<Worker>(*this, ProcessorId(0),
                                                      machine_.context(chan).id(), std::nullopt),
                             aid, chan);
      channel_workers_.push_back(aid);
    }
  }

  TaskRuntime::~TaskRuntime()
  {
    // the scheduler and workers reference this object
    actors_.run_until_quiescent(std::chrono::hours(1));
  }

  void TaskRuntime::register_task(TaskId tid, TaskFn body, std::optional<Nanos> device_work)
  {
    if(!body)
      throw ValidationError("empty task body");
    std::unique_lock lock(tasks_mutex_);
    if(!tasks_.emplace(tid, RegisteredTask{std::move(body), device_work}).second)
      throw ValidationError("task " + std::to_string(tid) + " already registered");
  }

  const RegisteredTask *TaskRuntime::find_task(TaskId tid) const
  {
    std::shared_lock lock(tasks_mutex_);
    auto it = tasks_.find(tid);
    return it == tasks_.end() ? nullptr : &it->second;
  }

  Event TaskRuntime::submit(std::uint8_t kind, std::uint32_t target, TaskId tid, ByteView args,
                            std::span<const Event> pre, std::int64_t device_ns,
                            const Allocation &src, const Allocation &dst)
  {
    Event ev = events_.create();
    ByteWriter out;
    out << kind << target << ev << tid << device_ns << src << dst << args
        << std::vector<Event>(pre.begin(), pre.end());
    actors_.send_message(scheduler_id_, LAUNCH, out.take());
    return ev;
  }

  Event TaskRuntime::launch(ProcessorId p, TaskId tid, ByteView args, std::span<const Event> pre)
  {
    const RegisteredTask *task = find_task(tid);
    if(task == nullptr)
      throw ValidationError("launch of unregistered task " + std::to_string(tid));
    return launch(p, tid, args, pre, task->device_work);
  }

  Event TaskRuntime::launch(ProcessorId p, TaskId tid, ByteView args, std::span<const Event> pre,
                            std::optional<Nanos> device_work)
  {
    if(!machine_.valid(p))
      throw ValidationError("launch on invalid processor " + std::to_string(p.value()));
    if(find_task(tid) == nullptr)
      throw ValidationError("launch of unregistered task " + std::to_string(tid));
    if(device_work && !machine_.local_device(p))
      throw ValidationError("device work requested on a machine without devices");
    launches_.fetch_add(1);
    return submit(KIND_TASK, p.value(), tid, args, pre,
                  device_work ? device_work->count() : NO_DEVICE_WORK, {}, {});
  }

  std::pair<Event, Allocation> TaskRuntime::alloc(MemoryId m, std::size_t size,
                                                  std::span<const Event> pre)
  {
    Allocation a = machine_.allocate(m, size);
    Event ev = submit(KIND_ALLOC, 0, -1, {}, pre, NO_DEVICE_WORK, {}, {});
    return {ev, a};
  }

  Event TaskRuntime::copy(const Allocation &src, const Allocation &dst,
                          std::span<const Event> pre)
  {
    if(src.size != dst.size)
      throw ValidationError("copy size mismatch: " + std::to_string(src.size) + " vs " +
                            std::to_string(dst.size));
    if(!machine_.valid(src.memory) || !machine_.valid(dst.memory))
      throw ValidationError("copy between invalid memories");
    ChannelId chan = machine_.channel(src.memory, dst.memory);
    return submit(KIND_COPY, chan.value(), -1, {}, pre, NO_DEVICE_WORK, src, dst);
  }

  Event TaskRuntime::merge_events(std::span<const Event> pre)
  {
    if(pre.empty())
      return Event::none();
    if(pre.size() == 1)
      return pre.front();
    struct MergeState {
      std::atomic<std::size_t> remaining;
      std::atomic<bool> poisoned{false};
      Event out;
    };
    auto state = std::make_shared<MergeState>();
    state->remaining.store(pre.size() + 1);
    state->out = events_.create();
    auto arrive = [this, state](bool poisoned) {
      if(poisoned)
        state->poisoned.store(true);
      if(state->remaining.fetch_sub(1) == 1)
        events_.trigger(state->out, state->poisoned.load());
    };
    for(const Event &e : pre)
      if(!events_.subscribe(e, arrive))
        arrive(events_.is_poisoned(e));
    arrive(false);
    return state->out;
  }

  void TaskRuntime::wait(Event e, Nanos timeout)
  {
    if(ActorRuntime::in_handler())
      throw ContractViolation("wait called from inside an actor handler or task body");
    events_.wait(e, timeout);
  }

  void TaskRuntime::set_op_logging(bool on) { logging_.store(on); }

  std::vector<OpRecord> TaskRuntime::op_log() const
  {
    std::lock_guard lock(log_mutex_);
    return log_;
  }

  void TaskRuntime::record_op(const OpRecord &rec)
  {
    if(!logging_.load(std::memory_order_relaxed))
      return;
    std::lock_guard lock(log_mutex_);
    log_.push_back(rec);
  }

} // namespace taskdual
