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

// Simulated machine: processors and copy channels backed by dedicated
// execution contexts, byte-buffer memories, and asynchronous devices.

#ifndef TASKDUAL_MACHINE_H
#define TASKDUAL_MACHINE_H

#include "taskdual/common.h"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

namespace taskdual {

  struct MachineSpec {
    std::uint32_t processor_count = 1;
    std::uint32_t memory_count = 1;
    std::uint32_t device_count = 0;
    Nanos device_kernel_overhead{0};
    // Added to every message crossing execution contexts.
    Nanos host_message_latency{0};
    std::size_t memory_capacity = std::size_t(16) << 20;
    double copy_ns_per_byte = 0.0;

    void validate() const;
  };

  // A dedicated thread draining a FIFO of closures. Items may carry a
  // delivery time; the context does not run an item before it.
  class ExecutionContext {
  public:
    using Fn = std::function<void()>;

    ExecutionContext(std::uint32_t id, std::string name);
    ~ExecutionContext();

    ExecutionContext(const ExecutionContext &) = delete;
    ExecutionContext &operator=(const ExecutionContext &) = delete;

    void post(Fn fn, std::optional<TimePoint> ready_at = std::nullopt);

    std::uint32_t id() const { return id_; }
    const std::string &name() const { return name_; }

    // Context of the calling thread, or nullptr for host threads.
    static ExecutionContext *current();

  private:
    struct Item {
      Fn fn;
      std::optional<TimePoint> ready_at;
    };

    void run();

    std::uint32_t id_;
    std::string name_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Item> queue_;
    bool stop_ = false;
    std::thread thread_;
  };

  struct Allocation {
    MemoryId memory;
    std::size_t offset = 0;
    std::size_t size = 0;

    auto operator<=>(const Allocation &) const = default;
  };

  struct DeviceKernel {
    Nanos duration{0};
    std::string label;
    // Optional side effect applied when the kernel finishes.
    std::function<void()> effect;
  };

  struct DeviceStream {
    DeviceId device;
    std::uint32_t index = 0;
  };

  struct KernelRecord {
    DeviceId device;
    std::uint32_t stream = 0;
    std::string label;
    TimePoint start;
    TimePoint end;
  };

  namespace detail {
    struct DeviceEventState;
  }

  // One-shot completion token recorded at a point in a device stream.
  class DeviceEvent {
  public:
    DeviceEvent() = default;

    bool valid() const { return state_ != nullptr; }
    bool is_complete() const;
    // Only meaningful once complete.
    TimePoint completion_time() const;

  private:
    friend class Machine;
    explicit DeviceEvent(std::shared_ptr<detail::DeviceEventState> s)
      : state_(std::move(s))
    {}
    std::shared_ptr<detail::DeviceEventState> state_;
  };

  struct HostSink {
    ExecutionContext *context = nullptr;
    std::function<void()> fn;
  };

  class Machine {
  public:
    static std::unique_ptr<Machine> create(const MachineSpec &spec);
    ~Machine();

    Machine(const Machine &) = delete;
    Machine &operator=(const Machine &) = delete;

    const MachineSpec &spec() const { return spec_; }

    std::uint32_t processor_count() const { return spec_.processor_count; }
    std::uint32_t memory_count() const { return spec_.memory_count; }
    std::uint32_t device_count() const { return spec_.device_count; }
    std::uint32_t channel_count() const { return spec_.memory_count * spec_.memory_count; }
    // Execution contexts are numbered densely from zero.
    std::uint32_t context_count() const
    {
      return spec_.processor_count + spec_.device_count + channel_count() + 1;
    }

    bool valid(ProcessorId p) const { return p.value() < spec_.processor_count; }
    bool valid(MemoryId m) const { return m.value() < spec_.memory_count; }
    bool valid(ChannelId c) const { return c.value() < channel_count(); }

    ChannelId channel(MemoryId src, MemoryId dst) const;
    MemoryId channel_source(ChannelId c) const;
    MemoryId channel_target(ChannelId c) const;
    // Memory with affinity to a processor (round-robin).
    MemoryId local_memory(ProcessorId p) const;
    // Device driven by a processor (round-robin), if any devices exist.
    std::optional<DeviceId> local_device(ProcessorId p) const;

    ExecutionContext &context(ProcessorId p);
    ExecutionContext &context(ChannelId c);
    ExecutionContext &context(DeviceId d);
    // Extra context for runtime-internal actors such as the task scheduler.
    ExecutionContext &utility_context();

    // Posts fn to target, adding host_message_latency when the caller is on
    // a different context.
    void deliver(ExecutionContext &target, ExecutionContext::Fn fn);

    Allocation allocate(MemoryId m, std::size_t size);
    std::span<std::byte> bytes(const Allocation &a);
    std::span<const std::byte> bytes(const Allocation &a) const;
    // Simulated DMA: memmove plus per-byte cost, run by the caller.
    void copy_bytes(const Allocation &src, const Allocation &dst);

    DeviceStream create_stream(DeviceId d);
    // Never blocks on device completion.
    DeviceEvent stream_enqueue(const DeviceStream &stream, DeviceKernel kernel,
                               std::span<const DeviceEvent> waits = {});
    void notify_host(const DeviceEvent &ev, HostSink sink);
    // Blocks the calling host context until ev completes and the completion
    // notification would have arrived. Counted in blocking_device_waits().
    void wait_device(const DeviceEvent &ev);

    std::vector<KernelRecord> device_timeline() const;
    void clear_device_timeline();
    std::uint64_t blocking_device_waits() const { return blocking_waits_.load(); }
    std::uint64_t host_notifications() const { return notifications_.load(); }

  private:
    struct MemoryImpl;
    struct DeviceImpl;

    explicit Machine(const MachineSpec &spec);
    void complete_kernel(const std::shared_ptr<detail::DeviceEventState> &ev);

    MachineSpec spec_;
    std::vector<std::unique_ptr<ExecutionContext>> proc_contexts_;
    std::vector<std::unique_ptr<ExecutionContext>> channel_contexts_;
    std::vector<std::unique_ptr<ExecutionContext>> device_contexts_;
    std::unique_ptr<ExecutionContext> utility_context_;
    std::vector<std::unique_ptr<MemoryImpl>> memories_;
    std::vector<std::unique_ptr<DeviceImpl>> devices_;

    mutable std::mutex timeline_mutex_;
    std::vector<KernelRecord> timeline_;
    std::atomic<std::uint64_t> blocking_waits_{0};
    std::atomic<std::uint64_t> notifications_{0};
  };

} // namespace taskdual

#endif
