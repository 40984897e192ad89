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

#include "taskdual/machine.h"

#include <algorithm>
#include <system_error>

namespace taskdual {

  namespace {
    thread_local ExecutionContext *tls_context = nullptr;
  }

  namespace detail {
    struct DeviceEventState {
      std::mutex mutex;
      std::condition_variable cv;
      std::atomic<bool> complete{false};
      TimePoint end;
      std::vector<HostSink> sinks;
    };
  } // namespace detail

  ////////////////////////////////////////////////////////////////////////
  //
  // class ExecutionContext

  ExecutionContext::ExecutionContext(std::uint32_t id, std::string name)
    : id_(id)
    , name_(std::move(name))
  {
    thread_ = std::thread([this] { run(); });
  }

  ExecutionContext::~ExecutionContext()
  {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_one();
    thread_.join();
  }

  void ExecutionContext::post(Fn fn, std::optional<TimePoint> ready_at)
  {
    bool wake;
    {
      std::lock_guard lock(mutex_);
      wake = queue_.empty();
      queue_.push_back(Item{std::move(fn), ready_at});
    }
    if(wake)
      cv_.notify_one();
  }

  /*static*/ ExecutionContext *ExecutionContext::current() { return tls_context; }

  void ExecutionContext::run()
  {
    tls_context = this;
    std::deque<Item> batch;
    while(true) {
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if(stop_)
          return;
        batch.swap(queue_);
      }
      for(Item &item : batch) {
        if(item.ready_at && *item.ready_at > Clock::now())
          std::this_thread::sleep_until(*item.ready_at);
        item.fn();
      }
      batch.clear();
    }
  }

  ////////////////////////////////////////////////////////////////////////
  //
  // class Machine

  struct Machine::MemoryImpl {
    std::mutex mutex;
    std::vector<std::byte> data;
    std::size_t next = 0;
  };

  struct Machine::DeviceImpl {
    std::atomic<std::uint32_t> next_stream{0};
  };

  void MachineSpec::validate() const
  {
    if(processor_count < 1)
      throw ValidationError("machine needs at least one processor");
    if(memory_count < 1)
      throw ValidationError("machine needs at least one memory");
    if(device_kernel_overhead.count() < 0 || host_message_latency.count() < 0)
      throw ValidationError("machine durations must be non-negative");
    if(copy_ns_per_byte < 0)
      throw ValidationError("copy cost must be non-negative");
  }

  /*static*/ std::unique_ptr<Machine> Machine::create(const MachineSpec &spec)
  {
    spec.validate();
    try {
      return std::unique_ptr<Machine>(new Machine(spec));
    } catch(const std::system_error &e) {
      throw Error(std::string("unable to create execution contexts: ") + e.what());
    }
  }

  Machine::Machine(const MachineSpec &spec)
    : spec_(spec)
  {
    std::uint32_t next_id = 0;
    for(std::uint32_t i = 0; i < spec_.processor_count; i++)
      proc_contexts_.push_back(
          std::make_unique<ExecutionContext>(next_id++, "P" + std::to_string(i)));
    for(std::uint32_t i = 0; i < spec_.device_count; i++) {
      device_contexts_.push_back(
          std::make_unique<ExecutionContext>(next_id++, "D" + std::to_string(i)));
      devices_.push_back(std::make_unique<DeviceImpl>());
    }
    for(std::uint32_t i = 0; i < channel_count(); i++)
      channel_contexts_.push_back(
          std::make_unique<ExecutionContext>(next_id++, "C" + std::to_string(i)));
    utility_context_ = std::make_unique<ExecutionContext>(next_id++, "U");
    for(std::uint32_t i = 0; i < spec_.memory_count; i++) {
      auto mem = std::make_unique<MemoryImpl>();
      mem->data.resize(spec_.memory_capacity);
      memories_.push_back(std::move(mem));
    }
  }

  Machine::~Machine()
  {
    // contexts may still reference memories and devices until joined
    proc_contexts_.clear();
    channel_contexts_.clear();
    device_contexts_.clear();
    utility_context_.reset();
  }

  ChannelId Machine::channel(MemoryId src, MemoryId dst) const
  {
    return ChannelId(src.value() * spec_.memory_count + dst.value());
  }

  MemoryId Machine::channel_source(ChannelId c) const
  {
    return MemoryId(c.value() / spec_.memory_count);
  }

  MemoryId Machine::channel_target(ChannelId c) const
  {
    return MemoryId(c.value() % spec_.memory_count);
  }

  MemoryId Machine::local_memory(ProcessorId p) const
  {
    return MemoryId(p.value() % spec_.memory_count);
  }

  std::optional<DeviceId> Machine::local_device(ProcessorId p) const
  {
    if(spec_.device_count == 0)
      return std::nullopt;
    return DeviceId(p.value() % spec_.device_count);
  }

  ExecutionContext &Machine::context(ProcessorId p)
  {
    if(!valid(p))
      throw ValidationError("invalid processor " + std::to_string(p.value()));
    return *proc_contexts_[p.value()];
  }

  ExecutionContext &Machine::context(ChannelId c)
  {
    if(!valid(c))
      throw ValidationError("invalid channel " + std::to_string(c.value()));
    return *channel_contexts_[c.value()];
  }

  ExecutionContext &Machine::context(DeviceId d)
  {
    if(d.value() >= spec_.device_count)
      throw ValidationError("invalid device " + std::to_string(d.value()));
    return *device_contexts_[d.value()];
  }

  ExecutionContext &Machine::utility_context() { return *utility_context_; }

  void Machine::deliver(ExecutionContext &target, ExecutionContext::Fn fn)
  {
    if(spec_.host_message_latency.count() > 0 && ExecutionContext::current() != &target)
      target.post(std::move(fn), Clock::now() + spec_.host_message_latency);
    else
      target.post(std::move(fn));
  }

  Allocation Machine::allocate(MemoryId m, std::size_t size)
  {
    if(!valid(m))
      throw ValidationError("invalid memory " + std::to_string(m.value()));
    MemoryImpl &mem = *memories_[m.value()];
    std::lock_guard lock(mem.mutex);
    std::size_t offset = (mem.next + 15) & ~std::size_t(15);
    if(offset > mem.data.size() || size > mem.data.size() - offset)
      throw OutOfMemory("memory " + std::to_string(m.value()) + " cannot fit " +
                        std::to_string(size) + " bytes");
    mem.next = offset + size;
    return Allocation{m, offset, size};
  }

  std::span<std::byte> Machine::bytes(const Allocation &a)
  {
    if(!valid(a.memory) || a.offset + a.size > spec_.memory_capacity)
      throw ValidationError("allocation outside memory bounds");
    return std::span<std::byte>(memories_[a.memory.value()]->data).subspan(a.offset, a.size);
  }

  std::span<const std::byte> Machine::bytes(const Allocation &a) const
  {
    if(!valid(a.memory) || a.offset + a.size > spec_.memory_capacity)
      throw ValidationError("allocation outside memory bounds");
    return std::span<const std::byte>(memories_[a.memory.value()]->data)
        .subspan(a.offset, a.size);
  }

  void Machine::copy_bytes(const Allocation &src, const Allocation &dst)
  {
    if(src.size != dst.size)
      throw ValidationError("copy size mismatch");
    auto from = bytes(src);
    auto to = bytes(dst);
    std::memmove(to.data(), from.data(), from.size());
    if(spec_.copy_ns_per_byte > 0) {
      auto cost = Nanos(static_cast<std::int64_t>(spec_.copy_ns_per_byte * src.size));
      std::this_thread::sleep_for(cost);
    }
  }

  DeviceStream Machine::create_stream(DeviceId d)
  {
    if(d.value() >= spec_.device_count)
      throw ValidationError("invalid device " + std::to_string(d.value()));
    return DeviceStream{d, devices_[d.value()]->next_stream.fetch_add(1)};
  }

  DeviceEvent Machine::stream_enqueue(const DeviceStream &stream, DeviceKernel kernel,
                                      std::span<const DeviceEvent> waits)
  {
    if(stream.device.value() >= spec_.device_count)
      throw ValidationError("invalid device stream");
    auto ev = std::make_shared<detail::DeviceEventState>();
    std::vector<std::shared_ptr<detail::DeviceEventState>> deps;
    for(const DeviceEvent &w : waits) {
      if(!w.valid())
        throw ValidationError("invalid device event");
      deps.push_back(w.state_);
    }
    // The device context runs kernels serially in enqueue order, which gives
    // per-stream FIFO. Waits on other devices block only this device.
    context(stream.device)
        .post([this, ev, deps = std::move(deps), kernel = std::move(kernel), stream] {
          for(const auto &d : deps) {
            std::unique_lock lock(d->mutex);
            d->cv.wait(lock, [&] { return d->complete.load(); });
          }
          TimePoint start = Clock::now();
          std::this_thread::sleep_until(start + kernel.duration +
                                        spec_.device_kernel_overhead);
          if(kernel.effect)
            kernel.effect();
          TimePoint end = Clock::now();
          {
            std::lock_guard lock(timeline_mutex_);
            timeline_.push_back(
                KernelRecord{stream.device, stream.index, kernel.label, start, end});
          }
          ev->end = end;
          complete_kernel(ev);
        });
    return DeviceEvent(ev);
  }

  void Machine::complete_kernel(const std::shared_ptr<detail::DeviceEventState> &ev)
  {
    std::vector<HostSink> sinks;
    {
      std::lock_guard lock(ev->mutex);
      ev->complete.store(true);
      sinks.swap(ev->sinks);
    }
    ev->cv.notify_all();
    for(HostSink &s : sinks) {
      notifications_.fetch_add(1);
      deliver(*s.context, std::move(s.fn));
    }
  }

  void Machine::notify_host(const DeviceEvent &ev, HostSink sink)
  {
    if(!ev.valid() || sink.context == nullptr)
      throw ValidationError("invalid device notification");
    {
      std::lock_guard lock(ev.state_->mutex);
      if(!ev.state_->complete.load()) {
        ev.state_->sinks.push_back(std::move(sink));
        return;
      }
    }
    notifications_.fetch_add(1);
    deliver(*sink.context, std::move(sink.fn));
  }

  void Machine::wait_device(const DeviceEvent &ev)
  {
    if(!ev.valid())
      throw ValidationError("invalid device event");
    blocking_waits_.fetch_add(1);
    {
      std::unique_lock lock(ev.state_->mutex);
      ev.state_->cv.wait(lock, [&] { return ev.state_->complete.load(); });
    }
    if(spec_.host_message_latency.count() > 0)
      std::this_thread::sleep_until(ev.state_->end + spec_.host_message_latency);
  }

  std::vector<KernelRecord> Machine::device_timeline() const
  {
    std::lock_guard lock(timeline_mutex_);
    return timeline_;
  }

  void Machine::clear_device_timeline()
  {
    std::lock_guard lock(timeline_mutex_);
    timeline_.clear();
  }

  ////////////////////////////////////////////////////////////////////////
  //
  // class DeviceEvent

  bool DeviceEvent::is_complete() const { return state_ && state_->complete.load(); }

  TimePoint DeviceEvent::completion_time() const { return state_ ? state_->end : TimePoint{}; }

  ////////////////////////////////////////////////////////////////////////

  std::string to_hex(ByteView bytes)
  {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for(std::byte b : bytes) {
      out.push_back(digits[std::to_integer<unsigned>(b) >> 4]);
      out.push_back(digits[std::to_integer<unsigned>(b) & 0xf]);
    }
    return out;
  }

  Bytes from_hex(const std::string &hex)
  {
    if(hex.size() % 2 != 0)
      throw ValidationError("odd-length hex string");
    auto nibble = [](char c) -> unsigned {
      if(c >= '0' && c <= '9')
        return c - '0';
      if(c >= 'a' && c <= 'f')
        return c - 'a' + 10;
      if(c >= 'A' && c <= 'F')
        return c - 'A' + 10;
      throw ValidationError(std::string("invalid hex digit '") + c + "'");
    };
    Bytes out(hex.size() / 2);
    for(std::size_t i = 0; i < out.size(); i++)
      out[i] = std::byte((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    return out;
  }

} // namespace taskdual
