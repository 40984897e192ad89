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

// Shared vocabulary types for the taskdual runtimes

#ifndef TASKDUAL_COMMON_H
#define TASKDUAL_COMMON_H

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace taskdual {

  using Clock = std::chrono::steady_clock;
  using TimePoint = Clock::time_point;
  using Nanos = std::chrono::nanoseconds;

  using Bytes = std::vector<std::byte>;
  using ByteView = std::span<const std::byte>;

  // Dense integer handle with a tag type so ids of different kinds don't mix.
  template <typename Tag, typename Rep = std::uint32_t>
  struct StrongId {
    Rep id{};

    constexpr StrongId() = default;
    constexpr explicit StrongId(Rep v)
      : id(v)
    {}
    constexpr Rep value() const { return id; }
    constexpr auto operator<=>(const StrongId &) const = default;
  };

  struct ProcessorTag {};
  struct MemoryTag {};
  struct ChannelTag {};
  struct DeviceTag {};

  using ProcessorId = StrongId<ProcessorTag>;
  using MemoryId = StrongId<MemoryTag>;
  using ChannelId = StrongId<ChannelTag>;
  using DeviceId = StrongId<DeviceTag>;

  using ActorId = std::int64_t;
  using MessageId = std::int32_t;
  using TaskId = std::int32_t;

  class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
  };

  // Malformed input (graphs, flags, specs) rejected before any work runs.
  class ValidationError : public Error {
  public:
    using Error::Error;
  };

  // API used outside its allowed calling context.
  class ContractViolation : public Error {
  public:
    using Error::Error;
  };

  class TimeoutError : public Error {
  public:
    using Error::Error;
  };

  // Simulated memory exhausted.
  class OutOfMemory : public Error {
  public:
    using Error::Error;
  };

  template <typename T>
  Bytes to_bytes(const T &v)
  {
    static_assert(std::is_trivially_copyable_v<T>);
    Bytes out(sizeof(T));
    std::memcpy(out.data(), &v, sizeof(T));
    return out;
  }

  std::string to_hex(ByteView bytes);
  Bytes from_hex(const std::string &hex);

} // namespace taskdual

template <typename Tag, typename Rep>
struct std::hash<taskdual::StrongId<Tag, Rep>> {
  std::size_t operator()(const taskdual::StrongId<Tag, Rep> &v) const noexcept
  {
    return std::hash<Rep>{}(v.id);
  }
};

#endif
