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

// One-shot completion events. Storage is a table keyed by a dense 64-bit id;
// triggered events are kept for the lifetime of the table.

#ifndef TASKDUAL_EVENT_H
#define TASKDUAL_EVENT_H

#include "taskdual/common.h"

#include <array>
#include <atomic>
#include <memory>
#include <mutex>

namespace taskdual {

  struct Event {
    std::uint64_t id = 0;

    // Id zero is the always-triggered event.
    static constexpr Event none() { return Event{0}; }
    bool exists() const { return id != 0; }
    auto operator<=>(const Event &) const = default;
  };

  class EventTable {
  public:
    // Called once with the poison state when the event triggers.
    using Waiter = std::function<void(bool poisoned)>;

    EventTable();
    ~EventTable();

    EventTable(const EventTable &) = delete;
    EventTable &operator=(const EventTable &) = delete;

    Event create();
    // Triggers ev and runs its waiters on the calling thread. Triggering twice
    // is a contract violation.
    void trigger(Event ev, bool poisoned = false);

    // Registers w unless ev has already triggered; returns false (without
    // storing w) in that case.
    bool subscribe(Event ev, Waiter w);

    bool has_triggered(Event ev) const;
    bool is_poisoned(Event ev) const;

    // Host-side blocking wait; throws TimeoutError.
    void wait(Event ev, Nanos timeout);

    std::uint64_t created() const { return next_.load() - 1; }

  private:
    struct Entry {
      std::atomic<std::uint8_t> state{0};
      std::vector<Waiter> waiters;
    };

    static constexpr std::size_t CHUNK_BITS = 12;
    static constexpr std::size_t CHUNK_SIZE = std::size_t(1) << CHUNK_BITS;
    static constexpr std::size_t MAX_CHUNKS = std::size_t(1) << 16;
    static constexpr std::size_t STRIPES = 64;

    using Chunk = std::array<Entry, CHUNK_SIZE>;

    Entry &entry(Event ev) const;
    std::mutex &stripe(Event ev) const { return stripes_[ev.id % STRIPES]; }

    std::atomic<std::uint64_t> next_{1};
    std::unique_ptr<std::atomic<Chunk *>[]> chunks_;
    mutable std::array<std::mutex, STRIPES> stripes_;
  };

} // namespace taskdual

template <>
struct std::hash<taskdual::Event> {
  std::size_t operator()(const taskdual::Event &e) const noexcept
  {
    return std::hash<std::uint64_t>{}(e.id);
  }
};

#endif
