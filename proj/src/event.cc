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

#include "taskdual/event.h"

#include <condition_variable>

namespace taskdual {

  namespace {
    constexpr std::uint8_t UNTRIGGERED = 0;
    constexpr std::uint8_t TRIGGERED = 1;
    constexpr std::uint8_t POISONED = 2;
  } // namespace

  EventTable::EventTable()
    : chunks_(new std::atomic<Chunk *>[MAX_CHUNKS])
  {
    for(std::size_t i = 0; i < MAX_CHUNKS; i++)
      chunks_[i].store(nullptr);
  }

  EventTable::~EventTable()
  {
    for(std::size_t i = 0; i < MAX_CHUNKS; i++)
      delete chunks_[i].load();
  }

  Event EventTable::create()
  {
    std::uint64_t id = next_.fetch_add(1);
    std::size_t c = id >> CHUNK_BITS;
    if(c >= MAX_CHUNKS)
      throw Error("event table exhausted");
    if(chunks_[c].load(std::memory_order_acquire) == nullptr) {
      auto *fresh = new Chunk();
      Chunk *expected = nullptr;
      if(!chunks_[c].compare_exchange_strong(expected, fresh, std::memory_order_acq_rel))
        delete fresh;
    }
    return Event{id};
  }

  EventTable::Entry &EventTable::entry(Event ev) const
  {
    if(ev.id == 0 || ev.id >= next_.load())
      throw ValidationError("unknown event " + std::to_string(ev.id));
    Chunk *c = chunks_[ev.id >> CHUNK_BITS].load(std::memory_order_acquire);
    if(c == nullptr)
      throw ValidationError("unknown event " + std::to_string(ev.id));
    return (*c)[ev.id & (CHUNK_SIZE - 1)];
  }

  void EventTable::trigger(Event ev, bool poisoned)
  {
    Entry &e = entry(ev);
    std::vector<Waiter> waiters;
    {
      std::lock_guard lock(stripe(ev));
      if(e.state.load() != UNTRIGGERED)
        throw ContractViolation("event " + std::to_string(ev.id) + " triggered twice");
      e.state.store(poisoned ? POISONED : TRIGGERED, std::memory_order_release);
      waiters.swap(e.waiters);
    }
    for(Waiter &w : waiters)
      w(poisoned);
  }

  bool EventTable::subscribe(Event ev, Waiter w)
  {
    if(!ev.exists())
      return false;
    Entry &e = entry(ev);
    if(e.state.load(std::memory_order_acquire) != UNTRIGGERED)
      return false;
    std::lock_guard lock(stripe(ev));
    if(e.state.load() != UNTRIGGERED)
      return false;
    e.waiters.push_back(std::move(w));
    return true;
  }

  bool EventTable::has_triggered(Event ev) const
  {
    if(!ev.exists())
      return true;
    return entry(ev).state.load(std::memory_order_acquire) != UNTRIGGERED;
  }

  bool EventTable::is_poisoned(Event ev) const
  {
    if(!ev.exists())
      return false;
    return entry(ev).state.load(std::memory_order_acquire) == POISONED;
  }

  void EventTable::wait(Event ev, Nanos timeout)
  {
    if(has_triggered(ev))
      return;
    struct Latch {
      std::mutex mutex;
      std::condition_variable cv;
      bool done = false;
    };
    auto latch = std::make_shared<Latch>();
    bool pending = subscribe(ev, [latch](bool) {
      std::lock_guard lock(latch->mutex);
      latch->done = true;
      latch->cv.notify_all();
    });
    if(!pending)
      return;
    std::unique_lock lock(latch->mutex);
    if(!latch->cv.wait_for(lock, timeout, [&] { return latch->done; }))
      throw TimeoutError("event " + std::to_string(ev.id) + " did not trigger before timeout");
  }

} // namespace taskdual
