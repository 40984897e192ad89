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

// Minimal actor runtime: long-lived stateful actors pinned to execution
// contexts, communicating only through asynchronous messages.

#ifndef TASKDUAL_ACTOR_RT_H
#define TASKDUAL_ACTOR_RT_H

#include "taskdual/machine.h"

#include <map>
#include <shared_mutex>
#include <unordered_map>

namespace taskdual {

  class ActorRT;

  class Actor {
  public:
    virtual ~Actor() = default;
    virtual void handle_message(MessageId mid, ActorRT &rt, ByteView args) = 0;
    // Message ids this actor handles; used by runtimes that must bind each
    // (actor, message) pair ahead of time.
    virtual std::vector<MessageId> handled_messages() const { return {}; }
  };

  // Sender context id used for messages sent from host threads.
  inline constexpr std::int64_t HOST_SENDER = -1;

  struct MessageStats {
    std::uint64_t total = 0;
    std::uint64_t errors = 0;
    // (sender context id, receiver actor) -> count
    std::map<std::pair<std::int64_t, ActorId>, std::uint64_t> per_pair;

    std::uint64_t count(std::int64_t sender, ActorId receiver) const;
    std::uint64_t received_by(ActorId receiver) const;
  };

  class ActorRT {
  public:
    virtual ~ActorRT() = default;
    virtual void register_actor(std::shared_ptr<Actor> actor, ActorId aid,
                                ProcessorId target) = 0;
    virtual void send_message(ActorId aid, MessageId mid, ByteView args) = 0;
    // Blocks the calling host thread until nothing is in flight.
    virtual MessageStats run_until_quiescent(Nanos timeout) = 0;
  };

  class ActorRuntime final : public ActorRT {
  public:
    explicit ActorRuntime(Machine &machine);
    ~ActorRuntime() override;

    ActorRuntime(const ActorRuntime &) = delete;
    ActorRuntime &operator=(const ActorRuntime &) = delete;

    void register_actor(std::shared_ptr<Actor> actor, ActorId aid, ProcessorId target) override;
    void register_actor(std::shared_ptr<Actor> actor, ActorId aid, ChannelId target);
    void register_actor(std::shared_ptr<Actor> actor, ActorId aid, ExecutionContext &target);

    void send_message(ActorId aid, MessageId mid, ByteView args) override;
    void send_message(ActorId aid, MessageId mid, Bytes &&args);

    MessageStats run_until_quiescent(Nanos timeout = std::chrono::seconds(60)) override;

    MessageStats stats() const;
    void reset_stats();
    std::vector<std::string> errors() const;
    std::uint64_t reentrancy_violations() const { return reentrancy_violations_.load(); }
    std::uint64_t in_flight() const { return in_flight_.load(); }

    // Fresh id from a range disjoint from small application-chosen ids.
    ActorId allocate_actor_id();

    Machine &machine() { return machine_; }

    // True while the calling thread runs a message handler.
    static bool in_handler();
    static std::optional<ActorId> current_actor();

  private:
    struct Slot;
    struct ContextStats;

    void deliver(const std::shared_ptr<Slot> &slot, MessageId mid, Bytes args);
    void record_error(std::string msg);
    ContextStats &stats_for_caller();

    Machine &machine_;
    mutable std::shared_mutex registry_mutex_;
    std::unordered_map<ActorId, std::shared_ptr<Slot>> registry_;

    std::vector<std::unique_ptr<ContextStats>> context_stats_;
    std::unique_ptr<ContextStats> host_stats_;

    std::atomic<std::uint64_t> in_flight_{0};
    std::atomic<std::uint64_t> reentrancy_violations_{0};
    std::atomic<ActorId> next_internal_id_{ActorId(1) << 48};
    mutable std::mutex quiesce_mutex_;
    std::condition_variable quiesce_cv_;
    mutable std::mutex error_mutex_;
    std::vector<std::string> errors_;
  };

} // namespace taskdual

#endif
