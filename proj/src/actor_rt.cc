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

#include "taskdual/actor_rt.h"

namespace taskdual {

  namespace {
    thread_local std::optional<ActorId> tls_actor;
  }

  struct ActorRuntime::Slot {
    ActorId aid;
    std::shared_ptr<Actor> actor;
    ExecutionContext *context;
    std::atomic<bool> busy{false};
  };

  struct ActorRuntime::ContextStats {
    std::mutex mutex;
    std::map<ActorId, std::uint64_t> per_receiver;
    std::uint64_t errors = 0;
  };

  std::uint64_t MessageStats::count(std::int64_t sender, ActorId receiver) const
  {
    auto it = per_pair.find({sender, receiver});
    return it == per_pair.end() ? 0 : it->second;
  }

  std::uint64_t MessageStats::received_by(ActorId receiver) const
  {
    std::uint64_t n = 0;
    for(const auto &[key, c] : per_pair)
      if(key.second == receiver)
        n += c;
    return n;
  }

  ActorRuntime::ActorRuntime(Machine &machine)
    : machine_(machine)
    , host_stats_(std::make_unique<ContextStats>())
  {
    for(std::uint32_t i = 0; i < machine_.context_count(); i++)
      context_stats_.push_back(std::make_unique<ContextStats>());
  }

  ActorRuntime::~ActorRuntime()
  {
    // handlers still queued reference this runtime
    std::unique_lock lock(quiesce_mutex_);
    quiesce_cv_.wait(lock, [this] { return in_flight_.load() == 0; });
  }

  void ActorRuntime::register_actor(std::shared_ptr<Actor> actor, ActorId aid,
                                    ProcessorId target)
  {
    register_actor(std::move(actor), aid, machine_.context(target));
  }

  void ActorRuntime::register_actor(std::shared_ptr<Actor> actor, ActorId aid, ChannelId target)
  {
    register_actor(std::move(actor), aid, machine_.context(target));
  }

  void ActorRuntime::register_actor(std::shared_ptr<Actor> actor, ActorId aid,
                                    ExecutionContext &target)
  {
    if(!actor)
      throw ValidationError("null actor");
    auto slot = std::make_shared<Slot>();
    slot->aid = aid;
    slot->actor = std::move(actor);
    slot->context = &target;
    std::unique_lock lock(registry_mutex_);
    if(!registry_.emplace(aid, std::move(slot)).second)
      throw ValidationError("actor " + std::to_string(aid) + " already registered");
  }

  ActorId ActorRuntime::allocate_actor_id() { return next_internal_id_.fetch_add(1); }

  ActorRuntime::ContextStats &ActorRuntime::stats_for_caller()
  {
    ExecutionContext *ctx = ExecutionContext::current();
    if(ctx != nullptr && ctx->id() < context_stats_.size())
      return *context_stats_[ctx->id()];
    return *host_stats_;
  }

  void ActorRuntime::send_message(ActorId aid, MessageId mid, ByteView args)
  {
    send_message(aid, mid, Bytes(args.begin(), args.end()));
  }

  void ActorRuntime::send_message(ActorId aid, MessageId mid, Bytes &&args)
  {
    std::shared_ptr<Slot> slot;
    {
      std::shared_lock lock(registry_mutex_);
      auto it = registry_.find(aid);
      if(it != registry_.end())
        slot = it->second;
    }
    ContextStats &cs = stats_for_caller();
    if(!slot) {
      {
        std::lock_guard lock(cs.mutex);
        cs.errors++;
      }
      record_error("message " + std::to_string(mid) + " sent to unregistered actor " +
                   std::to_string(aid));
      return;
    }
    {
      std::lock_guard lock(cs.mutex);
      cs.per_receiver[aid]++;
    }
    in_flight_.fetch_add(1);
    machine_.deliver(*slot->context, [this, slot, mid, args = std::move(args)]() mutable {
      deliver(slot, mid, std::move(args));
    });
  }

  void ActorRuntime::deliver(const std::shared_ptr<Slot> &slot, MessageId mid, Bytes args)
  {
    if(slot->busy.exchange(true))
      reentrancy_violations_.fetch_add(1);
    std::optional<ActorId> prev = tls_actor;
    tls_actor = slot->aid;
    try {
      slot->actor->handle_message(mid, *this, args);
    } catch(const std::exception &e) {
      record_error("actor " + std::to_string(slot->aid) + " message " + std::to_string(mid) +
                   ": " + e.what());
    }
    tls_actor = prev;
    slot->busy.store(false);
    if(in_flight_.fetch_sub(1) == 1) {
      std::lock_guard lock(quiesce_mutex_);
      quiesce_cv_.notify_all();
    }
  }

  void ActorRuntime::record_error(std::string msg)
  {
    std::lock_guard lock(error_mutex_);
    errors_.push_back(std::move(msg));
  }

  MessageStats ActorRuntime::run_until_quiescent(Nanos timeout)
  {
    if(in_handler())
      throw ContractViolation("run_until_quiescent called from inside a handler");
    std::unique_lock lock(quiesce_mutex_);
    if(!quiesce_cv_.wait_for(lock, timeout, [this] { return in_flight_.load() == 0; }))
      throw TimeoutError("actor runtime not quiescent after timeout: " +
                         std::to_string(in_flight_.load()) + " messages in flight");
    lock.unlock();
    return stats();
  }

  MessageStats ActorRuntime::stats() const
  {
    MessageStats out;
    auto fold = [&](std::int64_t sender, ContextStats &cs) {
      std::lock_guard lock(cs.mutex);
      for(const auto &[aid, n] : cs.per_receiver) {
        out.per_pair[{sender, aid}] += n;
        out.total += n;
      }
      out.errors += cs.errors;
    };
    for(std::size_t i = 0; i < context_stats_.size(); i++)
      fold(static_cast<std::int64_t>(i), *context_stats_[i]);
    fold(HOST_SENDER, *host_stats_);
    return out;
  }

  void ActorRuntime::reset_stats()
  {
    auto clear = [](ContextStats &cs) {
      std::lock_guard lock(cs.mutex);
      cs.per_receiver.clear();
      cs.errors = 0;
    };
    for(auto &cs : context_stats_)
      clear(*cs);
    clear(*host_stats_);
  }

  std::vector<std::string> ActorRuntime::errors() const
  {
    std::lock_guard lock(error_mutex_);
    return errors_;
  }

  /*static*/ bool ActorRuntime::in_handler() { return tls_actor.has_value(); }

  /*static*/ std::optional<ActorId> ActorRuntime::current_actor() { return tls_actor; }

} // namespace taskdual
