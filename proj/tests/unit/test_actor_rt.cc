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

#include "doctest.h"

#include "support/actor_programs.h"
#include "taskdual/actor_rt.h"
#include "taskdual/serialize.h"

#include <set>
#include <thread>

using namespace taskdual;
using namespace taskdual::testing;
using namespace std::chrono_literals;

namespace {

  // Records which context each message ran on and the payloads in order.
  class Recorder final : public Actor {
  public:
    void handle_message(MessageId mid, ActorRT &, ByteView args) override
    {
      if(busy_.exchange(true))
        overlaps_++;
      std::this_thread::sleep_for(std::chrono::microseconds(mid == 2 ? 200 : 0));
      std::uint64_t v = 0;
      if(args.size() == sizeof(v))
        ByteReader(args) >> v;
      {
        std::lock_guard lock(mutex_);
        seen.push_back(v);
        auto *ctx = ExecutionContext::current();
        contexts.insert(ctx ? ctx->id() : ~0u);
      }
      busy_ = false;
    }

    std::mutex mutex_;
    std::vector<std::uint64_t> seen;
    std::set<std::uint32_t> contexts;
    std::atomic<bool> busy_{false};
    std::atomic<int> overlaps_{0};
  };

  // Forwards every message to `next` with the payload unchanged.
  class Relay final : public Actor {
  public:
    explicit Relay(ActorId next)
      : next_(next)
    {}
    void handle_message(MessageId mid, ActorRT &rt, ByteView args) override
    {
      rt.send_message(next_, mid, args);
    }
    ActorId next_;
  };

} // namespace

TEST_CASE("no messages means immediate quiescence with empty stats")
{
  auto m = Machine::create({.processor_count = 2});
  ActorRuntime rt(*m);
  MessageStats st = rt.run_until_quiescent(1s);
  CHECK(st.total == 0);
  CHECK(st.per_pair.empty());
}

TEST_CASE("handlers run on the registered processor")
{
  auto m = Machine::create({.processor_count = 4});
  ActorRuntime rt(*m);
  std::vector<std::shared_ptr<Recorder>> actors;
  for(int i = 0; i < 1000; i++) {
    actors.push_back(std::make_shared<Recorder>());
    rt.register_actor(actors.back(), 1000 + i, ProcessorId(i % 4));
  }
  for(int i = 0; i < 1000; i++)
    rt.send_message(1000 + i, 1, to_bytes(std::uint64_t(i)));
  MessageStats st = rt.run_until_quiescent(30s);
  CHECK(st.total == 1000);
  for(int i = 0; i < 1000; i++) {
    REQUIRE(actors[i]->contexts.size() == 1);
    CHECK(*actors[i]->contexts.begin() == m->context(ProcessorId(i % 4)).id());
  }
}

TEST_CASE("duplicate registration and unknown targets")
{
  auto m = Machine::create({.processor_count = 2});
  ActorRuntime rt(*m);
  rt.register_actor(std::make_shared<Recorder>(), 7, ProcessorId(0));
  CHECK_THROWS_AS(rt.register_actor(std::make_shared<Recorder>(), 7, ProcessorId(1)),
                  ValidationError);
  CHECK_THROWS_AS(rt.register_actor(nullptr, 8, ProcessorId(1)), ValidationError);

  rt.send_message(99, 1, ByteView{});
  MessageStats st = rt.run_until_quiescent(1s);
  CHECK(st.errors == 1);
  CHECK(rt.errors().size() == 1);
}

TEST_CASE("messages from one sender arrive in send order")
{
  auto m = Machine::create({.processor_count = 2});
  ActorRuntime rt(*m);
  auto rec = std::make_shared<Recorder>();
  rt.register_actor(rec, 1, ProcessorId(1));
  rt.register_actor(std::make_shared<Relay>(1), 2, ProcessorId(0));
  for(std::uint64_t i = 0; i < 500; i++)
    rt.send_message(2, 1, to_bytes(i));
  MessageStats st = rt.run_until_quiescent(10s);
  CHECK(st.total == 1000);
  CHECK(st.count(HOST_SENDER, 2) == 500);
  CHECK(st.count(m->context(ProcessorId(0)).id(), 1) == 500);
  CHECK(st.received_by(1) == 500);
  REQUIRE(rec->seen.size() == 500);
  for(std::uint64_t i = 0; i < 500; i++)
    CHECK(rec->seen[i] == i);
}

TEST_CASE("handlers of one actor never overlap")
{
  auto m = Machine::create({.processor_count = 4});
  ActorRuntime rt(*m);
  auto rec = std::make_shared<Recorder>();
  rt.register_actor(rec, 1, ProcessorId(0));
  for(int r = 0; r < 3; r++)
    rt.register_actor(std::make_shared<Relay>(1), 10 + r, ProcessorId(1 + r));
  for(int i = 0; i < 200; i++)
    rt.send_message(10 + i % 3, 2, to_bytes(std::uint64_t(i)));
  rt.run_until_quiescent(30s);
  CHECK(rec->overlaps_ == 0);
  CHECK(rt.reentrancy_violations() == 0);
  CHECK(rec->seen.size() == 200);
}

TEST_CASE("independent senders interleave both ways")
{
  auto m = Machine::create({.processor_count = 3});
  bool a_first = false, b_first = false;
  for(int trial = 0; trial < 400 && !(a_first && b_first); trial++) {
    ActorRuntime rt(*m);
    auto rec = std::make_shared<Recorder>();
    rt.register_actor(rec, 1, ProcessorId(0));
    rt.register_actor(std::make_shared<Relay>(1), 2, ProcessorId(1));
    rt.register_actor(std::make_shared<Relay>(1), 3, ProcessorId(2));
    if(trial % 2) {
      rt.send_message(2, 1, to_bytes(std::uint64_t(2)));
      rt.send_message(3, 1, to_bytes(std::uint64_t(3)));
    } else {
      rt.send_message(3, 1, to_bytes(std::uint64_t(3)));
      rt.send_message(2, 1, to_bytes(std::uint64_t(2)));
    }
    rt.run_until_quiescent(5s);
    REQUIRE(rec->seen.size() == 2);
    (rec->seen[0] == 2 ? a_first : b_first) = true;
  }
  CHECK(a_first);
  CHECK(b_first);
}

TEST_CASE("diamond actor program sends four messages after the kickoff")
{
  auto m = Machine::create({.processor_count = 2});
  ProgramInstance inst = make_diamond();
  ProgramOutcome out = run_native(*m, inst);
  // The host kickoff of f1 plus F2_START, F3_START, and two F4_START.
  CHECK(out.stats.total == 5);
  CHECK(out.stats.count(HOST_SENDER, P1_ACTOR) == 1);
  CHECK(out.stats.total - out.stats.count(HOST_SENDER, P1_ACTOR) == 4);
  CHECK(out.stats.received_by(P2_ACTOR) == 3);
  REQUIRE(inst.diamond->order.size() == 4);
  CHECK(inst.diamond->order.front() == "f1");
  CHECK(inst.diamond->order.back() == "f4");
  CHECK(static_cast<P2Actor &>(*inst.placements[1].actor).count == 0);
}

TEST_CASE("ping-pong of N rounds is 2N messages")
{
  auto m = Machine::create({.processor_count = 2});
  for(std::uint32_t n : {1u, 5u, 64u}) {
    ProgramOutcome out = run_native(*m, make_ping_pong(n, n));
    CHECK(out.stats.total == 2 * n);
  }
}

TEST_CASE("quiescence from inside a handler is rejected")
{
  struct Bad final : Actor {
    std::atomic<bool> threw{false};
    ActorRuntime *rt = nullptr;
    void handle_message(MessageId, ActorRT &, ByteView) override
    {
      try {
        rt->run_until_quiescent(10ms);
      } catch(const ContractViolation &) {
        threw = true;
      }
    }
  };
  auto m = Machine::create({.processor_count = 1});
  ActorRuntime rt(*m);
  auto bad = std::make_shared<Bad>();
  bad->rt = &rt;
  rt.register_actor(bad, 1, ProcessorId(0));
  rt.send_message(1, 1, ByteView{});
  rt.run_until_quiescent(5s);
  CHECK(bad->threw);
}
