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

#include "taskdual/duality.h"
#include "taskdual/task_rt.h"

#include <thread>

using namespace taskdual;
using namespace std::chrono_literals;

namespace {

  struct Rig {
    std::unique_ptr<Machine> machine;
    std::unique_ptr<ActorRuntime> actors;
    std::unique_ptr<TaskRuntime> rt;

    explicit Rig(MachineSpec spec = {.processor_count = 2, .memory_count = 2})
      : machine(Machine::create(spec))
      , actors(std::make_unique<ActorRuntime>(*machine))
      , rt(tasks_on_actors(*machine, *actors))
    {}
    ~Rig()
    {
      rt.reset();
      actors.reset();
    }
  };

  struct OrderLog {
    std::mutex mutex;
    std::vector<std::pair<std::int32_t, std::uint32_t>> ran; // (task tag, context)
    void add(std::int32_t tag)
    {
      std::lock_guard lock(mutex);
      ran.emplace_back(tag, ExecutionContext::current()->id());
    }
    std::size_t position(std::int32_t tag)
    {
      for(std::size_t i = 0; i < ran.size(); i++)
        if(ran[i].first == tag)
          return i;
      return ran.size();
    }
  };

  TaskFn tagger(OrderLog &log)
  {
    return [&log](TaskContext &, ByteView args) {
      std::int32_t tag = 0;
      std::memcpy(&tag, args.data(), sizeof(tag));
      log.add(tag);
    };
  }

} // namespace

TEST_CASE("diamond launches run in a linear extension")
{
  Rig r;
  OrderLog log;
  r.rt->register_task(1, tagger(log));
  for(int rep = 0; rep < 20; rep++) {
    log.ran.clear();
    ProcessorId p1(0), p2(1);
    Event e1 = r.rt->launch(p1, 1, to_bytes(std::int32_t(1)), {});
    Event e2 = r.rt->launch(p2, 1, to_bytes(std::int32_t(2)), std::vector{e1});
    Event e3 = r.rt->launch(p1, 1, to_bytes(std::int32_t(3)), std::vector{e1});
    Event e4 = r.rt->launch(p2, 1, to_bytes(std::int32_t(4)), std::vector{e2, e3});
    r.rt->wait(e4, 10s);
    REQUIRE(log.ran.size() == 4);
    CHECK(log.position(1) == 0);
    CHECK(log.position(4) == 3);
    CHECK(log.ran[log.position(2)].second == r.machine->context(p2).id());
    CHECK(log.ran[log.position(3)].second == r.machine->context(p1).id());
  }
}

TEST_CASE("merged events trigger after all inputs")
{
  Rig r;
  Event none = r.rt->merge_events(std::span<const Event>{});
  CHECK(r.rt->has_triggered(none));

  Event u1 = r.rt->create_user_event();
  Event u2 = r.rt->create_user_event();
  Event one = r.rt->merge_events({u1});
  Event both = r.rt->merge_events({u1, u2});
  CHECK_FALSE(r.rt->has_triggered(both));
  r.rt->trigger(u1);
  r.rt->wait(one, 1s);
  CHECK_FALSE(r.rt->has_triggered(both));
  r.rt->trigger(u2);
  r.rt->wait(both, 1s);
  CHECK_FALSE(r.rt->is_poisoned(both));
  CHECK_THROWS_AS(r.rt->trigger(u2), ContractViolation);
}

TEST_CASE("poison propagates through dependent operations")
{
  Rig r;
  std::atomic<int> ran{0};
  r.rt->register_task(1, [&](TaskContext &, ByteView) { ran++; });
  r.rt->register_task(2, [](TaskContext &, ByteView) { throw std::runtime_error("boom"); });
  Event bad = r.rt->launch(ProcessorId(0), 2, {}, {});
  Event after = r.rt->launch(ProcessorId(1), 1, {}, std::vector{bad});
  r.rt->wait(after, 5s);
  CHECK(r.rt->is_poisoned(bad));
  CHECK(r.rt->is_poisoned(after));
  CHECK(ran == 0);
}

TEST_CASE("alloc and copy move bytes between memories")
{
  Rig r;
  auto [ea, a] = r.rt->alloc(MemoryId(0), 1024);
  auto [eb, b] = r.rt->alloc(MemoryId(1), 1024);
  r.rt->wait(r.rt->merge_events({ea, eb}), 1s);
  CHECK(a.memory == MemoryId(0));
  CHECK(a.size == 1024);

  r.rt->register_task(1, [a = a](TaskContext &ctx, ByteView) {
    auto bytes = ctx.bytes(a);
    for(std::size_t i = 0; i < bytes.size(); i++)
      bytes[i] = std::byte(i & 0xff);
  });
  Event w = r.rt->launch(ProcessorId(0), 1, {}, {});
  Event c = r.rt->copy(a, b, std::vector{w});
  r.rt->wait(c, 5s);
  auto got = r.machine->bytes(b);
  for(std::size_t i = 0; i < got.size(); i++)
    CHECK(got[i] == std::byte(i & 0xff));

  auto [es, small] = r.rt->alloc(MemoryId(1), 8);
  r.rt->wait(es, 1s);
  CHECK_THROWS_AS(r.rt->copy(a, small), ValidationError);
}

TEST_CASE("launch validation")
{
  Rig r;
  r.rt->register_task(1, [](TaskContext &, ByteView) {});
  CHECK_THROWS_AS(r.rt->launch(ProcessorId(0), 42, {}, {}), ValidationError);
  CHECK_THROWS_AS(r.rt->launch(ProcessorId(9), 1, {}, {}), ValidationError);
  CHECK_THROWS_AS(r.rt->register_task(1, [](TaskContext &, ByteView) {}), ValidationError);
  CHECK_THROWS_AS(r.rt->launch(ProcessorId(0), 1, {}, {}, 1ms), ValidationError);
}

TEST_CASE("wait from inside a task body is a contract violation")
{
  Rig r;
  std::atomic<bool> threw{false};
  Event pending = r.rt->create_user_event();
  r.rt->register_task(1, [&](TaskContext &ctx, ByteView) {
    try {
      ctx.runtime().wait(pending, 1ms);
    } catch(const ContractViolation &) {
      threw = true;
    }
  });
  r.rt->wait(r.rt->launch(ProcessorId(0), 1, {}, {}), 5s);
  CHECK(threw);
  r.rt->trigger(pending);
}

TEST_CASE("task completion includes its device work")
{
  Rig r({.processor_count = 1, .memory_count = 1, .device_count = 1});
  r.rt->register_task(1, [](TaskContext &, ByteView) {}, 5ms);
  auto t0 = Clock::now();
  Event e = r.rt->launch(ProcessorId(0), 1, {}, {});
  r.rt->wait(e, 5s);
  CHECK(Clock::now() - t0 >= 5ms);
  auto tl = r.machine->device_timeline();
  CHECK(tl.size() == 1);
}

TEST_CASE("a stencil step runs every task once")
{
  Rig r({.processor_count = 4, .memory_count = 1});
  std::atomic<int> ran{0};
  r.rt->register_task(1, [&](TaskContext &, ByteView) { ran++; });
  std::vector<Event> evs;
  for(int c = 0; c < 8; c++)
    evs.push_back(r.rt->launch(ProcessorId(c % 4), 1, {}, {}));
  r.rt->wait(r.rt->merge_events(evs), 5s);
  CHECK(ran == 8);
}

TEST_CASE("each launched task costs at least two runtime messages")
{
  Rig r({.processor_count = 4, .memory_count = 1});
  r.rt->register_task(1, [](TaskContext &, ByteView) {});
  r.actors->run_until_quiescent(1s);
  r.actors->reset_stats();
  constexpr int T = 64;
  Event prev = Event::none();
  std::vector<Event> evs;
  for(int t = 0; t < T; t++) {
    prev = r.rt->launch(ProcessorId(t % 4), 1, {}, std::vector{prev});
    evs.push_back(prev);
  }
  r.rt->wait(prev, 10s);
  MessageStats st = r.actors->run_until_quiescent(5s);
  CHECK(st.total >= 2 * T);
  CHECK(r.rt->executed() >= T);
}

TEST_CASE("op log records each operation")
{
  Rig r;
  r.rt->set_op_logging(true);
  r.rt->register_task(1, [](TaskContext &, ByteView) {});
  Event e = r.rt->launch(ProcessorId(1), 1, {}, {});
  r.rt->wait(e, 5s);
  r.actors->run_until_quiescent(1s);
  auto log = r.rt->op_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0].kind == OpRecord::Kind::TASK);
  CHECK(log[0].tid == 1);
  CHECK(log[0].end >= log[0].start);
}

TEST_CASE("event table waits time out")
{
  EventTable t;
  Event e = t.create();
  CHECK_THROWS_AS(t.wait(e, 1ms), TimeoutError);
  int calls = 0;
  CHECK(t.subscribe(e, [&](bool p) {
    calls++;
    CHECK(p);
  }));
  t.trigger(e, true);
  CHECK(calls == 1);
  CHECK_FALSE(t.subscribe(e, [&](bool) { calls++; }));
  CHECK(calls == 1);
  CHECK(t.has_triggered(Event::none()));
}
