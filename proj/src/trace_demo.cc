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

#include "taskdual/implicit.h"

#include "taskdual/serialize.h"
#include "taskdual/verify.h"

#include <cstring>
#include <random>

namespace taskdual {

  namespace {

    constexpr TaskId DEMO_TASK = 11;

    struct DemoOp {
      ProcessorId proc;
      std::vector<std::pair<std::uint32_t, Privilege>> accesses; // region index
    };

    std::vector<DemoOp> demo_body(const TraceDemoConfig &cfg)
    {
      std::mt19937_64 rng(cfg.seed);
      auto pick = [&](std::uint32_t n) {
        return static_cast<std::uint32_t>(std::uniform_int_distribution<std::uint32_t>(0, n - 1)(rng));
      };
      std::vector<DemoOp> ops;
      for(std::uint32_t k = 0; k < cfg.ops; k++) {
        DemoOp op{ProcessorId(pick(cfg.processors)), {}};
        std::uint32_t n = 1 + pick(3);
        for(std::uint32_t i = 0; i < n; i++) {
          std::uint32_t r = pick(cfg.regions);
          bool dup = false;
          for(auto &a : op.accesses)
            dup |= a.first == r;
          if(dup)
            continue;
          Privilege priv = static_cast<Privilege>(pick(3));
          op.accesses.emplace_back(r, priv);
        }
        // every op produces something
        bool writes = false;
        for(auto &a : op.accesses)
          writes |= a.second != Privilege::READ;
        if(!writes)
          op.accesses.front().second = Privilege::READ_WRITE;
        ops.push_back(std::move(op));
      }
      return ops;
    }

    // Arguments: salt, then (memory, offset, privilege) per access.
    Bytes demo_args(std::uint64_t salt, std::span<const AccessDecl> acc)
    {
      ByteWriter w;
      w << salt << static_cast<std::uint32_t>(acc.size());
      for(const AccessDecl &a : acc)
        w << a.region.memory.value() << static_cast<std::uint64_t>(a.region.offset)
          << static_cast<std::uint8_t>(a.privilege);
      return w.take();
    }

    void demo_task(TaskContext &ctx, ByteView args)
    {
      ByteReader r(args);
      std::uint64_t salt = 0;
      std::uint32_t n = 0;
      r >> salt >> n;
      struct A {
        Allocation a;
        Privilege p;
      };
      std::vector<A> acc;
      for(std::uint32_t i = 0; i < n; i++) {
        std::uint32_t m = 0;
        std::uint64_t off = 0;
        std::uint8_t p = 0;
        r >> m >> off >> p;
        acc.push_back({Allocation{MemoryId(m), off, 8}, static_cast<Privilege>(p)});
      }
      auto load = [&](const Allocation &a) {
        std::uint64_t v = 0;
        std::memcpy(&v, ctx.bytes(a).data(), 8);
        return v;
      };
      std::uint64_t h = mix64(salt);
      for(const A &x : acc)
        if(x.p != Privilege::WRITE)
          h = mix64(h ^ load(x.a));
      std::uint64_t i = 0;
      for(const A &x : acc) {
        if(x.p == Privilege::READ)
          continue;
        std::uint64_t v = mix64(h + i++);
        std::memcpy(ctx.bytes(x.a).data(), &v, 8);
      }
    }

  } // namespace

  TraceDemoResult run_trace_demo(const TraceDemoConfig &cfg)
  {
    if(cfg.iterations == 0 || cfg.ops == 0 || cfg.regions == 0)
      throw ValidationError("trace demo needs at least one iteration, op and region");
    ShardingPlan plan = ShardingPlan::blocked(cfg.processors, cfg.shards);

    MachineSpec spec;
    spec.processor_count = cfg.processors;
    auto machine = Machine::create(spec);
    ActorRuntime actors(*machine);
    TaskRuntime rt(*machine, actors);
    rt.register_task(DEMO_TASK, demo_task);

    const std::vector<DemoOp> body = demo_body(cfg);
    TraceDemoResult result;
    result.replayed = cfg.iterations > 1;

    // mode 0 untraced, 1 memoized, 2 compiled
    for(int mode = 0; mode < 3; mode++) {
      ImplicitRuntime ir(rt);
      std::vector<Allocation> regions;
      for(std::uint32_t i = 0; i < cfg.regions; i++)
        regions.push_back(ir.create_region(MemoryId(0), 8));
      std::vector<std::vector<AccessDecl>> accesses;
      std::vector<Bytes> args;
      for(std::uint32_t k = 0; k < body.size(); k++) {
        std::vector<AccessDecl> acc;
        for(auto [r, p] : body[k].accesses)
          acc.push_back({regions[r], p});
        args.push_back(demo_args(mix64(cfg.seed ^ (std::uint64_t(k) << 20)), acc));
        accesses.push_back(std::move(acc));
      }
      auto issue_body = [&] {
        for(std::uint32_t k = 0; k < body.size(); k++)
          ir.issue(body[k].proc, DEMO_TASK, args[k], accesses[k]);
      };

      double per_iter = 0;
      if(mode == 0) {
        TimePoint t0 = Clock::now();
        for(std::uint32_t it = 0; it < cfg.iterations; it++)
          issue_body();
        ir.fence();
        per_iter = std::chrono::duration<double, std::nano>(Clock::now() - t0).count() /
                   cfg.iterations;
      } else {
        ir.begin_trace(1);
        issue_body();
        ir.end_trace(1);
        if(mode == 2) {
          const ShardedTrace &st = ir.lowered(1, plan);
          result.ext_pairs = st.pairs.size();
          result.trace_edges = ir.trace(1).edges.size();
        }
        ir.fence();
        if(result.replayed) {
          TimePoint t0 = Clock::now();
          for(std::uint32_t it = 1; it < cfg.iterations; it++)
            ir.replay(1, mode == 1 ? ReplayMode::MEMOIZED : ReplayMode::COMPILED, plan);
          ir.fence();
          per_iter = std::chrono::duration<double, std::nano>(Clock::now() - t0).count() /
                     (cfg.iterations - 1);
        }
      }
      (mode == 0 ? result.untraced_ns : mode == 1 ? result.memoized_ns : result.compiled_ns) =
        per_iter;

      Bytes state;
      for(const Allocation &a : regions) {
        auto b = machine->bytes(a);
        state.insert(state.end(), b.begin(), b.end());
      }
      result.states.push_back(std::move(state));
    }
    result.states_equal =
      result.states[0] == result.states[1] && result.states[0] == result.states[2];

    // shard-crossing edges of the analysis, computed without the runtime
    std::vector<IssuedOp> ops;
    for(std::uint32_t k = 0; k < body.size(); k++) {
      IssuedOp op;
      op.seq = k;
      op.proc = body[k].proc;
      for(auto [r, p] : body[k].accesses)
        op.accesses.push_back({Allocation{MemoryId(0), std::size_t(r) * 16, 8}, p});
      ops.push_back(std::move(op));
    }
    for(auto [a, b] : analyze_dependences(ops))
      if(plan.shard_of[body[a].proc.value()] != plan.shard_of[body[b].proc.value()])
        result.expected_ext_pairs++;
    return result;
  }

} // namespace taskdual
