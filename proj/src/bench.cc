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

#include "taskdual/bench.h"

#include "taskdual/duality.h"
#include "taskdual/implicit.h"
#include "taskdual/serialize.h"
#include "taskdual/verify.h"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <ostream>

namespace taskdual {

  std::string Pattern::name() const
  {
    return kind == PatternKind::STENCIL ? "stencil" : "independent";
  }

  void Pattern::validate() const
  {
    if(width == 0)
      throw ValidationError("pattern width must be at least 1");
    if(steps == 0)
      throw ValidationError("pattern steps must be at least 1");
  }

  std::vector<std::uint32_t> Pattern::dependencies(std::uint32_t t, std::uint32_t c) const
  {
    std::vector<std::uint32_t> out;
    if(t == 0 || kind == PatternKind::INDEPENDENT)
      return out;
    for(std::uint32_t d = (c == 0 ? 0 : c - 1); d <= std::min(c + 1, width - 1); d++)
      out.push_back(d);
    return out;
  }

  PatternKind parse_pattern_kind(std::string_view s)
  {
    if(s == "stencil")
      return PatternKind::STENCIL;
    if(s == "independent")
      return PatternKind::INDEPENDENT;
    throw ValidationError("unknown pattern '" + std::string(s) + "'");
  }

  std::string_view to_string(System s)
  {
    switch(s) {
    case System::GENERIC_TASK:
      return "generic-task";
    case System::COMPILED_GRAPH:
      return "compiled-graph";
    case System::NATIVE_ACTOR:
      return "native-actor";
    case System::ACTOR_ON_TASK:
      return "actor-on-task";
    case System::IMPLICIT_MEMOIZED:
      return "implicit-memoized";
    case System::IMPLICIT_COMPILED:
      return "implicit-compiled";
    }
    return "?";
  }

  System parse_system(std::string_view s)
  {
    for(System sys : ALL_SYSTEMS)
      if(s == to_string(sys))
        return sys;
    if(s == "generic")
      return System::GENERIC_TASK;
    if(s == "compiled")
      return System::COMPILED_GRAPH;
    if(s == "native")
      return System::NATIVE_ACTOR;
    if(s == "lifted")
      return System::ACTOR_ON_TASK;
    if(s == "memoized")
      return System::IMPLICIT_MEMOIZED;
    throw ValidationError("unknown system '" + std::string(s) + "'");
  }

  std::vector<ProcessorId> round_robin(std::uint32_t width, std::uint32_t processors)
  {
    if(processors == 0)
      throw ValidationError("need at least one processor");
    std::vector<ProcessorId> out;
    for(std::uint32_t c = 0; c < width; c++)
      out.push_back(ProcessorId(c % processors));
    return out;
  }

  namespace {

    TaskGraph pattern_graph(const Pattern &pattern, std::span<const ProcessorId> mapping,
                            const std::function<Bytes(std::uint32_t, std::uint32_t)> &args)
    {
      pattern.validate();
      if(mapping.size() != pattern.width)
        throw ValidationError("mapping has " + std::to_string(mapping.size()) +
                              " entries for width " + std::to_string(pattern.width));
      std::vector<GraphNode> nodes;
      std::vector<Edge> edges;
      nodes.reserve(pattern.task_count());
      for(std::uint32_t t = 0; t < pattern.steps; t++) {
        for(std::uint32_t c = 0; c < pattern.width; c++) {
          NodeId id = t * pattern.width + c;
          nodes.push_back(GraphNode{
            id, TaskNode{mapping[c], BENCH_TASK, args ? args(t, c) : Bytes{}, std::nullopt},
            "t" + std::to_string(t) + "c" + std::to_string(c)});
          for(std::uint32_t d : pattern.dependencies(t, c))
            edges.push_back(Edge{(t - 1) * pattern.width + d, id, EdgeKind::HOST});
        }
      }
      return TaskGraph::build(std::move(nodes), std::move(edges));
    }

    std::uint64_t column_salt(std::uint32_t c) { return mix64(0x7461736b64ull + c); }

    // Token of task (t, c) from the tokens of its dependencies.
    std::uint64_t token(std::uint32_t c, std::uint32_t parity, std::span<const std::uint64_t> in)
    {
      std::uint64_t h = mix64(column_salt(c) ^ parity);
      for(std::uint64_t v : in)
        h = mix64(h ^ v);
      return h;
    }

    std::uint64_t fold_columns(std::span<const std::uint64_t> even,
                               std::span<const std::uint64_t> odd)
    {
      std::uint64_t acc = 0;
      for(std::size_t c = 0; c < even.size(); c++) {
        acc = mix64(acc ^ even[c]);
        acc = mix64(acc ^ odd[c]);
      }
      return acc;
    }

    double ns_per_iteration()
    {
      static const double value = [] {
        std::uint64_t iters = 1 << 16;
        for(;;) {
          TimePoint t0 = Clock::now();
          busy_work(iters);
          double ns = std::chrono::duration<double, std::nano>(Clock::now() - t0).count();
          if(ns > 20e6)
            return ns / double(iters);
          iters *= 2;
        }
      }();
      return value;
    }

    struct BodyCounters {
      std::atomic<std::uint64_t> executed{0};
      std::atomic<std::uint64_t> busy_ns{0};
    };

    // Arguments: parity, column, iterations, output cell, input cells.
    Bytes body_args(std::uint32_t parity, std::uint32_t c, std::uint64_t iterations,
                    const Allocation &out, std::span<const Allocation> in)
    {
      ByteWriter w;
      w << parity << c << iterations;
      auto put = [&](const Allocation &a) {
        w << a.memory.value() << static_cast<std::uint64_t>(a.offset);
      };
      put(out);
      w << static_cast<std::uint32_t>(in.size());
      for(const Allocation &a : in)
        put(a);
      return w.take();
    }

    void run_body(Machine &machine, ByteView args, BodyCounters &counters)
    {
      TimePoint t0 = Clock::now();
      ByteReader r(args);
      std::uint32_t parity = 0, c = 0, n = 0;
      std::uint64_t iterations = 0;
      r >> parity >> c >> iterations;
      auto get = [&] {
        std::uint32_t m = 0;
        std::uint64_t off = 0;
        r >> m >> off;
        return Allocation{MemoryId(m), off, sizeof(std::uint64_t)};
      };
      Allocation out = get();
      r >> n;
      std::uint64_t in[3] = {};
      if(n > 3)
        throw Error("bench task with more than 3 inputs");
      for(std::uint32_t i = 0; i < n; i++)
        std::memcpy(&in[i], machine.bytes(get()).data(), sizeof(std::uint64_t));
      busy_work(iterations);
      std::uint64_t h = token(c, parity, std::span(in, n));
      std::memcpy(machine.bytes(out).data(), &h, sizeof(h));
      counters.executed.fetch_add(1, std::memory_order_relaxed);
      counters.busy_ns.fetch_add(
        static_cast<std::uint64_t>(std::chrono::nanoseconds(Clock::now() - t0).count()),
        std::memory_order_relaxed);
    }

    struct Completion {
      std::mutex mutex;
      std::condition_variable cv;
      std::uint64_t remaining = 0;

      void reset(std::uint64_t n)
      {
        std::lock_guard lock(mutex);
        remaining = n;
      }
      void one()
      {
        std::lock_guard lock(mutex);
        if(--remaining == 0)
          cv.notify_all();
      }
      void wait()
      {
        std::unique_lock lock(mutex);
        if(!cv.wait_for(lock, std::chrono::minutes(10), [this] { return remaining == 0; }))
          throw TimeoutError("bench actor program did not finish");
      }
    };

    enum : MessageId
    {
      COLUMN_START = 1,
      COLUMN_ARRIVE,
    };

    struct ColumnShared {
      Machine *machine = nullptr;
      Pattern pattern;
      std::vector<ActorId> ids;
      std::vector<Bytes> args; // per node t*width + c
      BodyCounters *counters = nullptr;
      Completion done;
    };

    // Hand-written state machine for one column: counts arrivals per step
    // and runs the step once all of its inputs are in.
    class ColumnActor final : public Actor {
    public:
      ColumnActor(std::shared_ptr<ColumnShared> sh, std::uint32_t c)
        : sh_(std::move(sh))
        , c_(c)
        , arrivals_(sh_->pattern.steps, 0)
      {
        for(std::uint32_t t = 0; t < sh_->pattern.steps; t++)
          need_.push_back(sh_->pattern.kind == PatternKind::STENCIL
                            ? static_cast<std::uint32_t>(sh_->pattern.dependencies(t, c).size())
                            : (t == 0 ? 0 : 1));
      }

      void reset()
      {
        next_ = 0;
        std::ranges::fill(arrivals_, 0);
      }

      std::vector<MessageId> handled_messages() const override
      {
        return {COLUMN_START, COLUMN_ARRIVE};
      }

      void handle_message(MessageId mid, ActorRT &rt, ByteView args) override
      {
        if(mid == COLUMN_ARRIVE) {
          std::uint32_t t = 0;
          ByteReader(args) >> t;
          arrivals_.at(t)++;
        }
        const Pattern &p = sh_->pattern;
        while(next_ < p.steps && arrivals_[next_] == need_[next_]) {
          std::uint32_t t = next_++;
          run_body(*sh_->machine, sh_->args[std::size_t(t) * p.width + c_], *sh_->counters);
          if(t + 1 == p.steps) {
            sh_->done.one();
            break;
          }
          ByteWriter w;
          w << (t + 1);
          Bytes msg = w.take();
          if(p.kind == PatternKind::INDEPENDENT) {
            rt.send_message(sh_->ids[c_], COLUMN_ARRIVE, msg);
            break;
          }
          for(std::uint32_t d = (c_ == 0 ? 0 : c_ - 1); d <= std::min(c_ + 1, p.width - 1); d++)
            rt.send_message(sh_->ids[d], COLUMN_ARRIVE, msg);
        }
      }

    private:
      std::shared_ptr<ColumnShared> sh_;
      std::uint32_t c_;
      std::uint32_t next_ = 0;
      std::vector<std::uint32_t> arrivals_;
      std::vector<std::uint32_t> need_;
    };

    // Per-task cost used by the virtual-time model, in nanoseconds.
    double model_overhead_ns(System s)
    {
      switch(s) {
      case System::GENERIC_TASK:
        return 6000;
      case System::COMPILED_GRAPH:
        return 2000;
      case System::NATIVE_ACTOR:
        return 1500;
      case System::ACTOR_ON_TASK:
        return 5000;
      case System::IMPLICIT_MEMOIZED:
        return 7000;
      case System::IMPLICIT_COMPILED:
        return 2500;
      }
      return 0;
    }

    double median(std::vector<double> v)
    {
      std::sort(v.begin(), v.end());
      std::size_t n = v.size();
      return (n % 2) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }

    std::string format_double(const char *fmt, double v)
    {
      char buf[64];
      std::snprintf(buf, sizeof(buf), fmt, v);
      return buf;
    }

  } // namespace

  TaskGraph generate_graph(const Pattern &pattern, std::span<const ProcessorId> mapping)
  {
    return pattern_graph(pattern, mapping, {});
  }

  void busy_work(std::uint64_t iterations)
  {
    std::uint64_t x = 1;
    for(std::uint64_t i = 0; i < iterations; i++) {
      x = x * 6364136223846793005ull + 1442695040888963407ull;
      asm volatile("" : "+r"(x));
    }
  }

  std::uint64_t busy_iterations(Nanos d)
  {
    if(d.count() <= 0)
      return 0;
    return std::max<std::uint64_t>(
      1, static_cast<std::uint64_t>(double(d.count()) / ns_per_iteration() + 0.5));
  }

  std::uint64_t expected_checksum(const Pattern &pattern)
  {
    pattern.validate();
    std::vector<std::uint64_t> buf[2] = {std::vector<std::uint64_t>(pattern.width, 0),
                                         std::vector<std::uint64_t>(pattern.width, 0)};
    for(std::uint32_t t = 0; t < pattern.steps; t++) {
      const std::uint32_t parity = t % 2;
      for(std::uint32_t c = 0; c < pattern.width; c++) {
        std::vector<std::uint64_t> in;
        for(std::uint32_t d : pattern.dependencies(t, c))
          in.push_back(buf[1 - parity][d]);
        buf[parity][c] = token(c, parity, in);
      }
    }
    return fold_columns(buf[0], buf[1]);
  }

  void BenchConfig::validate() const
  {
    pattern.validate();
    if(processors == 0)
      throw ValidationError("need at least one processor");
    if(!mapping.empty()) {
      if(mapping.size() != pattern.width)
        throw ValidationError("mapping must name a processor per column");
      for(ProcessorId p : mapping)
        if(p.value() >= processors)
          throw ValidationError("mapping names processor " + std::to_string(p.value()) +
                                " beyond the " + std::to_string(processors) + " available");
    }
    if(granularities.empty())
      throw ValidationError("no granularities given");
    for(Nanos g : granularities)
      if(g.count() < 0)
        throw ValidationError("granularity must not be negative");
    if(repetitions < 3)
      throw ValidationError("at least 3 repetitions are required");
  }

  std::vector<Sample> run_bench(const BenchConfig &cfg)
  {
    cfg.validate();
    const Pattern &p = cfg.pattern;
    const std::vector<ProcessorId> mapping =
      cfg.mapping.empty() ? round_robin(p.width, cfg.processors) : cfg.mapping;
    const std::uint64_t want = expected_checksum(p);

    MachineSpec spec;
    spec.processor_count = cfg.processors;
    spec.memory_count = 1;
    auto machine = Machine::create(spec);
    ActorRuntime actors(*machine);
    TaskRuntime rt(*machine, actors);
    BodyCounters counters;
    rt.register_task(BENCH_TASK, [&counters](TaskContext &ctx, ByteView args) {
      run_body(ctx.machine(), args, counters);
    });

    std::vector<Sample> samples;
    for(Nanos g : cfg.granularities) {
      const std::uint64_t iterations = cfg.virtual_time ? 0 : busy_iterations(g);

      std::unique_ptr<ImplicitRuntime> implicit;
      if(cfg.system == System::IMPLICIT_MEMOIZED || cfg.system == System::IMPLICIT_COMPILED)
        implicit = std::make_unique<ImplicitRuntime>(rt);

      // cells[parity][column]
      std::vector<Allocation> cells[2];
      for(std::uint32_t par = 0; par < 2; par++)
        for(std::uint32_t c = 0; c < p.width; c++)
          cells[par].push_back(implicit ? implicit->create_region(MemoryId(0), 8)
                                        : machine->allocate(MemoryId(0), 8));

      auto args_of = [&](std::uint32_t t, std::uint32_t c) {
        std::vector<Allocation> in;
        for(std::uint32_t d : p.dependencies(t, c))
          in.push_back(cells[1 - t % 2][d]);
        return body_args(t % 2, c, iterations, cells[t % 2][c], in);
      };

      std::function<void()> run;
      std::unique_ptr<CompiledGraph> compiled;
      std::unique_ptr<ActorOnTasks> lifted;
      std::shared_ptr<ColumnShared> shared;
      std::vector<std::shared_ptr<ColumnActor>> columns;
      TaskGraph graph;
      bool recorded = false;

      switch(cfg.system) {
      case System::GENERIC_TASK:
        graph = pattern_graph(p, mapping, args_of);
        run = [&] { rt.wait(execute_generic(rt, graph, {}).done, std::chrono::minutes(10)); };
        break;
      case System::COMPILED_GRAPH:
        compiled = CompiledGraph::compile(rt, pattern_graph(p, mapping, args_of));
        run = [&] { rt.wait(compiled->execute({}).done, std::chrono::minutes(10)); };
        break;
      case System::NATIVE_ACTOR:
      case System::ACTOR_ON_TASK: {
        shared = std::make_shared<ColumnShared>();
        shared->machine = machine.get();
        shared->pattern = p;
        shared->counters = &counters;
        for(std::uint32_t t = 0; t < p.steps; t++)
          for(std::uint32_t c = 0; c < p.width; c++)
            shared->args.push_back(args_of(t, c));
        ActorRT *target = &actors;
        if(cfg.system == System::ACTOR_ON_TASK) {
          lifted = std::make_unique<ActorOnTasks>(rt);
          target = lifted.get();
        }
        for(std::uint32_t c = 0; c < p.width; c++) {
          shared->ids.push_back(actors.allocate_actor_id());
          columns.push_back(std::make_shared<ColumnActor>(shared, c));
          target->register_actor(columns.back(), shared->ids.back(), mapping[c]);
        }
        run = [&, target] {
          for(auto &col : columns)
            col->reset();
          shared->done.reset(p.width);
          for(ActorId aid : shared->ids)
            target->send_message(aid, COLUMN_START, {});
          shared->done.wait();
        };
        break;
      }
      case System::IMPLICIT_MEMOIZED:
      case System::IMPLICIT_COMPILED: {
        const ReplayMode mode = cfg.system == System::IMPLICIT_MEMOIZED ? ReplayMode::MEMOIZED
                                                                         : ReplayMode::COMPILED;
        run = [&, mode] {
          auto issue_step = [&](std::uint32_t t) {
            for(std::uint32_t c = 0; c < p.width; c++) {
              std::vector<AccessDecl> acc{{cells[t % 2][c], Privilege::WRITE}};
              for(std::uint32_t d : p.dependencies(t, c))
                acc.push_back({cells[1 - t % 2][d], Privilege::READ});
              implicit->issue(mapping[c], BENCH_TASK, args_of(t, c), std::move(acc));
            }
          };
          // steps 1.. repeat with period two, so a trace covers one pair
          issue_step(0);
          std::uint32_t t = 1;
          if(!recorded && t + 1 < p.steps) {
            implicit->begin_trace(1);
            issue_step(t);
            issue_step(t + 1);
            implicit->end_trace(1);
            recorded = true;
            t += 2;
          }
          for(; recorded && t + 1 < p.steps; t += 2)
            implicit->replay(1, mode);
          for(; t < p.steps; t++)
            issue_step(t);
          implicit->fence();
        };
        break;
      }
      }

      std::vector<double> walls;
      std::uint64_t executed = 0, busy = 0;
      std::uint64_t checksum = 0;
      for(std::uint32_t rep = 0; rep < cfg.warmups + cfg.repetitions; rep++) {
        for(auto &v : cells)
          for(const Allocation &a : v)
            std::ranges::fill(machine->bytes(a), std::byte{0});
        counters.executed = 0;
        counters.busy_ns = 0;
        TimePoint t0 = Clock::now();
        run();
        double wall = std::chrono::duration<double, std::nano>(Clock::now() - t0).count();

        std::vector<std::uint64_t> even(p.width), odd(p.width);
        for(std::uint32_t c = 0; c < p.width; c++) {
          std::memcpy(&even[c], machine->bytes(cells[0][c]).data(), 8);
          std::memcpy(&odd[c], machine->bytes(cells[1][c]).data(), 8);
        }
        checksum = fold_columns(even, odd);
        if(checksum != want)
          throw ChecksumMismatch(std::string(to_string(cfg.system)) + " produced checksum " +
                      to_hex(to_bytes(checksum)) + ", expected " + to_hex(to_bytes(want)));
        if(counters.executed.load() != p.task_count())
          throw ChecksumMismatch(std::string(to_string(cfg.system)) + " ran " +
                      std::to_string(counters.executed.load()) + " tasks, expected " +
                      std::to_string(p.task_count()));
        if(rep < cfg.warmups)
          continue;
        walls.push_back(wall);
        executed += counters.executed.load();
        busy += counters.busy_ns.load();
      }

      Sample s;
      s.system = cfg.system;
      s.pattern = p;
      s.requested = g;
      s.checksum = checksum;
      s.tasks_executed = p.task_count();
      if(cfg.virtual_time) {
        double per_proc = std::ceil(double(p.width) / double(cfg.processors));
        s.granularity_ns = double(g.count());
        s.wall_ns = double(p.steps) * per_proc * (double(g.count()) + model_overhead_ns(cfg.system));
        s.rate = double(p.task_count()) * double(g.count()) / (s.wall_ns * 1e-9);
      } else {
        s.granularity_ns = executed ? double(busy) / double(executed) : 0;
        s.wall_ns = median(walls);
        s.rate = double(p.task_count()) * double(iterations) / (s.wall_ns * 1e-9);
      }
      samples.push_back(s);
    }

    double peak = 0;
    for(const Sample &s : samples)
      peak = std::max(peak, s.rate);
    for(Sample &s : samples)
      s.efficiency = peak > 0 ? s.rate / peak : 0;
    return samples;
  }

  MetgResult compute_metg(std::vector<Sample> samples, double target)
  {
    if(samples.empty())
      throw ValidationError("compute_metg needs at least one sample");
    std::stable_sort(samples.begin(), samples.end(), [](const Sample &a, const Sample &b) {
      return a.granularity_ns < b.granularity_ns;
    });
    MetgResult r;
    for(const Sample &s : samples)
      r.peak_rate = std::max(r.peak_rate, s.rate);
    for(Sample &s : samples) {
      s.efficiency = r.peak_rate > 0 ? s.rate / r.peak_rate : 0;
      if(!r.metg_ns && s.efficiency >= target)
        r.metg_ns = s.granularity_ns;
    }
    r.curve = std::move(samples);
    return r;
  }

  void write_samples_csv(std::ostream &os, std::span<const Sample> samples, bool header)
  {
    if(header)
      os << "system,pattern,width,steps,granularity_ns,wall_ns,rate,efficiency\n";
    for(const Sample &s : samples)
      os << to_string(s.system) << ',' << s.pattern.name() << ',' << s.pattern.width << ','
         << s.pattern.steps << ',' << format_double("%.0f", s.granularity_ns) << ','
         << format_double("%.0f", s.wall_ns) << ',' << format_double("%.6g", s.rate) << ','
         << format_double("%.4f", s.efficiency) << '\n';
  }

  void write_metg_csv(std::ostream &os, std::span<const MetgResult> results, double target,
                      bool header)
  {
    if(header)
      os << "system,pattern,width,steps,target,metg_ns,peak_rate\n";
    for(const MetgResult &r : results) {
      if(r.curve.empty())
        continue;
      const Sample &s = r.curve.front();
      os << to_string(s.system) << ',' << s.pattern.name() << ',' << s.pattern.width << ','
         << s.pattern.steps << ',' << format_double("%.2f", target) << ','
         << (r.metg_ns ? format_double("%.0f", *r.metg_ns) : std::string("none")) << ','
         << format_double("%.6g", r.peak_rate) << '\n';
    }
  }

} // namespace taskdual
