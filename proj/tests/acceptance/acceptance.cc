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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include "support/actor_programs.h"
#include "support/dependence_oracle.h"
#include "support/oracles.h"
#include "support/shuffler.h"
#include "taskdual/bench.h"
#include "taskdual/implicit.h"
#include "taskdual/verify.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <sstream>

using namespace taskdual;
using namespace taskdual::testing;
using namespace std::chrono_literals;

namespace {

  struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string &what)
    {
      if(!ok && pass)
        detail << "first failure: " << what << "; ";
      pass = pass && ok;
    }
  };

  int failures = 0;

  void report(const char *name, Outcome &o)
  {
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.str().c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }

  template <typename Fn>
  void criterion(const char *name, Fn fn)
  {
    Outcome o;
    try {
      fn(o);
    } catch(const std::exception &e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    report(name, o);
  }

  double seconds_since(TimePoint t0)
  {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  }

  std::uint32_t processors()
  {
    if(const char *env = std::getenv("TASKDUAL_PROCS"))
      if(int n = std::atoi(env); n > 0)
        return static_cast<std::uint32_t>(n);
    return 4;
  }

  struct Rig {
    std::unique_ptr<Machine> machine;
    std::unique_ptr<ActorRuntime> actors;
    std::unique_ptr<TaskRuntime> rt;

    explicit Rig(const MachineSpec &spec)
      : machine(Machine::create(spec))
      , actors(std::make_unique<ActorRuntime>(*machine))
      , rt(std::make_unique<TaskRuntime>(*machine, *actors))
    {}
    ~Rig()
    {
      rt.reset();
      actors.reset();
    }
  };

  // Sequential evaluation of a random DAG written from its definition: a
  // task hashes its salt with the cells of its predecessors in id order, a
  // copy duplicates its source cell.
  std::vector<std::uint64_t> sequential_values(const RandomDag &dag)
  {
    const TaskGraph &g = dag.graph;
    std::vector<std::uint64_t> value(g.size(), 0);
    for(NodeId v : g.topological_order()) {
      const GraphNode &n = g.node(v);
      if(n.is_task()) {
        std::vector<NodeId> preds;
        for(std::uint32_t e : g.in_edges(v))
          preds.push_back(g.edges()[e].src);
        std::ranges::sort(preds);
        std::uint64_t h = mix64(mix64(dag.seed * 0x100000001b3ull + v));
        for(NodeId u : preds)
          h = mix64(h ^ value[u]);
        value[v] = h;
      } else if(n.is_copy()) {
        value[v] = value[dag.copy_source[v]];
      }
    }
    return value;
  }

  struct SuiteResult {
    std::uint64_t graphs = 0, executions = 0, mismatches = 0, bad_tally = 0, underflows = 0,
                  bad_counters = 0, oracle_disagreements = 0, bad_cross = 0, shuffled = 0;
  };

  // Runs every seed through a compiled graph `replays` times and checks
  // memory, tallies, counters and cross-message counts.
  SuiteResult run_random_suite(std::uint64_t seeds, std::uint32_t replays, bool shuffle)
  {
    RandomDagParams params;
    MachineSpec spec;
    spec.processor_count = params.processors;
    spec.memory_count = params.memories;
    spec.memory_capacity = std::size_t(64) << 20;
    Rig rig(spec);
    prepare_hash_task(*rig.rt);
    SuiteResult out;
    for(std::uint64_t seed = 1; seed <= seeds; seed++) {
      RandomDag shape = random_dag(seed, params);
      std::vector<Allocation> bases;
      for(std::uint32_t m = 0; m < params.memories; m++)
        bases.push_back(rig.machine->allocate(MemoryId(m), shape.memory_bytes[m]));
      RandomDag dag = random_dag(seed, params, bases);
      auto want = sequential_values(dag);
      out.oracle_disagreements += want != oracle_values(dag);
      // edge-owner oracle: resource of each endpoint
      auto resource = [&](NodeId v) {
        const GraphNode &n = dag.graph.node(v);
        if(const auto *t = std::get_if<TaskNode>(&n.kind))
          return std::tuple(0u, t->proc.value(), 0u);
        const auto &c = std::get<CopyNode>(n.kind);
        return std::tuple(1u, c.src.memory.value(), c.dst.memory.value());
      };
      std::uint64_t cross = 0;
      for(const Edge &e : dag.graph.edges())
        cross += resource(e.src) != resource(e.dst);

      auto cg = CompiledGraph::compile(*rig.rt, dag.graph);
      std::optional<Shuffler> shuffler;
      if(shuffle) {
        shuffler.emplace(seed);
        cg->set_edge_interposer(shuffler->interposer());
      }
      out.graphs++;
      for(std::uint32_t r = 0; r < replays; r++) {
        for(const Allocation &b : bases)
          std::ranges::fill(rig.machine->bytes(b), std::byte{0});
        rig.rt->wait(cg->execute().done, 60s);
        out.executions++;
        for(NodeId v = 0; v < dag.graph.size(); v++) {
          std::uint64_t got = 0;
          std::memcpy(&got, rig.machine->bytes(bases[dag.cell_memory[v]]).data() + dag.cell_offset[v],
                      sizeof(got));
          out.mismatches += got != want[v];
        }
        for(std::uint32_t t : cg->execution_tally())
          out.bad_tally += t != 1;
        out.underflows += cg->counter_underflows();
        auto counters = cg->counters();
        for(NodeId v = 0; v < dag.graph.size(); v++)
          out.bad_counters += counters[v] != static_cast<std::int32_t>(cg->plan().in_degree[v]);
        out.bad_cross += cg->message_stats().cross_worker_messages != cross;
      }
      if(shuffler)
        out.shuffled += shuffler->seen();
    }
    return out;
  }

  std::optional<SuiteResult> full_suite;

  void oracle_equivalence(Outcome &o)
  {
    TimePoint t0 = Clock::now();
    full_suite = run_random_suite(1000, 2, false);
    double secs = seconds_since(t0);
    const SuiteResult &s = *full_suite;
    o.require(s.graphs == 1000, "graph count");
    o.require(s.mismatches == 0, "memory differs from the sequential oracle");
    o.require(s.oracle_disagreements == 0, "library oracle disagrees with the test oracle");
    o.require(secs < 300, "took longer than 5 minutes");
    o.detail << s.graphs << " graphs, " << s.executions << " executions, " << s.mismatches
             << " mismatched cells, " << secs << " s (limit 300 s)";
  }

  void message_minimality(Outcome &o)
  {
    Rig rig({.processor_count = 4, .memory_count = 1});
    for(TaskId t = 1; t <= 4; t++)
      rig.rt->register_task(t, [](TaskContext &, ByteView) {});
    rig.rt->register_task(BENCH_TASK, [](TaskContext &, ByteView) {});

    auto diamond = CompiledGraph::compile(*rig.rt, diamond_graph());
    rig.rt->wait(diamond->execute().done, 10s);
    std::uint64_t dcross = diamond->message_stats().cross_worker_messages;
    o.require(dcross == 2, "diamond cross messages != 2");

    TaskGraph g = generate_graph({PatternKind::STENCIL, 8, 16}, round_robin(8, 4));
    std::uint64_t want = 0;
    for(auto [s, d] : stencil_edges(8, 16))
      want += (s % 8) % 4 != (d % 8) % 4;
    auto cg = CompiledGraph::compile(*rig.rt, g);
    std::uint64_t wrong = 0, first = 0;
    for(int rep = 0; rep < 100; rep++) {
      rig.rt->wait(cg->execute().done, 10s);
      std::uint64_t got = cg->message_stats().cross_worker_messages;
      if(rep == 0)
        first = got;
      wrong += got != want;
    }
    o.require(wrong == 0, "stencil cross messages differ from the edge-owner oracle");
    o.detail << "diamond " << dcross << " (want 2); stencil(8,16) over 4 workers " << first
             << " per run (oracle " << want << "), " << wrong << "/100 runs off";
  }

  void exactly_once(Outcome &o)
  {
    if(!full_suite)
      full_suite = run_random_suite(1000, 2, false);
    SuiteResult shuffled = run_random_suite(200, 2, true);
    for(const SuiteResult *s : {&*full_suite, &shuffled}) {
      o.require(s->bad_tally == 0, "node executed other than once");
      o.require(s->underflows == 0, "counter underflow");
      o.require(s->bad_counters == 0, "counter not re-armed to in-degree");
      o.require(s->mismatches == 0, "wrong memory under adversarial order");
      o.require(s->bad_cross == 0, "cross message count off");
    }
    o.require(shuffled.shuffled > 0, "no messages were reordered");
    o.detail << full_suite->executions << " random executions + " << shuffled.executions
             << " with " << shuffled.shuffled << " shuffled deliveries; bad tallies "
             << full_suite->bad_tally + shuffled.bad_tally << ", underflows "
             << full_suite->underflows + shuffled.underflows;
  }

  void overhead(Outcome &o)
  {
    TimePoint t0 = Clock::now();
    std::uint32_t procs = processors();
    double per_task[2] = {0, 0};
    System systems[2] = {System::GENERIC_TASK, System::COMPILED_GRAPH};
    for(int i = 0; i < 2; i++) {
      BenchConfig c;
      c.system = systems[i];
      c.pattern = {PatternKind::STENCIL, procs, 1024};
      c.processors = procs;
      c.granularities = {0ns};
      c.repetitions = 5;
      auto s = run_bench(c);
      per_task[i] = s.at(0).wall_ns / double(c.pattern.task_count());
    }
    double ratio = per_task[0] / per_task[1];
    double secs = seconds_since(t0);
    o.require(ratio >= 1.5, "compiled overhead above generic/1.5");
    o.require(secs < 120, "took longer than 2 minutes");
    o.detail << "stencil(" << procs << ",1024) empty tasks: generic " << per_task[0]
             << " ns/task, compiled " << per_task[1] << " ns/task, improvement " << ratio
             << "x (need >= 1.5x), " << secs << " s";
  }

  void metg(Outcome &o)
  {
    std::vector<Sample> curve(4);
    double pts[4][2] = {{1e3, 0.10}, {1e4, 0.40}, {1e5, 0.80}, {1e6, 0.99}};
    for(int i = 0; i < 4; i++) {
      curve[i].granularity_ns = pts[i][0];
      curve[i].rate = pts[i][1];
    }
    MetgResult syn = compute_metg(curve, 0.5);
    o.require(syn.metg_ns && *syn.metg_ns == 100000.0, "synthetic curve METG != 100us");

    std::uint32_t procs = processors();
    std::vector<Nanos> sweep;
    for(double us : {0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 64.0,
                     128.0, 256.0})
      sweep.push_back(Nanos(static_cast<std::int64_t>(us * 1000)));
    std::optional<double> m[2];
    System systems[2] = {System::GENERIC_TASK, System::COMPILED_GRAPH};
    for(int i = 0; i < 2; i++) {
      BenchConfig c;
      c.system = systems[i];
      c.pattern = {PatternKind::STENCIL, procs, 128};
      c.processors = procs;
      c.granularities = sweep;
      c.repetitions = 5;
      m[i] = compute_metg(run_bench(c), 0.5).metg_ns;
    }
    o.require(m[0] && m[1], "a system never reached 50% efficiency");
    o.require(m[0] && m[1] && *m[1] < *m[0], "compiled METG not below generic");
    auto show = [](const std::optional<double> &v) {
      return v ? std::to_string(*v / 1000.0) + " us" : std::string("none");
    };
    o.detail << "synthetic " << show(syn.metg_ns) << " (want 100 us); measured METG(50) generic "
             << show(m[0]) << ", compiled " << show(m[1]);
  }

  void duality(Outcome &o)
  {
    std::uint32_t procs = 4;
    auto machine = Machine::create({.processor_count = procs});
    std::size_t programs = 0, equal = 0;
    std::uint64_t sends = 0, launches = 0;
    for(const ActorProgram &prog : actor_corpus(procs)) {
      ProgramInstance a = prog.make();
      ProgramInstance b = prog.make();
      ProgramOutcome native = run_native(*machine, a);
      ProgramOutcome lifted = run_lifted(*machine, b);
      programs++;
      bool same = native.handled == lifted.handled && native.states == lifted.states &&
                  native.stats.total == lifted.sends;
      equal += same;
      o.require(same, prog.name + " differs between runtimes");
      o.require(lifted.launches == lifted.sends, prog.name + " launches != sends");
      sends += lifted.sends;
      launches += lifted.launches;
      if(b.diamond) {
        o.require(std::ranges::count(b.diamond->order, "f4") == 1, "lifted diamond f4 count");
        o.require(static_cast<P2Actor &>(*b.placements[1].actor).count == 0,
                  "lifted diamond count != 0");
      }
    }
    o.require(programs == 20, "corpus size");
    o.detail << equal << "/" << programs << " programs equivalent; " << launches
             << " launches for " << sends << " sends";
  }

  void run_ahead(Outcome &o)
  {
    MachineSpec spec{.processor_count = 2, .memory_count = 1, .device_count = 1,
                     .host_message_latency = 1ms};
    Rig rig(spec);
    rig.rt->register_task(1, [](TaskContext &, ByteView) {});
    std::vector<GraphNode> nodes;
    std::vector<Edge> edges;
    for(NodeId i = 0; i < 32; i++) {
      nodes.push_back({i, TaskNode{ProcessorId(0), 1, {}, Nanos(100us)}, "k" + std::to_string(i)});
      if(i)
        edges.push_back({i - 1, i});
    }
    TaskGraph g = TaskGraph::build(nodes, edges);

    auto timed = [&](CompiledGraph &cg) {
      TimePoint t0 = Clock::now();
      rig.rt->wait(cg.execute().done, 60s);
      return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    };
    auto plain = CompiledGraph::compile(*rig.rt, g);
    double slow = timed(*plain);

    auto fast_graph = CompiledGraph::compile(*rig.rt, async_transform(g));
    std::uint64_t waits_before = rig.machine->blocking_device_waits();
    double fast = timed(*fast_graph);
    std::uint64_t waits = rig.machine->blocking_device_waits() - waits_before;

    o.require(fast <= 3.2 + 10.0, "transformed chain slower than 13.2 ms");
    o.require(slow >= 32 * 1.1, "untransformed chain faster than 35.2 ms");
    o.require(waits == 0, "blocking device waits in the transformed run");
    o.detail << "transformed " << fast << " ms (limit 13.2), untransformed " << slow
             << " ms (floor 35.2), blocking waits " << waits;
  }

  void tracing(Outcome &o)
  {
    // Timing: median of three demo runs per mode.
    std::vector<double> untraced, compiled, memoized;
    bool equal = true, pairs_ok = true;
    std::uint64_t pairs = 0, expected = 0;
    for(int run = 0; run < 3; run++) {
      TraceDemoConfig cfg;
      cfg.processors = 4;
      cfg.shards = 2;
      cfg.iterations = 100;
      cfg.ops = 100;
      TraceDemoResult r = run_trace_demo(cfg);
      equal = equal && r.states_equal && r.states.size() == 3;
      pairs_ok = pairs_ok && r.ext_pairs == r.expected_ext_pairs;
      pairs = r.ext_pairs;
      expected = r.expected_ext_pairs;
      untraced.push_back(r.untraced_ns);
      memoized.push_back(r.memoized_ns);
      compiled.push_back(r.compiled_ns);
    }
    auto median = [](std::vector<double> v) {
      std::ranges::sort(v);
      return v[v.size() / 2];
    };
    double u = median(untraced), c = median(compiled), m = median(memoized);
    o.require(equal, "final memories differ between modes");
    o.require(pairs_ok, "demo ext pairs differ from its edge oracle");
    o.require(c <= u / 2, "compiled replay not 2x faster than untraced");

    // Independent check: record a 100-op trace and compare the sharded
    // lowering with the brute-force dependence edges.
    Rig rig({.processor_count = 4});
    rig.rt->register_task(1, [](TaskContext &, ByteView) {});
    ImplicitRuntime ir(*rig.rt);
    std::vector<Allocation> regions;
    for(int i = 0; i < 12; i++)
      regions.push_back(ir.create_region(MemoryId(0), 8));
    std::mt19937_64 rng(99);
    std::vector<IssuedOp> ops;
    ir.begin_trace(1);
    for(std::uint32_t k = 0; k < 100; k++) {
      IssuedOp op;
      op.seq = k;
      op.tid = 1;
      op.proc = ProcessorId(static_cast<std::uint32_t>(rng() % 4));
      std::uint32_t n = 1 + rng() % 3;
      for(std::uint32_t i = 0; i < n; i++) {
        Allocation r = regions[rng() % regions.size()];
        if(std::ranges::none_of(op.accesses, [&](const AccessDecl &a) { return a.region == r; }))
          op.accesses.push_back({r, static_cast<Privilege>(rng() % 3)});
      }
      ir.issue(op);
      ops.push_back(op);
    }
    ir.end_trace(1);
    ir.fence();
    ShardingPlan plan = ShardingPlan::blocked(4, 2);
    const ShardedTrace &st = ir.lowered(1, plan);
    std::set<std::pair<std::uint32_t, std::uint32_t>> want, got;
    for(auto [a, b] : brute_force_dependences(ops))
      if(plan.shard_of[ops[a].proc.value()] != plan.shard_of[ops[b].proc.value()])
        want.insert({a, b});
    for(const ExtPair &p : st.pairs)
      got.insert({p.src_op, p.dst_op});
    o.require(got == want && st.pairs.size() == want.size(),
              "recorded trace pairs differ from brute-force crossing edges");

    o.detail << "states identical " << (equal ? "yes" : "no") << "; per iteration untraced "
             << u / 1000 << " us, memoized " << m / 1000 << " us, compiled " << c / 1000
             << " us (speedup " << u / c << "x, need >= 2x); demo ext pairs " << pairs
             << " (oracle " << expected << "); recorded trace pairs " << got.size()
             << " (brute force " << want.size() << ")";
  }

  void graph_passes(Outcome &o)
  {
    RandomDagParams params;
    std::uint64_t checked = 0;
    for(std::uint64_t seed = 1; seed <= 1000; seed++) {
      TaskGraph g = random_dag(seed, params).graph;
      o.require(g.size() <= 64, "random graph too large");
      TaskGraph r = transitive_reduce(g);
      o.require(reachability(r) == reachability(g), "reduce changed reachability");
      o.require(host_projection(async_transform(g)) == g, "projection identity (host only)");

      std::vector<GraphNode> nodes = g.nodes();
      for(GraphNode &n : nodes)
        if(auto *t = std::get_if<TaskNode>(&n.kind); t && mix64(seed + n.id) % 2)
          t->device_work = Nanos(1000);
      TaskGraph dev = TaskGraph::build(nodes, g.edges());
      TaskGraph at = async_transform(dev);
      o.require(host_projection(at) == dev, "projection identity (device)");
      o.require(reachability(transitive_reduce(at)) == reachability(at),
                "reduce changed reachability on a transformed graph");
      o.require(from_json(to_json(g)) == g, "json round trip");
      o.require(from_json(to_json(at)) == at, "json round trip (transformed)");
      checked++;
    }
    o.detail << checked << " random graphs: reduce, projection and json round trip checked";
  }

} // namespace

int main()
{
  criterion("oracle-equivalence", oracle_equivalence);
  criterion("message-minimality", message_minimality);
  criterion("exactly-once", exactly_once);
  criterion("overhead-reduction", overhead);
  criterion("metg-pipeline", metg);
  criterion("duality", duality);
  criterion("async-run-ahead", run_ahead);
  criterion("tracing", tracing);
  criterion("graph-passes", graph_passes);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
