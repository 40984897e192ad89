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

#include "taskdual/verify.h"

#include "taskdual/serialize.h"

#include <algorithm>
#include <cstring>
#include <map>
#include <random>

namespace taskdual {

  std::uint64_t mix64(std::uint64_t x)
  {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  namespace {

    std::uint64_t node_salt(std::uint64_t seed, NodeId v)
    {
      return mix64(seed * 0x100000001b3ull + v);
    }

    void put(ByteWriter &out, const Allocation &a)
    {
      out << a.memory.value() << static_cast<std::uint64_t>(a.offset)
          << static_cast<std::uint64_t>(a.size);
    }

    Allocation get(ByteReader &in)
    {
      std::uint32_t m = 0;
      std::uint64_t off = 0, size = 0;
      in >> m >> off >> size;
      return Allocation{MemoryId(m), off, size};
    }

    std::uint64_t load(std::span<const std::byte> bytes)
    {
      std::uint64_t v = 0;
      std::memcpy(&v, bytes.data(), sizeof(v));
      return v;
    }

  } // namespace

  RandomDag random_dag(std::uint64_t seed, const RandomDagParams &params,
                       std::span<const Allocation> bases)
  {
    if(params.processors == 0 || params.memories == 0 || params.max_nodes == 0)
      throw ValidationError("random_dag needs at least one processor, memory and node");
    std::mt19937_64 rng(seed);
    auto uniform = [&](std::uint64_t lo, std::uint64_t hi) {
      return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
    };
    auto coin = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };

    const std::uint32_t n = static_cast<std::uint32_t>(uniform(1, params.max_nodes));
    RandomDag dag;
    dag.seed = seed;
    dag.cell_memory.resize(n);
    dag.cell_offset.resize(n);
    dag.memory_bytes.assign(params.memories, 0);

    std::vector<std::int64_t> proc(n, -1);
    dag.copy_source.assign(n, NO_NODE);
    std::vector<NodeId> &copy_source = dag.copy_source;
    std::vector<NodeId> tasks_so_far;
    std::vector<std::vector<NodeId>> preds(n);
    for(NodeId v = 0; v < n; v++) {
      if(!tasks_so_far.empty() && coin(params.copy_probability)) {
        NodeId src = tasks_so_far[uniform(0, tasks_so_far.size() - 1)];
        copy_source[v] = src;
        std::uint32_t dst_mem = static_cast<std::uint32_t>(uniform(0, params.memories - 1));
        if(params.memories > 1 && dst_mem == dag.cell_memory[src])
          dst_mem = (dst_mem + 1) % params.memories;
        dag.cell_memory[v] = dst_mem;
        preds[v].push_back(src);
      } else {
        proc[v] = static_cast<std::int64_t>(uniform(0, params.processors - 1));
        dag.cell_memory[v] = static_cast<std::uint32_t>(proc[v] % params.memories);
        tasks_so_far.push_back(v);
      }
      dag.cell_offset[v] = dag.memory_bytes[dag.cell_memory[v]];
      dag.memory_bytes[dag.cell_memory[v]] += sizeof(std::uint64_t);
      for(NodeId u = 0; u < v; u++)
        if(u != copy_source[v] && coin(params.edge_probability))
          preds[v].push_back(u);
      std::sort(preds[v].begin(), preds[v].end());
    }

    auto cell = [&](NodeId v) {
      std::uint32_t m = dag.cell_memory[v];
      std::size_t base = bases.empty() ? 0 : bases[m].offset;
      return Allocation{MemoryId(m), base + dag.cell_offset[v], sizeof(std::uint64_t)};
    };

    std::vector<GraphNode> nodes;
    std::vector<Edge> edges;
    for(NodeId v = 0; v < n; v++) {
      GraphNode node;
      node.id = v;
      if(proc[v] >= 0) {
        ByteWriter args;
        args << node_salt(seed, v);
        put(args, cell(v));
        args << static_cast<std::uint64_t>(preds[v].size());
        for(NodeId u : preds[v])
          put(args, cell(u));
        node.kind = TaskNode{ProcessorId(static_cast<std::uint32_t>(proc[v])), HASH_TASK,
                             args.take(), std::nullopt};
        node.name = "t" + std::to_string(v);
      } else {
        node.kind = CopyNode{cell(copy_source[v]), cell(v)};
        node.name = "c" + std::to_string(v);
      }
      nodes.push_back(std::move(node));
      for(NodeId u : preds[v])
        edges.push_back(Edge{u, v, EdgeKind::HOST});
    }
    dag.graph = TaskGraph::build(std::move(nodes), std::move(edges));
    return dag;
  }

  std::vector<std::uint64_t> oracle_values(const RandomDag &dag)
  {
    const TaskGraph &g = dag.graph;
    const std::size_t n = g.size();
    std::vector<std::vector<NodeId>> preds(n);
    std::vector<std::vector<NodeId>> succs(n);
    std::vector<std::size_t> pending(n, 0);
    for(const Edge &e : g.edges()) {
      preds[e.dst].push_back(e.src);
      succs[e.src].push_back(e.dst);
      pending[e.dst]++;
    }
    std::vector<NodeId> ready;
    for(NodeId v = 0; v < n; v++)
      if(pending[v] == 0)
        ready.push_back(v);

    std::vector<std::uint64_t> value(n, 0);
    std::size_t visited = 0;
    while(!ready.empty()) {
      NodeId v = ready.back();
      ready.pop_back();
      visited++;
      const GraphNode &node = g.node(v);
      if(node.is_task()) {
        std::vector<NodeId> in = preds[v];
        std::sort(in.begin(), in.end());
        std::uint64_t h = mix64(node_salt(dag.seed, v));
        for(NodeId u : in)
          h = mix64(h ^ value[u]);
        value[v] = h;
      } else if(node.is_copy()) {
        value[v] = value[dag.copy_source[v]];
      }
      for(NodeId s : succs[v])
        if(--pending[s] == 0)
          ready.push_back(s);
    }
    if(visited != n)
      throw ValidationError("oracle: graph has a cycle");
    return value;
  }

  std::uint64_t cross_edge_oracle(const TaskGraph &g)
  {
    // resource key: (kind, a, b); kind 0 = processor, 1 = channel
    using Key = std::tuple<int, std::uint32_t, std::uint32_t>;
    const std::size_t n = g.size();
    std::vector<std::optional<Key>> key(n);
    std::optional<Key> smallest;
    for(const GraphNode &node : g.nodes()) {
      if(const auto *t = std::get_if<TaskNode>(&node.kind))
        key[node.id] = Key{0, t->proc.value(), 0};
      else if(const auto *c = std::get_if<CopyNode>(&node.kind))
        key[node.id] = Key{1, c->src.memory.value(), c->dst.memory.value()};
      if(key[node.id] && (!smallest || *key[node.id] < *smallest))
        smallest = key[node.id];
    }
    for(const GraphNode &node : g.nodes())
      if(const auto *a = std::get_if<AsyncNode>(&node.kind))
        key[node.id] = key[a->host];
    for(const GraphNode &node : g.nodes()) {
      if(!node.is_postcond())
        continue;
      NodeId last = NO_NODE;
      for(const Edge &e : g.edges())
        if(e.dst == node.id && !g.node(e.src).is_precond())
          last = (last == NO_NODE) ? e.src : std::max(last, e.src);
      key[node.id] = (last != NO_NODE) ? key[last] : smallest;
    }
    std::uint64_t cross = 0;
    for(const Edge &e : g.edges()) {
      if(e.kind == EdgeKind::ASYNC || !key[e.src] || !key[e.dst])
        continue;
      if(*key[e.src] != *key[e.dst])
        cross++;
    }
    return cross;
  }

  void prepare_hash_task(TaskRuntime &rt)
  {
    if(rt.find_task(HASH_TASK) != nullptr)
      return;
    rt.register_task(HASH_TASK, [](TaskContext &ctx, ByteView args) {
      ByteReader in(args);
      std::uint64_t salt = 0, count = 0;
      in >> salt;
      Allocation out = get(in);
      in >> count;
      std::uint64_t h = mix64(salt);
      for(std::uint64_t i = 0; i < count; i++)
        h = mix64(h ^ load(ctx.bytes(get(in))));
      std::memcpy(ctx.bytes(out).data(), &h, sizeof(h));
    });
  }

  namespace {

    std::optional<std::string> check_execution(const RandomDag &dag, CompiledGraph &cg,
                                                const std::vector<std::uint64_t> &expect,
                                                Machine &machine,
                                                std::span<const Allocation> bases,
                                                std::uint64_t expected_cross)
    {
      const TaskGraph &g = dag.graph;
      for(NodeId v = 0; v < g.size(); v++) {
        Allocation a{MemoryId(dag.cell_memory[v]), bases[dag.cell_memory[v]].offset +
                                                      dag.cell_offset[v],
                     sizeof(std::uint64_t)};
        std::uint64_t got = load(machine.bytes(a));
        if(got != expect[v])
          return "node " + g.node(v).label() + " holds " + to_hex(to_bytes(got)) +
                 ", oracle expects " + to_hex(to_bytes(expect[v]));
      }
      std::vector<std::uint32_t> tally = cg.execution_tally();
      for(NodeId v = 0; v < g.size(); v++)
        if(tally[v] != 1)
          return "node " + g.node(v).label() + " executed " + std::to_string(tally[v]) +
                 " times";
      if(cg.counter_underflows() != 0)
        return std::to_string(cg.counter_underflows()) + " counter underflows";
      std::vector<std::int32_t> counters = cg.counters();
      for(NodeId v = 0; v < g.size(); v++)
        if(counters[v] != static_cast<std::int32_t>(cg.plan().in_degree[v]))
          return "counter of " + g.node(v).label() + " left at " + std::to_string(counters[v]);
      CompiledStats st = cg.message_stats();
      if(st.cross_worker_messages != expected_cross)
        return std::to_string(st.cross_worker_messages) + " cross-worker messages, oracle " +
               std::to_string(expected_cross);
      return std::nullopt;
    }

  } // namespace

  VerifyReport run_verify(const VerifyOptions &opts,
                          const std::function<void(std::uint64_t seed)> &progress)
  {
    VerifyReport report;
    TimePoint t0 = Clock::now();

    MachineSpec spec;
    spec.processor_count = opts.processors;
    spec.memory_count = opts.memories;
    spec.memory_capacity = std::max<std::size_t>(
      16 << 20, static_cast<std::size_t>(opts.seeds) * opts.max_nodes * 16 + 4096);
    auto machine = Machine::create(spec);
    ActorRuntime actors(*machine);
    TaskRuntime rt(*machine, actors);
    prepare_hash_task(rt);

    RandomDagParams params;
    params.max_nodes = opts.max_nodes;
    params.processors = opts.processors;
    params.memories = opts.memories;

    for(std::uint64_t i = 0; i < opts.seeds; i++) {
      const std::uint64_t seed = opts.first_seed + i;
      if(progress)
        progress(seed);
      RandomDag shape = random_dag(seed, params);
      std::vector<Allocation> bases;
      for(std::uint32_t m = 0; m < opts.memories; m++)
        bases.push_back(machine->allocate(MemoryId(m), shape.memory_bytes[m]));
      RandomDag dag = random_dag(seed, params, bases);
      std::vector<std::uint64_t> expect = oracle_values(dag);
      std::uint64_t expected_cross = cross_edge_oracle(dag.graph);

      auto fail = [&](std::string reason) {
        report.failure = VerifyFailure{seed, std::move(reason), shape.graph};
      };

      auto cg = CompiledGraph::compile(rt, dag.graph);
      auto duplicated = std::make_shared<std::atomic<bool>>(false);
      if(opts.inject_fault) {
        cg->set_edge_interposer([duplicated](NodeId, NodeId, std::function<void()> deliver) {
          deliver();
          if(!duplicated->exchange(true))
            deliver();
        });
      }
      std::optional<CompiledStats> first_stats;
      for(std::uint32_t r = 0; r < std::max<std::uint32_t>(1, opts.replays); r++) {
        for(const Allocation &b : bases)
          std::ranges::fill(machine->bytes(b), std::byte{0});
        GraphExecution ex = cg->execute({});
        try {
          rt.wait(ex.done, std::chrono::seconds(30));
        } catch(const TimeoutError &) {
          fail("execution did not finish");
          break;
        }
        report.executions++;
        if(rt.is_poisoned(ex.done)) {
          fail("execution reported a failed task");
          break;
        }
        if(auto why = check_execution(dag, *cg, expect, *machine, bases, expected_cross)) {
          fail(*why);
          break;
        }
        CompiledStats st = cg->message_stats();
        if(first_stats && !(st == *first_stats)) {
          fail("message statistics changed between replays");
          break;
        }
        first_stats = st;
        report.cross_messages += st.cross_worker_messages;
      }
      report.graphs++;
      report.nodes += dag.graph.size();
      if(report.failure) {
        // let stray work from a faulty execution drain before teardown
        actors.run_until_quiescent(std::chrono::seconds(30));
        break;
      }
    }
    report.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return report;
  }

} // namespace taskdual
