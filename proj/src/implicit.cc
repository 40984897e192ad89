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

#include <algorithm>

namespace taskdual {

  std::string_view to_string(Privilege p)
  {
    switch(p) {
    case Privilege::READ:
      return "read";
    case Privilege::WRITE:
      return "write";
    case Privilege::READ_WRITE:
      return "readwrite";
    }
    return "?";
  }

  namespace {

    using RegionKey = std::pair<std::uint32_t, std::size_t>;

    RegionKey key_of(const Allocation &a) { return {a.memory.value(), a.offset}; }

    // One access per region; an op that both reads and writes a region is a
    // writer of it.
    std::vector<AccessDecl> normalize(std::span<const AccessDecl> accesses)
    {
      std::vector<AccessDecl> out;
      for(const AccessDecl &a : accesses) {
        auto it = std::find_if(out.begin(), out.end(), [&](const AccessDecl &b) {
          return key_of(b.region) == key_of(a.region);
        });
        if(it == out.end())
          out.push_back(a);
        else if(it->privilege != a.privilege)
          it->privilege = Privilege::READ_WRITE;
      }
      return out;
    }

  } // namespace

  ////////////////////////////////////////////////////////////////////////
  //
  // class DependenceAnalysis

  /*static*/ std::vector<DependenceAnalysis::Ref>
  DependenceAnalysis::predecessors_in(const std::map<RegionKey, RegionState> &regions,
                                      std::span<const AccessDecl> accesses)
  {
    std::vector<Ref> out;
    for(const AccessDecl &a : normalize(accesses)) {
      auto it = regions.find(key_of(a.region));
      if(it == regions.end())
        continue;
      const RegionState &st = it->second;
      if(a.privilege == Privilege::READ || st.readers.empty()) {
        if(st.last_writer)
          out.push_back(*st.last_writer);
      } else {
        out.insert(out.end(), st.readers.begin(), st.readers.end());
      }
    }
    std::sort(out.begin(), out.end(), [](const Ref &x, const Ref &y) { return x.seq < y.seq; });
    out.erase(std::unique(out.begin(), out.end(),
                          [](const Ref &x, const Ref &y) { return x.seq == y.seq; }),
              out.end());
    return out;
  }

  std::vector<DependenceAnalysis::Ref>
  DependenceAnalysis::predecessors(std::span<const AccessDecl> accesses) const
  {
    return predecessors_in(regions_, accesses);
  }

  void DependenceAnalysis::commit(std::span<const AccessDecl> accesses, Ref op)
  {
    for(const AccessDecl &a : normalize(accesses)) {
      RegionState &st = regions_[key_of(a.region)];
      if(a.privilege == Privilege::READ) {
        st.readers.push_back(op);
      } else {
        st.last_writer = op;
        st.readers.clear();
      }
    }
  }

  void DependenceAnalysis::collapse(std::span<const Allocation> regions, Ref op)
  {
    for(const Allocation &r : regions) {
      RegionState &st = regions_[key_of(r)];
      st.last_writer = op;
      st.readers.clear();
    }
  }

  const DependenceAnalysis::RegionState *
  DependenceAnalysis::state(const Allocation &region) const
  {
    auto it = regions_.find(key_of(region));
    return it == regions_.end() ? nullptr : &it->second;
  }

  std::vector<std::pair<std::uint64_t, std::uint64_t>>
  analyze_dependences(std::span<const IssuedOp> ops)
  {
    DependenceAnalysis a;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> edges;
    for(const IssuedOp &op : ops) {
      for(const DependenceAnalysis::Ref &p : a.predecessors(op.accesses))
        edges.emplace_back(p.seq, op.seq);
      a.commit(op.accesses, {op.seq, Event::none()});
    }
    return edges;
  }

  ////////////////////////////////////////////////////////////////////////
  //
  // struct ShardingPlan

  std::uint32_t ShardingPlan::shard_count() const
  {
    if(shard_of.empty())
      return 0;
    return *std::max_element(shard_of.begin(), shard_of.end()) + 1;
  }

  /*static*/ ShardingPlan ShardingPlan::blocked(std::uint32_t processors, std::uint32_t shards)
  {
    if(processors == 0 || shards == 0 || shards > processors)
      throw ValidationError("cannot split " + std::to_string(processors) + " processors into " +
                            std::to_string(shards) + " shards");
    ShardingPlan plan;
    for(std::uint32_t p = 0; p < processors; p++)
      plan.shard_of.push_back(static_cast<std::uint32_t>(std::uint64_t(p) * shards / processors));
    return plan;
  }

  void ShardingPlan::validate(std::uint32_t processors) const
  {
    if(shard_of.empty())
      throw ValidationError("sharding plan is empty");
    if(shard_of.size() > processors)
      throw ValidationError("sharding plan names " + std::to_string(shard_of.size()) +
                            " processors, machine has " + std::to_string(processors));
    std::vector<bool> used(shard_count(), false);
    for(std::uint32_t s : shard_of)
      used[s] = true;
    for(std::uint32_t s = 0; s < used.size(); s++)
      if(!used[s])
        throw ValidationError("sharding plan leaves shard " + std::to_string(s) + " empty");
  }

  ////////////////////////////////////////////////////////////////////////

  TaskGraph trace_graph(const Trace &trace)
  {
    std::vector<GraphNode> nodes;
    std::vector<Edge> edges;
    for(std::uint32_t k = 0; k < trace.ops.size(); k++) {
      const IssuedOp &op = trace.ops[k];
      nodes.push_back(GraphNode{k, TaskNode{op.proc, op.tid, op.args, std::nullopt},
                                "op" + std::to_string(k)});
    }
    for(auto [a, b] : trace.edges)
      edges.push_back(Edge{a, b, EdgeKind::HOST});
    return TaskGraph::build(std::move(nodes), std::move(edges));
  }

  ShardedTrace shard_trace(const Trace &trace, const ShardingPlan &plan)
  {
    const std::uint32_t shards = plan.shard_count();
    const std::size_t n = trace.ops.size();
    std::vector<std::uint32_t> shard(n);
    for(std::size_t k = 0; k < n; k++) {
      std::uint32_t p = trace.ops[k].proc.value();
      if(p >= plan.shard_of.size())
        throw ValidationError("sharding plan does not cover processor " + std::to_string(p));
      shard[k] = plan.shard_of[p];
    }

    struct Builder {
      std::vector<GraphNode> nodes;
      std::vector<Edge> edges;
      std::vector<std::int64_t> op_of;
      std::uint32_t pre = 1, post = 0;

      NodeId add(NodeKind kind, std::string name, std::int64_t op)
      {
        NodeId id = static_cast<NodeId>(nodes.size());
        nodes.push_back(GraphNode{id, std::move(kind), std::move(name)});
        op_of.push_back(op);
        return id;
      }
    };
    std::vector<Builder> b(shards);
    std::vector<bool> has_ops(shards, false);
    for(std::size_t k = 0; k < n; k++)
      has_ops[shard[k]] = true;
    for(std::uint32_t s = 0; s < shards; s++)
      if(has_ops[s])
        b[s].add(ExtPrecondNode{0}, "entry", -1);

    std::vector<NodeId> node_of(n);
    for(std::uint32_t k = 0; k < n; k++) {
      const IssuedOp &op = trace.ops[k];
      Builder &sb = b[shard[k]];
      node_of[k] = sb.add(TaskNode{op.proc, op.tid, op.args, std::nullopt},
                          "op" + std::to_string(k), k);
      if(!trace.external[k].empty())
        sb.edges.push_back(Edge{0, node_of[k], EdgeKind::HOST});
    }

    ShardedTrace out;
    for(auto [a, c] : trace.edges) {
      if(shard[a] == shard[c]) {
        b[shard[a]].edges.push_back(Edge{node_of[a], node_of[c], EdgeKind::HOST});
        continue;
      }
      ExtPair pair{a, c, shard[a], shard[c], b[shard[a]].post++, b[shard[c]].pre++};
      std::string tag = std::to_string(a) + "_" + std::to_string(c);
      NodeId post = b[shard[a]].add(ExtPostcondNode{pair.post_index}, "to" + tag, -1);
      NodeId pre = b[shard[c]].add(ExtPrecondNode{pair.pre_index}, "from" + tag, -1);
      b[shard[a]].edges.push_back(Edge{node_of[a], post, EdgeKind::HOST});
      b[shard[c]].edges.push_back(Edge{pre, node_of[c], EdgeKind::HOST});
      out.pairs.push_back(pair);
    }

    for(std::uint32_t s = 0; s < shards; s++) {
      ShardGraph sg;
      sg.op_of = std::move(b[s].op_of);
      sg.graph = TaskGraph::build(std::move(b[s].nodes), std::move(b[s].edges));
      out.shards.push_back(std::move(sg));
    }
    return out;
  }

  ////////////////////////////////////////////////////////////////////////
  //
  // class ImplicitRuntime

  ImplicitRuntime::ImplicitRuntime(TaskRuntime &rt)
    : rt_(rt)
  {}

  ImplicitRuntime::~ImplicitRuntime()
  {
    try {
      if(!ActorRuntime::in_handler())
        fence();
    } catch(const std::exception &) {
      // teardown must not throw; the task runtime drains on its own
    }
  }

  Allocation ImplicitRuntime::create_region(MemoryId m, std::size_t size)
  {
    auto [ready, a] = rt_.alloc(m, size);
    rt_.wait(ready);
    std::ranges::fill(rt_.machine().bytes(a), std::byte{0});
    regions_[key_of(a)] = size;
    return a;
  }

  void ImplicitRuntime::check_regions(std::span<const AccessDecl> accesses) const
  {
    for(const AccessDecl &a : accesses) {
      auto it = regions_.find(key_of(a.region));
      if(it == regions_.end() || it->second != a.region.size)
        throw ValidationError("unknown region at memory " +
                              std::to_string(a.region.memory.value()) + " offset " +
                              std::to_string(a.region.offset));
    }
  }

  Event ImplicitRuntime::issue(ProcessorId proc, TaskId tid, ByteView args,
                               std::vector<AccessDecl> accesses)
  {
    check_regions(accesses);
    Trace *t = active_ ? &traces_.at(*active_) : nullptr;

    if(t && t->state == Trace::State::RECORDED) {
      if(position_ >= t->ops.size())
        throw ValidationError("trace " + std::to_string(t->id) + " issues more than its " +
                              std::to_string(t->ops.size()) + " recorded ops");
      const IssuedOp &rec = t->ops[position_];
      if(rec.tid != tid || rec.proc != proc || !std::ranges::equal(rec.args, args) ||
         rec.accesses != accesses)
        throw ValidationError("trace " + std::to_string(t->id) + ": op " +
                              std::to_string(position_) + " differs from the recorded sequence");
      Event ev = launch_memoized(*t, position_, replay_events_, entry_);
      analysis_.commit(accesses, {next_seq_++, ev});
      outstanding_.push_back(ev);
      position_++;
      return ev;
    }

    std::vector<DependenceAnalysis::Ref> preds = analysis_.predecessors(accesses);
    analyzed_++;
    std::vector<Event> pre;
    pre.reserve(preds.size());
    for(const DependenceAnalysis::Ref &p : preds)
      pre.push_back(p.event);
    Event ev = rt_.launch(proc, tid, args, pre);
    const std::uint64_t seq = next_seq_++;

    if(t) {
      const std::uint32_t k = static_cast<std::uint32_t>(t->ops.size());
      t->preds.emplace_back();
      for(const DependenceAnalysis::Ref &p : preds) {
        if(p.seq >= trace_start_seq_) {
          auto src = static_cast<std::uint32_t>(p.seq - trace_start_seq_);
          t->edges.emplace_back(src, k);
          t->preds.back().push_back(src);
        }
      }
      t->ops.push_back(IssuedOp{seq, tid, proc, Bytes(args.begin(), args.end()), accesses});
    }

    analysis_.commit(accesses, {seq, ev});
    outstanding_.push_back(ev);
    if(outstanding_.size() > 1024)
      outstanding_ = {rt_.merge_events(outstanding_)};
    return ev;
  }

  void ImplicitRuntime::begin_trace(TraceId id)
  {
    if(active_)
      throw ValidationError("trace " + std::to_string(id) + " begins inside trace " +
                            std::to_string(*active_));
    auto it = traces_.find(id);
    if(it != traces_.end()) {
      position_ = 0;
      replay_events_.assign(it->second.ops.size(), Event::none());
      entry_ = analysis_.snapshot();
      last_replay_edges_.clear();
    } else {
      Trace t;
      t.id = id;
      traces_.emplace(id, std::move(t));
      trace_start_seq_ = next_seq_;
    }
    active_ = id;
  }

  // An access reaches outside the trace when its dependence would land on
  // whatever ran before the trace. Seeding every region with an unknown
  // earlier writer and reader finds those accesses independently of the
  // history seen while recording.
  void ImplicitRuntime::mark_external(Trace &t)
  {
    DependenceAnalysis sim;
    const DependenceAnalysis::Ref before{0, Event::none()};
    for(const IssuedOp &op : t.ops)
      for(const AccessDecl &a : op.accesses)
        if(!sim.state(a.region)) {
          AccessDecl w{a.region, Privilege::WRITE}, r{a.region, Privilege::READ};
          sim.commit(std::span(&w, 1), before);
          sim.commit(std::span(&r, 1), before);
        }
    t.external.assign(t.ops.size(), {});
    for(std::uint32_t k = 0; k < t.ops.size(); k++) {
      for(const AccessDecl &a : normalize(t.ops[k].accesses))
        for(const DependenceAnalysis::Ref &p : sim.predecessors(std::span(&a, 1)))
          if(p.seq == 0) {
            t.external[k].push_back(a);
            break;
          }
      sim.commit(t.ops[k].accesses, {k + 1u, Event::none()});
    }
  }

  void ImplicitRuntime::end_trace(TraceId id)
  {
    if(!active_ || *active_ != id)
      throw ValidationError("end_trace(" + std::to_string(id) + ") without a matching begin");
    Trace &t = traces_.at(id);
    active_.reset();
    if(t.state == Trace::State::RECORDING) {
      mark_external(t);
      t.state = Trace::State::RECORDED;
      return;
    }
    if(position_ != t.ops.size())
      throw ValidationError("trace " + std::to_string(id) + " ended after " +
                            std::to_string(position_) + " of " + std::to_string(t.ops.size()) +
                            " recorded ops");
  }

  Event ImplicitRuntime::launch_memoized(
    const Trace &t, std::uint32_t k, std::vector<Event> &op_events,
    const std::map<std::pair<std::uint32_t, std::size_t>, DependenceAnalysis::RegionState>
      &entry)
  {
    const IssuedOp &op = t.ops[k];
    std::vector<Event> pre;
    for(std::uint32_t a : t.preds[k]) {
      pre.push_back(op_events[a]);
      last_replay_edges_.emplace_back(a, k);
    }
    if(!t.external[k].empty())
      for(const DependenceAnalysis::Ref &p :
          DependenceAnalysis::predecessors_in(entry, t.external[k]))
        pre.push_back(p.event);
    Event ev = rt_.launch(op.proc, op.tid, op.args, pre);
    op_events[k] = ev;
    return ev;
  }

  Event ImplicitRuntime::replay(TraceId id, ReplayMode mode)
  {
    ShardingPlan single;
    single.shard_of.assign(rt_.machine().processor_count(), 0);
    return replay(id, mode, single);
  }

  Event ImplicitRuntime::replay(TraceId id, ReplayMode mode, const ShardingPlan &plan)
  {
    if(active_)
      throw ValidationError("replay of trace " + std::to_string(id) + " inside active trace " +
                            std::to_string(*active_));
    auto it = traces_.find(id);
    if(it == traces_.end() || it->second.state != Trace::State::RECORDED)
      throw ValidationError("trace " + std::to_string(id) + " has not been recorded");
    plan.validate(rt_.machine().processor_count());
    Trace &t = it->second;

    if(mode == ReplayMode::COMPILED)
      return replay_compiled(t, plan);

    auto entry = analysis_.snapshot();
    std::vector<Event> events(t.ops.size(), Event::none());
    last_replay_edges_.clear();
    for(std::uint32_t k = 0; k < t.ops.size(); k++) {
      Event ev = launch_memoized(t, k, events, entry);
      analysis_.commit(t.ops[k].accesses, {next_seq_++, ev});
    }
    Event done = rt_.merge_events(events);
    outstanding_.push_back(done);
    return done;
  }

  const ShardedTrace &ImplicitRuntime::lowered(TraceId id, const ShardingPlan &plan)
  {
    auto it = traces_.find(id);
    if(it == traces_.end() || it->second.state != Trace::State::RECORDED)
      throw ValidationError("trace " + std::to_string(id) + " has not been recorded");
    Lowering &l = lowerings_[{id, plan.shard_of}];
    if(l.graphs.empty() && l.sharded.shards.empty()) {
      l.sharded = shard_trace(it->second, plan);
      for(const ShardGraph &sg : l.sharded.shards)
        l.graphs.push_back(sg.graph.empty() ? nullptr : CompiledGraph::compile(rt_, sg.graph));
    }
    return l.sharded;
  }

  Event ImplicitRuntime::replay_compiled(Trace &t, const ShardingPlan &plan)
  {
    lowered(t.id, plan);
    Lowering &l = lowerings_.at({t.id, plan.shard_of});
    // one execution per compiled graph at a time
    if(l.last_done.exists() && !rt_.has_triggered(l.last_done))
      rt_.wait(l.last_done);

    const ShardedTrace &st = l.sharded;
    std::vector<Event> pair_events;
    for(std::size_t i = 0; i < st.pairs.size(); i++)
      pair_events.push_back(rt_.create_user_event());

    std::vector<Event> dones;
    for(std::uint32_t s = 0; s < st.shards.size(); s++) {
      if(!l.graphs[s])
        continue;
      const ShardGraph &sg = st.shards[s];
      std::vector<Event> entry;
      for(std::int64_t op : sg.op_of)
        if(op >= 0 && !t.external[op].empty())
          for(const DependenceAnalysis::Ref &p : analysis_.predecessors(t.external[op]))
            entry.push_back(p.event);
      // after a collapse most entries name the same event
      std::ranges::sort(entry);
      entry.erase(std::unique(entry.begin(), entry.end()), entry.end());
      std::vector<Event> pre(sg.graph.ext_precond_count(), Event::none());
      std::vector<Event> post(sg.graph.ext_postcond_count(), Event::none());
      pre[0] = entry.size() == 1 ? entry[0] : rt_.merge_events(entry);
      for(std::size_t i = 0; i < st.pairs.size(); i++) {
        if(st.pairs[i].dst_shard == s)
          pre[st.pairs[i].pre_index] = pair_events[i];
        if(st.pairs[i].src_shard == s)
          post[st.pairs[i].post_index] = pair_events[i];
      }
      dones.push_back(l.graphs[s]->execute(pre, post).done);
    }
    Event done = rt_.merge_events(dones);
    l.last_done = done;

    std::vector<Allocation> touched;
    for(const IssuedOp &op : t.ops)
      for(const AccessDecl &a : op.accesses)
        touched.push_back(a.region);
    analysis_.collapse(touched, {next_seq_, done});
    next_seq_ += t.ops.size();
    outstanding_.push_back(done);
    return done;
  }

  void ImplicitRuntime::fence()
  {
    if(outstanding_.empty())
      return;
    Event all = rt_.merge_events(outstanding_);
    outstanding_.clear();
    rt_.wait(all, std::chrono::minutes(10));
  }

  const Trace &ImplicitRuntime::trace(TraceId id) const
  {
    auto it = traces_.find(id);
    if(it == traces_.end())
      throw ValidationError("unknown trace " + std::to_string(id));
    return it->second;
  }

  std::string ImplicitRuntime::dump_trace(TraceId id) const
  {
    return to_json(trace_graph(trace(id)));
  }

} // namespace taskdual
