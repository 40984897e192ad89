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

#include "taskdual/compiler.h"

#include "taskdual/serialize.h"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace taskdual {

  namespace {
    enum : MessageId
    {
      INIT = 1,
      COMPLETED_EDGE,
      EXECUTE_OP,
    };
  } // namespace

  std::string Resource::label() const
  {
    if(kind == Kind::PROCESSOR)
      return "P" + std::to_string(a);
    return "C" + std::to_string(a) + "->" + std::to_string(b);
  }

  ////////////////////////////////////////////////////////////////////////
  //
  // struct GraphPlan

  /*static*/ GraphPlan GraphPlan::make(TaskGraph g)
  {
    GraphPlan plan;
    const std::size_t n = g.size();

    auto resource_of = [&](const GraphNode &node) -> std::optional<Resource> {
      if(const auto *t = std::get_if<TaskNode>(&node.kind))
        return Resource{Resource::Kind::PROCESSOR, t->proc.value(), 0};
      if(const auto *c = std::get_if<CopyNode>(&node.kind))
        return Resource{Resource::Kind::CHANNEL, c->src.memory.value(), c->dst.memory.value()};
      return std::nullopt;
    };

    std::set<Resource> used;
    for(const GraphNode &node : g.nodes())
      if(auto r = resource_of(node))
        used.insert(*r);
    std::map<Resource, std::uint32_t> index;
    for(const Resource &r : used) {
      index[r] = static_cast<std::uint32_t>(plan.workers.size());
      plan.workers.push_back(WorkerProgram{r, {}});
    }

    plan.owner.assign(n, NO_OWNER);
    for(const GraphNode &node : g.nodes())
      if(auto r = resource_of(node))
        plan.owner[node.id] = index.at(*r);
    for(const GraphNode &node : g.nodes()) {
      if(const auto *a = std::get_if<AsyncNode>(&node.kind)) {
        plan.owner[node.id] = plan.owner[a->host];
      } else if(node.is_postcond()) {
        // owner of the highest-numbered predecessor that has one
        std::uint32_t owner = plan.workers.empty() ? NO_OWNER : 0;
        NodeId best = NO_NODE;
        for(std::uint32_t e : g.in_edges(node.id)) {
          NodeId src = g.edges()[e].src;
          if(g.node(src).is_precond())
            continue;
          if(best == NO_NODE || src > best)
            best = src;
        }
        if(best != NO_NODE)
          owner = plan.owner[best] != NO_OWNER ? plan.owner[best] : owner;
        plan.owner[node.id] = owner;
      }
    }
    // async owners may depend on hosts resolved above; postconds on async preds too
    for(const GraphNode &node : g.nodes()) {
      if(!node.is_postcond())
        continue;
      NodeId best = NO_NODE;
      for(std::uint32_t e : g.in_edges(node.id)) {
        NodeId src = g.edges()[e].src;
        if(!g.node(src).is_precond() && (best == NO_NODE || src > best))
          best = src;
      }
      if(best != NO_NODE)
        plan.owner[node.id] = plan.owner[best];
    }

    plan.in_degree.assign(n, 0);
    plan.successors.assign(n, {});
    plan.device_waits.assign(n, {});
    for(const Edge &e : g.edges()) {
      if(e.kind == EdgeKind::ASYNC) {
        plan.device_waits[e.dst].push_back(e.src);
        continue;
      }
      plan.in_degree[e.dst]++;
      plan.successors[e.src].push_back(Successor{e.dst, plan.owner[e.dst], e.kind});
    }

    for(NodeId v = 0; v < n; v++)
      if(plan.owner[v] != NO_OWNER)
        plan.workers[plan.owner[v]].local_nodes.push_back(v);

    plan.graph = std::move(g);
    return plan;
  }

  std::string GraphPlan::dump() const
  {
    std::ostringstream os;
    for(std::size_t w = 0; w < workers.size(); w++) {
      os << "worker " << w << " " << workers[w].resource.label() << "\n";
      for(NodeId v : workers[w].local_nodes) {
        const GraphNode &node = graph.node(v);
        os << "  " << node.label();
        if(node.is_async())
          os << " async";
        else
          os << " indeg=" << in_degree[v];
        if(!successors[v].empty() || !device_waits[v].empty()) {
          os << " ->";
          for(const Successor &s : successors[v]) {
            os << " " << graph.node(s.dst).label() << "@" << workers[s.owner].resource.label();
            if(s.kind == EdgeKind::SYNC)
              os << "(sync)";
          }
        }
        if(!device_waits[v].empty()) {
          os << " waits";
          for(NodeId d : device_waits[v])
            os << " " << graph.node(d).label();
        }
        os << "\n";
      }
    }
    for(std::uint32_t i = 0; i < graph.ext_precond_count(); i++) {
      NodeId p = graph.precond_node(i);
      os << "external " << graph.node(p).label() << " ->";
      for(const Successor &s : successors[p])
        os << " " << graph.node(s.dst).label() << "@" << workers[s.owner].resource.label();
      os << "\n";
    }
    return os.str();
  }

  std::string GraphPlan::to_dot() const
  {
    static constexpr const char *palette[] = {"lightblue",  "lightsalmon", "palegreen",
                                              "khaki",      "plum",        "lightpink",
                                              "lightcyan",  "wheat"};
    std::ostringstream os;
    os << "digraph compiled {\n";
    for(std::size_t w = 0; w < workers.size(); w++) {
      os << "  subgraph cluster_" << w << " {\n";
      os << "    label=\"" << workers[w].resource.label() << "\";\n";
      for(NodeId v : workers[w].local_nodes)
        os << "    n" << v << " [label=\"" << graph.node(v).label()
           << "\", style=filled, fillcolor=" << palette[w % std::size(palette)]
           << (graph.node(v).is_async() ? ", shape=box, peripheries=2" : ", shape=box")
           << "];\n";
      os << "  }\n";
    }
    for(const GraphNode &node : graph.nodes())
      if(node.is_precond())
        os << "  n" << node.id << " [label=\"" << node.label() << "\", shape=invtriangle];\n";
    for(const Edge &e : graph.edges()) {
      os << "  n" << e.src << " -> n" << e.dst;
      bool cross = owner[e.src] != owner[e.dst];
      if(e.kind != EdgeKind::HOST)
        os << " [style=dashed" << (cross ? ", penwidth=2" : "") << "]";
      else if(cross)
        os << " [penwidth=2]";
      os << ";\n";
    }
    os << "}\n";
    return os.str();
  }

  ////////////////////////////////////////////////////////////////////////
  //
  // struct CompiledGraph::State

  struct CompiledGraph::State {
    State(TaskRuntime &r, GraphPlan p)
      : rt(r)
      , machine(r.machine())
      , actors(r.actors())
      , plan(std::move(p))
    {}

    TaskRuntime &rt;
    Machine &machine;
    ActorRuntime &actors;
    GraphPlan plan;

    std::vector<ActorId> worker_ids;
    std::vector<ExecutionContext *> worker_ctx;
    std::vector<std::optional<DeviceStream>> streams;
    std::vector<std::vector<NodeId>> init_ready;
    std::vector<const RegisteredTask *> bodies;

    std::unique_ptr<std::atomic<std::int32_t>[]> counters;
    std::unique_ptr<std::atomic<std::uint32_t>[]> tally;
    std::vector<DeviceEvent> device_events;
    std::vector<NodeTiming> timing;
    bool timing_on = false;

    std::int64_t total_work = 0;
    std::atomic<std::int64_t> remaining{0};
    std::atomic<bool> outstanding{false};
    std::atomic<bool> poisoned{false};
    Event done;
    std::vector<Event> post;

    std::atomic<std::uint64_t> cross{0}, local{0}, inits{0}, external{0}, execs{0}, device{0};
    std::atomic<std::uint64_t> underflows{0};

    EdgeInterposer interposer;

    void send(std::uint32_t worker, MessageId mid, NodeId a, NodeId b = NO_NODE)
    {
      ByteWriter out;
      out << a << b;
      actors.send_message(worker_ids[worker], mid, out.take());
    }

    void finished()
    {
      if(remaining.fetch_sub(1) == 1) {
        Event ev = done;
        bool bad = poisoned.load();
        outstanding.store(false);
        rt.trigger(ev, bad);
      }
    }

    // Runs on the owner of v.
    void ready(NodeId v)
    {
      const GraphNode &node = plan.graph.node(v);
      if(const auto *p = std::get_if<ExtPostcondNode>(&node.kind)) {
        tally[v].fetch_add(1);
        rt.trigger(post[p->index], poisoned.load());
        finished();
        return;
      }
      execs.fetch_add(1);
      send(plan.owner[v], EXECUTE_OP, v);
    }

    void decrement(NodeId dst)
    {
      std::int32_t prev = counters[dst].fetch_sub(1);
      if(prev <= 0) {
        counters[dst].fetch_add(1);
        underflows.fetch_add(1);
        return;
      }
      if(prev == 1) {
        // re-arm for the next execution before running this one
        counters[dst].store(static_cast<std::int32_t>(plan.in_degree[dst]));
        ready(dst);
      }
    }

    void signal(std::uint32_t self, NodeId src, const Successor &s)
    {
      if(s.owner == self) {
        local.fetch_add(1);
        decrement(s.dst);
        return;
      }
      cross.fetch_add(1);
      if(interposer) {
        interposer(src, s.dst, [this, owner = s.owner, src, dst = s.dst] {
          send(owner, COMPLETED_EDGE, src, dst);
        });
      } else {
        send(s.owner, COMPLETED_EDGE, src, s.dst);
      }
    }
  };

  ////////////////////////////////////////////////////////////////////////
  //
  // class CompiledGraph::Worker

  class CompiledGraph::Worker final : public Actor {
  public:
    Worker(std::shared_ptr<State> st, std::uint32_t index)
      : st_(std::move(st))
      , index_(index)
    {}

    void handle_message(MessageId mid, ActorRT &, ByteView args) override
    {
      NodeId a = NO_NODE, b = NO_NODE;
      ByteReader(args) >> a >> b;
      switch(mid) {
      case INIT:
        for(NodeId v : st_->init_ready[index_])
          st_->ready(v);
        break;
      case COMPLETED_EDGE:
        st_->decrement(b);
        break;
      case EXECUTE_OP:
        execute_op(a);
        break;
      default:
        throw Error("compiled worker: unexpected message " + std::to_string(mid));
      }
    }

  private:
    void execute_op(NodeId v)
    {
      State &st = *st_;
      st.tally[v].fetch_add(1);
      if(st.timing_on)
        st.timing[v].start = Clock::now();
      const GraphNode &node = st.plan.graph.node(v);
      if(const auto *t = std::get_if<TaskNode>(&node.kind)) {
        run_task(v, *t);
      } else if(const auto *c = std::get_if<CopyNode>(&node.kind)) {
        try {
          st.machine.copy_bytes(c->src, c->dst);
        } catch(const std::exception &) {
          st.poisoned.store(true);
        }
      }
      if(st.timing_on)
        st.timing[v].end = Clock::now();
      for(const Successor &s : st.plan.successors[v])
        st.signal(index_, v, s);
      st.finished();
    }

    void run_task(NodeId v, const TaskNode &t)
    {
      State &st = *st_;
      TaskContext ctx(st.rt, t.proc, st.streams[index_]);
      try {
        st.bodies[v]->body(ctx, t.args);
      } catch(const std::exception &) {
        st.poisoned.store(true);
      }
      if(t.device_work) {
        DeviceKernel kernel{*t.device_work, node_label(v), {}};
        NodeId a = st.plan.graph.async_of(v);
        if(a == NO_NODE) {
          // untransformed: the host waits for its own device work
          st.machine.wait_device(st.machine.stream_enqueue(*st.streams[index_], kernel));
        } else {
          submit_async(a, std::move(kernel));
        }
      }
      for(const DeviceEvent &d : ctx.device_events())
        st.machine.wait_device(d);
    }

    void submit_async(NodeId a, DeviceKernel kernel)
    {
      State &st = *st_;
      std::vector<DeviceEvent> waits;
      for(NodeId pred : st.plan.device_waits[a])
        waits.push_back(st.device_events[pred]);
      DeviceEvent ev = st.machine.stream_enqueue(*st.streams[index_], std::move(kernel), waits);
      st.device_events[a] = ev;
      std::shared_ptr<State> keep = st_;
      for(const Successor &s : st.plan.successors[a]) {
        st.machine.notify_host(ev, HostSink{st.worker_ctx[s.owner], [keep, dst = s.dst] {
                                              keep->device.fetch_add(1);
                                              keep->decrement(dst);
                                            }});
      }
      st.machine.notify_host(ev, HostSink{st.worker_ctx[index_], [keep, a] {
                                            keep->device.fetch_add(1);
                                            keep->tally[a].fetch_add(1);
                                            if(keep->timing_on)
                                              keep->timing[a].end = Clock::now();
                                            keep->finished();
                                          }});
    }

    std::string node_label(NodeId v) const { return st_->plan.graph.node(v).label(); }

    std::shared_ptr<State> st_;
    std::uint32_t index_;
  };

  ////////////////////////////////////////////////////////////////////////
  //
  // class CompiledGraph

  CompiledGraph::CompiledGraph(std::shared_ptr<State> st)
    : st_(std::move(st))
  {}

  CompiledGraph::~CompiledGraph()
  {
    if(st_->outstanding.load() && !ActorRuntime::in_handler())
      st_->rt.wait(st_->done, std::chrono::hours(1));
  }

  /*static*/ std::unique_ptr<CompiledGraph> CompiledGraph::compile(TaskRuntime &rt, TaskGraph g)
  {
    Machine &machine = rt.machine();
    auto st = std::make_shared<State>(rt, GraphPlan::make(std::move(g)));
    const GraphPlan &plan = st->plan;
    const TaskGraph &graph = plan.graph;
    const std::size_t n = graph.size();

    st->bodies.assign(n, nullptr);
    std::vector<bool> needs_device(plan.workers.size(), false);
    for(const GraphNode &node : graph.nodes()) {
      if(const auto *t = std::get_if<TaskNode>(&node.kind)) {
        if(!machine.valid(t->proc))
          throw ValidationError("node " + std::to_string(node.id) + " uses invalid processor " +
                                std::to_string(t->proc.value()));
        st->bodies[node.id] = rt.find_task(t->tid);
        if(st->bodies[node.id] == nullptr)
          throw ValidationError("node " + std::to_string(node.id) + " uses unregistered task " +
                                std::to_string(t->tid));
        if(t->device_work) {
          if(!machine.local_device(t->proc))
            throw ValidationError("node " + std::to_string(node.id) +
                                  " has device work but the machine has no devices");
          needs_device[plan.owner[node.id]] = true;
        }
      } else if(const auto *c = std::get_if<CopyNode>(&node.kind)) {
        if(!machine.valid(c->src.memory) || !machine.valid(c->dst.memory))
          throw ValidationError("copy node " + std::to_string(node.id) +
                                " references an invalid memory");
      }
    }

    st->counters.reset(new std::atomic<std::int32_t>[n]);
    st->tally.reset(new std::atomic<std::uint32_t>[n]);
    for(NodeId v = 0; v < n; v++) {
      st->counters[v].store(static_cast<std::int32_t>(plan.in_degree[v]));
      st->tally[v].store(0);
    }
    st->device_events.assign(n, DeviceEvent{});
    st->timing.assign(n, NodeTiming{});
    st->init_ready.assign(plan.workers.size(), {});

    for(std::uint32_t w = 0; w < plan.workers.size(); w++) {
      const Resource &r = plan.workers[w].resource;
      for(NodeId v : plan.workers[w].local_nodes) {
        const GraphNode &node = graph.node(v);
        if(!node.is_async() && plan.in_degree[v] == 0)
          st->init_ready[w].push_back(v);
        if(node.is_postcond())
          st->total_work++;
        else
          st->total_work++;
      }
      ExecutionContext *ctx = nullptr;
      std::optional<DeviceStream> stream;
      if(r.kind == Resource::Kind::PROCESSOR) {
        ProcessorId p(r.a);
        ctx = &machine.context(p);
        if(needs_device[w])
          stream = machine.create_stream(*machine.local_device(p));
      } else {
        ctx = &machine.context(machine.channel(MemoryId(r.a), MemoryId(r.b)));
      }
      st->worker_ctx.push_back(ctx);
      st->streams.push_back(stream);
      ActorId aid = rt.actors().allocate_actor_id();
      st->worker_ids.push_back(aid);
      rt.actors().register_actor(std::make_shared<Worker>(st, w), aid, *ctx);
    }
    return std::unique_ptr<CompiledGraph>(new CompiledGraph(std::move(st)));
  }

  GraphExecution CompiledGraph::execute(std::span<const Event> pre)
  {
    return execute(pre, {});
  }

  GraphExecution CompiledGraph::execute(std::span<const Event> pre,
                                        std::span<const Event> post_targets)
  {
    State &st = *st_;
    const TaskGraph &graph = st.plan.graph;
    if(pre.size() != graph.ext_precond_count())
      throw ValidationError("execute expects " + std::to_string(graph.ext_precond_count()) +
                            " preconditions, got " + std::to_string(pre.size()));
    if(!post_targets.empty() && post_targets.size() != graph.ext_postcond_count())
      throw ValidationError("execute expects " + std::to_string(graph.ext_postcond_count()) +
                            " postcondition targets");
    if(st.outstanding.exchange(true))
      throw ContractViolation("compiled graph already has an outstanding execution");

    st.cross = 0;
    st.local = 0;
    st.inits = 0;
    st.external = 0;
    st.execs = 0;
    st.device = 0;
    st.poisoned = false;
    for(NodeId v = 0; v < graph.size(); v++)
      st.tally[v].store(0);

    st.post.clear();
    for(std::uint32_t j = 0; j < graph.ext_postcond_count(); j++)
      st.post.push_back(post_targets.empty() ? st.rt.create_user_event() : post_targets[j]);

    if(st.plan.workers.empty()) {
      // nothing to run: postconditions follow their preconditions directly
      for(std::uint32_t j = 0; j < graph.ext_postcond_count(); j++) {
        std::vector<Event> preds;
        for(std::uint32_t e : graph.in_edges(graph.postcond_node(j)))
          preds.push_back(pre[std::get<ExtPrecondNode>(graph.node(graph.edges()[e].src).kind).index]);
        Event merged = st.rt.merge_events(preds);
        Event target = st.post[j];
        TaskRuntime &rt = st.rt;
        if(!rt.subscribe(merged, [&rt, target](bool poisoned) { rt.trigger(target, poisoned); }))
          rt.trigger(target, rt.is_poisoned(merged));
      }
      st.done = Event::none();
      st.outstanding.store(false);
      return GraphExecution{st.done, st.post};
    }

    st.done = st.rt.create_user_event();
    st.remaining.store(st.total_work);
    GraphExecution result{st.done, st.post};

    for(std::uint32_t w = 0; w < st.plan.workers.size(); w++) {
      st.inits.fetch_add(1);
      st.send(w, INIT, NO_NODE);
    }
    std::shared_ptr<State> keep = st_;
    for(std::uint32_t i = 0; i < graph.ext_precond_count(); i++) {
      NodeId p = graph.precond_node(i);
      auto deliver = [keep, p](bool poisoned) {
        if(poisoned)
          keep->poisoned.store(true);
        for(const Successor &s : keep->plan.successors[p]) {
          keep->external.fetch_add(1);
          keep->send(s.owner, COMPLETED_EDGE, p, s.dst);
        }
      };
      if(!st.rt.subscribe(pre[i], deliver))
        deliver(st.rt.is_poisoned(pre[i]));
    }
    return result;
  }

  bool CompiledGraph::outstanding() const { return st_->outstanding.load(); }

  const GraphPlan &CompiledGraph::plan() const { return st_->plan; }

  const TaskGraph &CompiledGraph::graph() const { return st_->plan.graph; }

  std::size_t CompiledGraph::worker_count() const { return st_->plan.workers.size(); }

  const std::vector<ActorId> &CompiledGraph::worker_ids() const { return st_->worker_ids; }

  CompiledStats CompiledGraph::message_stats() const
  {
    return CompiledStats{st_->cross.load(),    st_->local.load(), st_->inits.load(),
                         st_->external.load(), st_->execs.load(), st_->device.load()};
  }

  std::vector<std::uint32_t> CompiledGraph::execution_tally() const
  {
    std::vector<std::uint32_t> out(st_->plan.graph.size());
    for(std::size_t v = 0; v < out.size(); v++)
      out[v] = st_->tally[v].load();
    return out;
  }

  std::uint64_t CompiledGraph::counter_underflows() const { return st_->underflows.load(); }

  std::vector<std::int32_t> CompiledGraph::counters() const
  {
    std::vector<std::int32_t> out(st_->plan.graph.size());
    for(std::size_t v = 0; v < out.size(); v++)
      out[v] = st_->counters[v].load();
    return out;
  }

  void CompiledGraph::set_timing(bool on)
  {
    if(st_->outstanding.load())
      throw ContractViolation("cannot change timing during an execution");
    st_->timing_on = on;
  }

  std::vector<NodeTiming> CompiledGraph::timing() const { return st_->timing; }

  void CompiledGraph::set_edge_interposer(EdgeInterposer fn)
  {
    if(st_->outstanding.load())
      throw ContractViolation("cannot change the interposer during an execution");
    st_->interposer = std::move(fn);
  }

  ////////////////////////////////////////////////////////////////////////

  GraphExecution execute_generic(TaskRuntime &rt, const TaskGraph &g, std::span<const Event> pre)
  {
    if(g.has_async_nodes())
      throw ValidationError("the generic runtime executes host-only graphs");
    if(pre.size() != g.ext_precond_count())
      throw ValidationError("execute_generic expects " + std::to_string(g.ext_precond_count()) +
                            " preconditions");
    std::vector<Event> events(g.size());
    GraphExecution result;
    result.post.resize(g.ext_postcond_count());
    std::vector<Event> sinks;
    std::vector<Event> preds;
    for(NodeId v : g.topological_order()) {
      preds.clear();
      for(std::uint32_t e : g.in_edges(v))
        preds.push_back(events[g.edges()[e].src]);
      const GraphNode &node = g.node(v);
      if(const auto *t = std::get_if<TaskNode>(&node.kind)) {
        events[v] = rt.launch(t->proc, t->tid, t->args, preds, t->device_work);
      } else if(const auto *c = std::get_if<CopyNode>(&node.kind)) {
        events[v] = rt.copy(c->src, c->dst, preds);
      } else if(const auto *p = std::get_if<ExtPrecondNode>(&node.kind)) {
        events[v] = pre[p->index];
        continue;
      } else if(const auto *q = std::get_if<ExtPostcondNode>(&node.kind)) {
        events[v] = rt.merge_events(preds);
        result.post[q->index] = events[v];
      }
      if(g.out_edges(v).empty())
        sinks.push_back(events[v]);
    }
    result.done = rt.merge_events(sinks);
    return result;
  }

} // namespace taskdual
