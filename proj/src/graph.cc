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

#include "taskdual/graph.h"

#include <algorithm>
#include <queue>

namespace taskdual {

  std::string GraphNode::label() const
  {
    if(!name.empty())
      return name;
    if(const auto *a = std::get_if<AsyncNode>(&kind))
      return "n" + std::to_string(a->host) + "_a";
    return "n" + std::to_string(id);
  }

  std::string_view to_string(EdgeKind k)
  {
    switch(k) {
    case EdgeKind::HOST:
      return "host";
    case EdgeKind::ASYNC:
      return "async";
    case EdgeKind::SYNC:
      return "sync";
    }
    return "?";
  }

  namespace {

    void check_dense(std::vector<std::uint32_t> idx, const char *what)
    {
      std::sort(idx.begin(), idx.end());
      for(std::size_t i = 0; i < idx.size(); i++)
        if(idx[i] != i)
          throw ValidationError(std::string(what) + " indices must be dense 0..k-1");
    }

    // Successors including the implicit task -> own async node order.
    template <typename F>
    void for_each_successor(const TaskGraph &g, NodeId v, F &&f)
    {
      for(std::uint32_t e : g.out_edges(v))
        f(g.edges()[e].dst);
      if(g.node(v).is_task() && g.async_of(v) != NO_NODE)
        f(g.async_of(v));
    }

    // Dense bitset over node ids.
    class NodeSet {
    public:
      explicit NodeSet(std::size_t n = 0)
        : words_((n + 63) / 64, 0)
      {}
      void set(NodeId v) { words_[v / 64] |= std::uint64_t(1) << (v % 64); }
      bool test(NodeId v) const { return (words_[v / 64] >> (v % 64)) & 1; }
      NodeSet &operator|=(const NodeSet &o)
      {
        for(std::size_t i = 0; i < words_.size(); i++)
          words_[i] |= o.words_[i];
        return *this;
      }

    private:
      std::vector<std::uint64_t> words_;
    };

  } // namespace

  /*static*/ TaskGraph TaskGraph::build(std::vector<GraphNode> nodes, std::vector<Edge> edges)
  {
    TaskGraph g;
    const std::size_t n = nodes.size();
    g.async_of_.assign(n, NO_NODE);
    std::vector<std::uint32_t> pre_idx, post_idx;

    for(std::size_t i = 0; i < n; i++) {
      const GraphNode &node = nodes[i];
      if(node.id != i)
        throw ValidationError("node ids must be dense; position " + std::to_string(i) +
                              " holds id " + std::to_string(node.id));
      if(const auto *c = std::get_if<CopyNode>(&node.kind)) {
        if(c->src.size != c->dst.size)
          throw ValidationError("copy node " + std::to_string(i) + " has mismatched sizes");
      } else if(const auto *p = std::get_if<ExtPrecondNode>(&node.kind)) {
        pre_idx.push_back(p->index);
      } else if(const auto *q = std::get_if<ExtPostcondNode>(&node.kind)) {
        post_idx.push_back(q->index);
      } else if(const auto *t = std::get_if<TaskNode>(&node.kind)) {
        if(t->device_work && t->device_work->count() < 0)
          throw ValidationError("negative device work on node " + std::to_string(i));
      }
    }
    for(std::size_t i = 0; i < n; i++) {
      const auto *a = std::get_if<AsyncNode>(&nodes[i].kind);
      if(a == nullptr)
        continue;
      if(a->host >= n)
        throw ValidationError("async node " + std::to_string(i) + " has no host task");
      const auto *host = std::get_if<TaskNode>(&nodes[a->host].kind);
      if(host == nullptr || !host->device_work)
        throw ValidationError("async node " + std::to_string(i) +
                              " must reference a task with device work");
      if(g.async_of_[a->host] != NO_NODE)
        throw ValidationError("task " + std::to_string(a->host) + " has two async nodes");
      g.async_of_[a->host] = static_cast<NodeId>(i);
    }
    check_dense(pre_idx, "external precondition");
    check_dense(post_idx, "external postcondition");
    g.preconds_ = static_cast<std::uint32_t>(pre_idx.size());
    g.postconds_ = static_cast<std::uint32_t>(post_idx.size());
    g.precond_nodes_.assign(g.preconds_, NO_NODE);
    g.postcond_nodes_.assign(g.postconds_, NO_NODE);
    for(std::size_t i = 0; i < n; i++) {
      if(const auto *p = std::get_if<ExtPrecondNode>(&nodes[i].kind))
        g.precond_nodes_[p->index] = static_cast<NodeId>(i);
      else if(const auto *q = std::get_if<ExtPostcondNode>(&nodes[i].kind))
        g.postcond_nodes_[q->index] = static_cast<NodeId>(i);
    }

    for(const Edge &e : edges) {
      if(e.src >= n || e.dst >= n)
        throw ValidationError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                              ") references a missing node");
      if(e.src == e.dst)
        throw ValidationError("cycle detected: self edge on node " + std::to_string(e.src));
      const bool src_async = nodes[e.src].is_async();
      const bool dst_async = nodes[e.dst].is_async();
      bool ok = false;
      switch(e.kind) {
      case EdgeKind::HOST:
        ok = !src_async && !dst_async;
        break;
      case EdgeKind::ASYNC:
        ok = src_async && dst_async;
        break;
      case EdgeKind::SYNC:
        ok = src_async && !dst_async;
        break;
      }
      if(!ok)
        throw ValidationError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                              ") of kind " + std::string(to_string(e.kind)) +
                              " connects the wrong node kinds");
      if(nodes[e.dst].is_precond())
        throw ValidationError("external precondition " + std::to_string(e.dst) +
                              " cannot have incoming edges");
      if(nodes[e.src].is_postcond())
        throw ValidationError("external postcondition " + std::to_string(e.src) +
                              " cannot have outgoing edges");
    }
    std::sort(edges.begin(), edges.end());
    for(std::size_t i = 1; i < edges.size(); i++)
      if(edges[i].src == edges[i - 1].src && edges[i].dst == edges[i - 1].dst)
        throw ValidationError("duplicate edge (" + std::to_string(edges[i].src) + "," +
                              std::to_string(edges[i].dst) + ")");

    g.nodes_ = std::move(nodes);
    g.edges_ = std::move(edges);

    g.out_offsets_.assign(n + 1, 0);
    g.in_offsets_.assign(n + 1, 0);
    for(const Edge &e : g.edges_) {
      g.out_offsets_[e.src + 1]++;
      g.in_offsets_[e.dst + 1]++;
    }
    for(std::size_t i = 0; i < n; i++) {
      g.out_offsets_[i + 1] += g.out_offsets_[i];
      g.in_offsets_[i + 1] += g.in_offsets_[i];
    }
    g.out_index_.resize(g.edges_.size());
    g.in_index_.resize(g.edges_.size());
    {
      std::vector<std::uint32_t> out_fill(g.out_offsets_.begin(), g.out_offsets_.end() - 1);
      std::vector<std::uint32_t> in_fill(g.in_offsets_.begin(), g.in_offsets_.end() - 1);
      for(std::uint32_t i = 0; i < g.edges_.size(); i++) {
        g.out_index_[out_fill[g.edges_[i].src]++] = i;
        g.in_index_[in_fill[g.edges_[i].dst]++] = i;
      }
    }

    if(g.topological_order().size() != n)
      throw ValidationError("cycle detected in task graph");
    return g;
  }

  std::span<const std::uint32_t> TaskGraph::out_edges(NodeId id) const
  {
    return std::span<const std::uint32_t>(out_index_)
        .subspan(out_offsets_.at(id), out_offsets_[id + 1] - out_offsets_[id]);
  }

  std::span<const std::uint32_t> TaskGraph::in_edges(NodeId id) const
  {
    return std::span<const std::uint32_t>(in_index_)
        .subspan(in_offsets_.at(id), in_offsets_[id + 1] - in_offsets_[id]);
  }

  bool TaskGraph::has_async_nodes() const
  {
    return std::any_of(nodes_.begin(), nodes_.end(), [](const GraphNode &n) { return n.is_async(); });
  }

  std::vector<NodeId> TaskGraph::topological_order() const
  {
    const std::size_t n = nodes_.size();
    std::vector<std::uint32_t> indeg(n, 0);
    for(const Edge &e : edges_)
      indeg[e.dst]++;
    for(NodeId a : async_of_)
      if(a != NO_NODE)
        indeg[a]++;
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for(NodeId v = 0; v < n; v++)
      if(indeg[v] == 0)
        ready.push(v);
    std::vector<NodeId> order;
    order.reserve(n);
    while(!ready.empty()) {
      NodeId v = ready.top();
      ready.pop();
      order.push_back(v);
      for_each_successor(*this, v, [&](NodeId d) {
        if(--indeg[d] == 0)
          ready.push(d);
      });
    }
    return order;
  }

  TaskGraph async_transform(const TaskGraph &g)
  {
    if(g.has_async_nodes())
      throw ValidationError("async_transform expects a graph without async nodes");
    std::vector<GraphNode> nodes = g.nodes();
    std::vector<Edge> edges = g.edges();
    std::vector<NodeId> async_of(g.size(), NO_NODE);
    for(const GraphNode &n : g.nodes()) {
      const auto *t = std::get_if<TaskNode>(&n.kind);
      if(t == nullptr || !t->device_work)
        continue;
      NodeId a = static_cast<NodeId>(nodes.size());
      async_of[n.id] = a;
      GraphNode an{a, AsyncNode{n.id}, n.name.empty() ? std::string() : n.name + "_a"};
      nodes.push_back(std::move(an));
    }
    for(const Edge &e : g.edges()) {
      if(e.kind != EdgeKind::HOST)
        throw ValidationError("async_transform expects host edges only");
      NodeId na = async_of[e.src];
      if(na == NO_NODE)
        continue;
      NodeId da = async_of[e.dst];
      if(da != NO_NODE)
        edges.push_back(Edge{na, da, EdgeKind::ASYNC});
      else
        edges.push_back(Edge{na, e.dst, EdgeKind::SYNC});
    }
    return TaskGraph::build(std::move(nodes), std::move(edges));
  }

  TaskGraph host_projection(const TaskGraph &g)
  {
    std::vector<NodeId> remap(g.size(), NO_NODE);
    std::vector<GraphNode> nodes;
    for(const GraphNode &n : g.nodes()) {
      if(n.is_async())
        continue;
      remap[n.id] = static_cast<NodeId>(nodes.size());
      GraphNode copy = n;
      copy.id = remap[n.id];
      nodes.push_back(std::move(copy));
    }
    std::vector<Edge> edges;
    for(const Edge &e : g.edges())
      if(e.kind == EdgeKind::HOST)
        edges.push_back(Edge{remap[e.src], remap[e.dst], EdgeKind::HOST});
    return TaskGraph::build(std::move(nodes), std::move(edges));
  }

  TaskGraph transitive_reduce(const TaskGraph &g)
  {
    const std::size_t n = g.size();
    std::vector<NodeId> order = g.topological_order();
    // below[v] = every node reachable from v by a non-empty path
    std::vector<NodeSet> below(n, NodeSet(n));
    for(auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeId v = *it;
      for_each_successor(g, v, [&](NodeId d) {
        below[v].set(d);
        below[v] |= below[d];
      });
    }
    std::vector<Edge> kept;
    for(NodeId v = 0; v < n; v++) {
      std::vector<NodeId> succ;
      for_each_successor(g, v, [&](NodeId d) { succ.push_back(d); });
      for(std::uint32_t ei : g.out_edges(v)) {
        const Edge &e = g.edges()[ei];
        bool redundant = std::any_of(succ.begin(), succ.end(), [&](NodeId w) {
          return w != e.dst && below[w].test(e.dst);
        });
        if(!redundant)
          kept.push_back(e);
      }
    }
    return TaskGraph::build(g.nodes(), std::move(kept));
  }

} // namespace taskdual
