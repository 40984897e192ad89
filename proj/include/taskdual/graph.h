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

// Static task-graph IR: tasks, copies, and external pre/post-conditions
// joined by dependence edges. Graphs are validated on construction and
// immutable afterwards.

#ifndef TASKDUAL_GRAPH_H
#define TASKDUAL_GRAPH_H

#include "taskdual/machine.h"

#include <string_view>
#include <variant>

namespace taskdual {

  using NodeId = std::uint32_t;
  inline constexpr NodeId NO_NODE = ~NodeId(0);

  struct TaskNode {
    ProcessorId proc;
    TaskId tid = 0;
    Bytes args;
    std::optional<Nanos> device_work;

    bool operator==(const TaskNode &) const = default;
  };

  struct CopyNode {
    Allocation src;
    Allocation dst;

    bool operator==(const CopyNode &) const = default;
  };

  struct ExtPrecondNode {
    std::uint32_t index = 0;
    bool operator==(const ExtPrecondNode &) const = default;
  };

  struct ExtPostcondNode {
    std::uint32_t index = 0;
    bool operator==(const ExtPostcondNode &) const = default;
  };

  // Device-side half of a task, added by async_transform.
  struct AsyncNode {
    NodeId host = NO_NODE;
    bool operator==(const AsyncNode &) const = default;
  };

  using NodeKind = std::variant<TaskNode, CopyNode, ExtPrecondNode, ExtPostcondNode, AsyncNode>;

  struct GraphNode {
    NodeId id = 0;
    NodeKind kind;
    // Optional display name; not semantically meaningful.
    std::string name;

    bool operator==(const GraphNode &) const = default;

    bool is_task() const { return std::holds_alternative<TaskNode>(kind); }
    bool is_copy() const { return std::holds_alternative<CopyNode>(kind); }
    bool is_precond() const { return std::holds_alternative<ExtPrecondNode>(kind); }
    bool is_postcond() const { return std::holds_alternative<ExtPostcondNode>(kind); }
    bool is_async() const { return std::holds_alternative<AsyncNode>(kind); }
    bool is_external() const { return is_precond() || is_postcond(); }
    std::string label() const;
  };

  enum class EdgeKind : std::uint8_t
  {
    HOST,
    ASYNC,
    SYNC,
  };

  std::string_view to_string(EdgeKind k);

  struct Edge {
    NodeId src = 0;
    NodeId dst = 0;
    EdgeKind kind = EdgeKind::HOST;

    auto operator<=>(const Edge &) const = default;
  };

  class TaskGraph {
  public:
    TaskGraph() = default;

    // Validates and canonicalizes (edges sorted by endpoints). Throws
    // ValidationError on cycles, dangling edges, or malformed boundary nodes.
    static TaskGraph build(std::vector<GraphNode> nodes, std::vector<Edge> edges);

    const std::vector<GraphNode> &nodes() const { return nodes_; }
    const std::vector<Edge> &edges() const { return edges_; }
    const GraphNode &node(NodeId id) const { return nodes_.at(id); }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    // Edge indices leaving / entering a node.
    std::span<const std::uint32_t> out_edges(NodeId id) const;
    std::span<const std::uint32_t> in_edges(NodeId id) const;

    std::uint32_t ext_precond_count() const { return preconds_; }
    std::uint32_t ext_postcond_count() const { return postconds_; }
    NodeId precond_node(std::uint32_t index) const { return precond_nodes_.at(index); }
    NodeId postcond_node(std::uint32_t index) const { return postcond_nodes_.at(index); }
    // Async node of a task, or NO_NODE.
    NodeId async_of(NodeId host) const { return async_of_.at(host); }

    bool has_async_nodes() const;
    std::vector<NodeId> topological_order() const;

    bool operator==(const TaskGraph &o) const { return nodes_ == o.nodes_ && edges_ == o.edges_; }

  private:
    std::vector<GraphNode> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::uint32_t> out_offsets_, out_index_;
    std::vector<std::uint32_t> in_offsets_, in_index_;
    std::vector<NodeId> precond_nodes_, postcond_nodes_;
    std::vector<NodeId> async_of_;
    std::uint32_t preconds_ = 0, postconds_ = 0;
  };

  // Splits every task with device work into a host node and an async node.
  // Edges (n, d) gain (n_a, d_a) when d has device work, else (n_a, d).
  // Original edges are kept.
  TaskGraph async_transform(const TaskGraph &g);

  // Removes async nodes and async/sync edges.
  TaskGraph host_projection(const TaskGraph &g);

  // Minimal edge set with the same reachability. A task implicitly precedes
  // its own async node.
  TaskGraph transitive_reduce(const TaskGraph &g);

  class ParseError : public ValidationError {
  public:
    ParseError(const std::string &msg, std::size_t line, std::size_t column);
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

  private:
    std::size_t line_, column_;
  };

  inline constexpr int GRAPH_FORMAT_VERSION = 1;

  std::string to_json(const TaskGraph &g);
  TaskGraph from_json(std::string_view text);
  std::string to_dot(const TaskGraph &g);

} // namespace taskdual

#endif
