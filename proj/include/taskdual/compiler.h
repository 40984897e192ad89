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

// Lowers a static task graph onto one specialized worker actor per resource
// (processor or copy channel). Each worker interprets its slice of the graph
// with per-node in-degree counters, so executing the graph costs exactly one
// cross-worker message per cross-worker edge.

#ifndef TASKDUAL_COMPILER_H
#define TASKDUAL_COMPILER_H

#include "taskdual/graph.h"
#include "taskdual/task_rt.h"

namespace taskdual {

  // A resource a worker runs on. Channels are named by their memory pair so
  // plans don't depend on a particular machine.
  struct Resource {
    enum class Kind : std::uint8_t { PROCESSOR, CHANNEL } kind = Kind::PROCESSOR;
    std::uint32_t a = 0; // processor id, or source memory
    std::uint32_t b = 0; // destination memory for channels

    auto operator<=>(const Resource &) const = default;
    std::string label() const;
  };

  struct Successor {
    NodeId dst;
    std::uint32_t owner;
    EdgeKind kind;
  };

  struct WorkerProgram {
    Resource resource;
    // Nodes this worker executes or counts, in id order. Includes the async
    // nodes of its tasks and the postconditions it owns.
    std::vector<NodeId> local_nodes;
  };

  inline constexpr std::uint32_t NO_OWNER = ~std::uint32_t(0);

  // Machine-independent result of partitioning a graph by resource.
  struct GraphPlan {
    TaskGraph graph;
    std::vector<WorkerProgram> workers;
    // Per node: owning worker index, or NO_OWNER for preconditions.
    std::vector<std::uint32_t> owner;
    // Per node: edges that must be signalled before it runs. Async edges are
    // satisfied on the device and are not counted.
    std::vector<std::uint32_t> in_degree;
    // Per node: counted outgoing edges. For a task these are its host edges;
    // for an async node, its sync edges.
    std::vector<std::vector<Successor>> successors;
    // Per node: async predecessors whose device events a kernel waits on.
    std::vector<std::vector<NodeId>> device_waits;

    static GraphPlan make(TaskGraph g);

    // Per-worker listing of (node, in-degree, successor owners).
    std::string dump() const;
    // DOT with nodes grouped and colored by owner.
    std::string to_dot() const;
  };

  struct CompiledStats {
    std::uint64_t cross_worker_messages = 0;
    std::uint64_t local_decrements = 0;
    std::uint64_t init_messages = 0;
    // COMPLETED_EDGE messages originating at external preconditions.
    std::uint64_t external_messages = 0;
    std::uint64_t execute_ops = 0;
    // Device-completion notifications delivered to workers.
    std::uint64_t device_notifications = 0;

    bool operator==(const CompiledStats &) const = default;
  };

  struct GraphExecution {
    Event done;
    std::vector<Event> post;
  };

  struct NodeTiming {
    TimePoint start;
    TimePoint end;
  };

  class CompiledGraph {
  public:
    // Receives every cross-worker COMPLETED_EDGE before it is sent; calling
    // deliver sends it. Lets tests reorder arrivals.
    using EdgeInterposer = std::function<void(NodeId src, NodeId dst, std::function<void()> deliver)>;

    static std::unique_ptr<CompiledGraph> compile(TaskRuntime &rt, TaskGraph g);
    ~CompiledGraph();

    CompiledGraph(const CompiledGraph &) = delete;
    CompiledGraph &operator=(const CompiledGraph &) = delete;

    // pre.size() must equal the number of external preconditions. Only one
    // execution may be outstanding.
    GraphExecution execute(std::span<const Event> pre = {});
    // As above, triggering caller-created user events for the postconditions.
    GraphExecution execute(std::span<const Event> pre, std::span<const Event> post_targets);

    bool outstanding() const;

    const GraphPlan &plan() const;
    const TaskGraph &graph() const;
    std::size_t worker_count() const;
    const std::vector<ActorId> &worker_ids() const;

    // For the last completed execution.
    CompiledStats message_stats() const;
    std::vector<std::uint32_t> execution_tally() const;
    std::uint64_t counter_underflows() const;
    // Counter values; all equal in-degree between executions.
    std::vector<std::int32_t> counters() const;

    void set_timing(bool on);
    std::vector<NodeTiming> timing() const;

    void set_edge_interposer(EdgeInterposer fn);

  private:
    struct State;
    class Worker;

    explicit CompiledGraph(std::shared_ptr<State> st);

    std::shared_ptr<State> st_;
  };

  // Runs g through the generic event-based runtime: one launch (or copy)
  // per node, preconditions built from edges. Host edges only.
  GraphExecution execute_generic(TaskRuntime &rt, const TaskGraph &g,
                                 std::span<const Event> pre = {});

} // namespace taskdual

#endif
