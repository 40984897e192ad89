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

// Implicitly parallel frontend: ops declare the regions they access and the
// dependences are inferred in program order. Repeated op sequences can be
// recorded as traces and replayed from the memoized analysis, optionally
// lowered to one compiled graph per shard.

#ifndef TASKDUAL_IMPLICIT_H
#define TASKDUAL_IMPLICIT_H

#include "taskdual/compiler.h"

#include <map>

namespace taskdual {

  enum class Privilege : std::uint8_t
  {
    READ,
    WRITE,
    READ_WRITE,
  };

  std::string_view to_string(Privilege p);

  struct AccessDecl {
    Allocation region;
    Privilege privilege = Privilege::READ;

    bool operator==(const AccessDecl &) const = default;
  };

  struct IssuedOp {
    std::uint64_t seq = 0;
    TaskId tid = 0;
    ProcessorId proc;
    Bytes args;
    std::vector<AccessDecl> accesses;
  };

  // Last-conflict dependence rule, per region: a reader depends on the last
  // writer; a writer depends on the readers since the last writer, or on the
  // last writer if there were none.
  class DependenceAnalysis {
  public:
    struct Ref {
      std::uint64_t seq = 0;
      Event event;
    };

    struct RegionState {
      std::optional<Ref> last_writer;
      std::vector<Ref> readers;
    };

    // Ops this access set must follow, deduplicated, in seq order.
    std::vector<Ref> predecessors(std::span<const AccessDecl> accesses) const;
    void commit(std::span<const AccessDecl> accesses, Ref op);

    // Every region touched since construction now follows `op`.
    void collapse(std::span<const Allocation> regions, Ref op);

    const RegionState *state(const Allocation &region) const;
    std::map<std::pair<std::uint32_t, std::size_t>, RegionState> snapshot() const
    {
      return regions_;
    }
    static std::vector<Ref>
    predecessors_in(const std::map<std::pair<std::uint32_t, std::size_t>, RegionState> &regions,
                    std::span<const AccessDecl> accesses);

  private:
    std::map<std::pair<std::uint32_t, std::size_t>, RegionState> regions_;
  };

  // Pure dependence analysis over an op sequence: edges as (seq, seq).
  std::vector<std::pair<std::uint64_t, std::uint64_t>>
  analyze_dependences(std::span<const IssuedOp> ops);

  struct ShardingPlan {
    // Indexed by processor id.
    std::vector<std::uint32_t> shard_of;

    std::uint32_t shard_count() const;
    // Contiguous processor blocks.
    static ShardingPlan blocked(std::uint32_t processors, std::uint32_t shards);
    void validate(std::uint32_t processors) const;
  };

  enum class ReplayMode : std::uint8_t
  {
    MEMOIZED,
    COMPILED,
  };

  using TraceId = std::uint32_t;

  // An inter-shard edge realized as a postcondition of the producer's shard
  // graph wired to a precondition of the consumer's.
  struct ExtPair {
    std::uint32_t src_op = 0;
    std::uint32_t dst_op = 0;
    std::uint32_t src_shard = 0;
    std::uint32_t dst_shard = 0;
    std::uint32_t post_index = 0;
    std::uint32_t pre_index = 0;
  };

  struct ShardGraph {
    TaskGraph graph;
    // Per graph node: trace op index, or -1 for external nodes.
    std::vector<std::int64_t> op_of;
    // Precondition 0 of every shard graph carries the trace's dependences on
    // earlier work; the rest are inter-shard.
    std::uint32_t entry_precond = 0;
  };

  struct ShardedTrace {
    std::vector<ShardGraph> shards;
    std::vector<ExtPair> pairs;
  };

  struct Trace {
    TraceId id = 0;
    enum class State : std::uint8_t { RECORDING, RECORDED } state = State::RECORDING;
    std::vector<IssuedOp> ops;
    // Edges between trace op indices produced while recording.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    // Per op: trace-internal predecessors, ascending.
    std::vector<std::vector<std::uint32_t>> preds;
    // Per op: the accesses whose dependences reached outside the trace.
    std::vector<std::vector<AccessDecl>> external;
  };

  // Lowers a recorded trace by shard; pure, used by replay and by tests.
  ShardedTrace shard_trace(const Trace &trace, const ShardingPlan &plan);

  // Trace as a graph, one task node per op.
  TaskGraph trace_graph(const Trace &trace);

  class ImplicitRuntime {
  public:
    explicit ImplicitRuntime(TaskRuntime &rt);
    ~ImplicitRuntime();

    ImplicitRuntime(const ImplicitRuntime &) = delete;
    ImplicitRuntime &operator=(const ImplicitRuntime &) = delete;

    Allocation create_region(MemoryId m, std::size_t size);

    Event issue(ProcessorId proc, TaskId tid, ByteView args, std::vector<AccessDecl> accesses);
    Event issue(const IssuedOp &op)
    {
      return issue(op.proc, op.tid, op.args, op.accesses);
    }

    // First begin..end of an id records. Beginning a recorded id checks
    // that the following issues repeat the recorded sequence and runs them
    // from the memoized analysis.
    void begin_trace(TraceId id);
    void end_trace(TraceId id);

    Event replay(TraceId id, ReplayMode mode, const ShardingPlan &plan);
    Event replay(TraceId id, ReplayMode mode);

    // Waits for everything issued so far.
    void fence();

    const Trace &trace(TraceId id) const;
    bool has_trace(TraceId id) const { return traces_.count(id) != 0; }
    std::string dump_trace(TraceId id) const;

    const ShardedTrace &lowered(TraceId id, const ShardingPlan &plan);

    // Edges wired by the most recent memoized replay, in trace op indices.
    const std::vector<std::pair<std::uint32_t, std::uint32_t>> &last_replay_edges() const
    {
      return last_replay_edges_;
    }
    std::uint64_t analyzed_ops() const { return analyzed_; }

    TaskRuntime &tasks() { return rt_; }

  private:
    struct Lowering {
      ShardedTrace sharded;
      std::vector<std::unique_ptr<CompiledGraph>> graphs;
      Event last_done;
    };

    static void mark_external(Trace &t);
    void check_regions(std::span<const AccessDecl> accesses) const;
    Event launch_memoized(const Trace &t, std::uint32_t k, std::vector<Event> &op_events,
                          const std::map<std::pair<std::uint32_t, std::size_t>,
                                         DependenceAnalysis::RegionState> &entry);
    Event replay_compiled(Trace &t, const ShardingPlan &plan);

    TaskRuntime &rt_;
    DependenceAnalysis analysis_;
    std::map<std::pair<std::uint32_t, std::size_t>, std::size_t> regions_;
    std::uint64_t next_seq_ = 1;
    std::uint64_t analyzed_ = 0;
    std::vector<Event> outstanding_;

    std::map<TraceId, Trace> traces_;
    std::map<std::pair<TraceId, std::vector<std::uint32_t>>, Lowering> lowerings_;
    std::optional<TraceId> active_;
    // Replay-by-issue state for a recorded active trace.
    std::uint32_t position_ = 0;
    std::uint64_t trace_start_seq_ = 0;
    std::vector<Event> replay_events_;
    std::map<std::pair<std::uint32_t, std::size_t>, DependenceAnalysis::RegionState> entry_;

    std::vector<std::pair<std::uint32_t, std::uint32_t>> last_replay_edges_;
  };

  // Loop of a randomly generated op sequence run untraced, as memoized
  // replays, and as compiled replays, on separate copies of the data.
  struct TraceDemoConfig {
    std::uint32_t processors = 4;
    std::uint32_t shards = 2;
    std::uint32_t iterations = 100;
    std::uint32_t ops = 100;
    std::uint32_t regions = 16;
    std::uint64_t seed = 1;
  };

  struct TraceDemoResult {
    // Mean time per iteration. For traced modes only replays are counted.
    double untraced_ns = 0;
    double memoized_ns = 0;
    double compiled_ns = 0;
    bool replayed = false;
    bool states_equal = false;
    std::vector<Bytes> states; // untraced, memoized, compiled
    std::uint64_t ext_pairs = 0;
    std::uint64_t expected_ext_pairs = 0;
    std::uint64_t trace_edges = 0;
  };

  TraceDemoResult run_trace_demo(const TraceDemoConfig &cfg);

} // namespace taskdual

#endif
