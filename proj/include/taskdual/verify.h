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

// Randomized checking of compiled graph execution against a sequential
// oracle. Shared by the test suites and the `verify` command.

#ifndef TASKDUAL_VERIFY_H
#define TASKDUAL_VERIFY_H

#include "taskdual/compiler.h"

#include <functional>
#include <optional>

namespace taskdual {

  // Task id the hash body is registered under by prepare_hash_task().
  inline constexpr TaskId HASH_TASK = 1;

  struct RandomDagParams {
    std::uint32_t max_nodes = 64;
    std::uint32_t processors = 4;
    std::uint32_t memories = 2;
    double edge_probability = 0.12;
    double copy_probability = 0.15;
  };

  // A random DAG of hash tasks and copies. Every task and copy writes its
  // own 8-byte cell; a task reads the cells of its direct predecessors.
  struct RandomDag {
    std::uint64_t seed = 0;
    TaskGraph graph;
    // Per node: memory and byte offset of its output cell, relative to the
    // base allocation of that memory.
    std::vector<std::uint32_t> cell_memory;
    std::vector<std::size_t> cell_offset;
    // Per node: the task a copy reads from, NO_NODE for tasks.
    std::vector<NodeId> copy_source;
    // Bytes needed in each memory.
    std::vector<std::size_t> memory_bytes;
  };

  std::uint64_t mix64(std::uint64_t x);

  // Builds the graph against the given per-memory base allocations. Passing
  // zero-offset bases gives a machine-independent graph.
  RandomDag random_dag(std::uint64_t seed, const RandomDagParams &params,
                       std::span<const Allocation> bases = {});

  // Sequential evaluation in topological order, without any runtime
  // involvement. Returns the expected cell value per node (0 for nodes that
  // have no cell).
  std::vector<std::uint64_t> oracle_values(const RandomDag &dag);

  // Number of edges whose endpoints are owned by different resources.
  std::uint64_t cross_edge_oracle(const TaskGraph &g);

  void prepare_hash_task(TaskRuntime &rt);

  struct VerifyOptions {
    std::uint64_t seeds = 1000;
    std::uint64_t first_seed = 1;
    std::uint32_t max_nodes = 64;
    std::uint32_t processors = 4;
    std::uint32_t memories = 2;
    std::uint32_t replays = 2;
    // Delivers one cross-worker message twice per graph, which the checks
    // are expected to catch.
    bool inject_fault = false;
  };

  struct VerifyFailure {
    std::uint64_t seed = 0;
    std::string reason;
    TaskGraph graph;
  };

  struct VerifyReport {
    std::uint64_t graphs = 0;
    std::uint64_t executions = 0;
    std::uint64_t nodes = 0;
    std::uint64_t cross_messages = 0;
    double seconds = 0;
    std::optional<VerifyFailure> failure;

    bool ok() const { return !failure.has_value(); }
  };

  // Stops at the first failing seed.
  VerifyReport run_verify(const VerifyOptions &opts,
                          const std::function<void(std::uint64_t seed)> &progress = {});

} // namespace taskdual

#endif
