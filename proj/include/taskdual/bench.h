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

// Task Bench style harness: parametric dependence patterns executed by each
// backend across a sweep of task granularities.

#ifndef TASKDUAL_BENCH_H
#define TASKDUAL_BENCH_H

#include "taskdual/compiler.h"

#include <iosfwd>

namespace taskdual {

  // A system produced a different result than the sequential reference.
  class ChecksumMismatch : public Error {
  public:
    using Error::Error;
  };

  enum class PatternKind : std::uint8_t
  {
    STENCIL,
    INDEPENDENT,
  };

  struct Pattern {
    PatternKind kind = PatternKind::STENCIL;
    std::uint32_t width = 1;
    std::uint32_t steps = 1;

    std::string name() const;
    void validate() const;
    // Columns of step t-1 that task (t, c) depends on.
    std::vector<std::uint32_t> dependencies(std::uint32_t t, std::uint32_t c) const;
    std::size_t task_count() const { return std::size_t(width) * steps; }
  };

  PatternKind parse_pattern_kind(std::string_view s);

  enum class System : std::uint8_t
  {
    GENERIC_TASK,
    COMPILED_GRAPH,
    NATIVE_ACTOR,
    ACTOR_ON_TASK,
    IMPLICIT_MEMOIZED,
    IMPLICIT_COMPILED,
  };

  inline constexpr System ALL_SYSTEMS[] = {
    System::GENERIC_TASK,  System::COMPILED_GRAPH,    System::NATIVE_ACTOR,
    System::ACTOR_ON_TASK, System::IMPLICIT_MEMOIZED, System::IMPLICIT_COMPILED,
  };

  std::string_view to_string(System s);
  // Accepts the canonical names and the short forms generic, compiled,
  // native, lifted, memoized.
  System parse_system(std::string_view s);

  // Column -> processor, round-robin.
  std::vector<ProcessorId> round_robin(std::uint32_t width, std::uint32_t processors);

  inline constexpr TaskId BENCH_TASK = 7;

  // Graph of the pattern with node id t*width + c. Task arguments are left
  // empty; run_bench fills in its own.
  TaskGraph generate_graph(const Pattern &pattern, std::span<const ProcessorId> mapping);

  struct BenchConfig {
    System system = System::COMPILED_GRAPH;
    Pattern pattern;
    std::uint32_t processors = 1;
    // Empty means round-robin.
    std::vector<ProcessorId> mapping;
    // Busy-work per task. Zero runs empty task bodies.
    std::vector<Nanos> granularities;
    std::uint32_t repetitions = 5;
    std::uint32_t warmups = 1;
    // Report durations from a fixed cost model instead of the clock.
    bool virtual_time = false;

    void validate() const;
  };

  struct Sample {
    System system = System::COMPILED_GRAPH;
    Pattern pattern;
    Nanos requested{0};
    double granularity_ns = 0; // measured mean task body time
    double wall_ns = 0;        // median over repetitions
    double rate = 0;           // busy-work iterations per second
    double efficiency = 0;     // rate / best rate of the sweep
    std::uint64_t checksum = 0;
    std::uint64_t tasks_executed = 0;
  };

  struct MetgResult {
    std::vector<Sample> curve; // sorted by granularity
    std::optional<double> metg_ns;
    double peak_rate = 0;
  };

  std::vector<Sample> run_bench(const BenchConfig &cfg);

  MetgResult compute_metg(std::vector<Sample> samples, double target = 0.5);

  // Checksum every system must reproduce for a pattern, computed
  // sequentially.
  std::uint64_t expected_checksum(const Pattern &pattern);

  // Iterations of the busy loop that take roughly `d`.
  std::uint64_t busy_iterations(Nanos d);
  void busy_work(std::uint64_t iterations);

  void write_samples_csv(std::ostream &os, std::span<const Sample> samples, bool header = true);
  void write_metg_csv(std::ostream &os, std::span<const MetgResult> results, double target,
                      bool header = true);

} // namespace taskdual

#endif
