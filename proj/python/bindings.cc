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

#include "taskdual/bench.h"
#include "taskdual/implicit.h"
#include "taskdual/verify.h"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace taskdual;

namespace {

  py::dict sample_dict(const Sample &s)
  {
    py::dict d;
    d["system"] = std::string(to_string(s.system));
    d["pattern"] = s.pattern.name();
    d["width"] = s.pattern.width;
    d["steps"] = s.pattern.steps;
    d["requested_ns"] = s.requested.count();
    d["granularity_ns"] = s.granularity_ns;
    d["wall_ns"] = s.wall_ns;
    d["rate"] = s.rate;
    d["efficiency"] = s.efficiency;
    d["checksum"] = s.checksum;
    return d;
  }

  TaskGraph graph_pass(const std::string &text, bool reduce, bool async)
  {
    TaskGraph g = from_json(text);
    if(reduce)
      g = transitive_reduce(g);
    if(async)
      g = async_transform(g);
    return g;
  }

} // namespace

PYBIND11_MODULE(_taskdual, m)
{
  m.doc() = "Actor and task runtimes, graph compiler and benchmark harness";

  // Translators are tried newest first, so subclasses go last.
  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ChecksumMismatch>(m, "ChecksumMismatch", error.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  m.def(
    "generate_graph",
    [](const std::string &pattern, std::uint32_t width, std::uint32_t steps,
       std::uint32_t processors) {
      Pattern p{parse_pattern_kind(pattern), width, steps};
      return to_json(generate_graph(p, round_robin(width, processors)));
    },
    py::arg("pattern"), py::arg("width"), py::arg("steps"), py::arg("processors") = 1,
    "Pattern graph as JSON, node id t*width + c.");

  m.def(
    "transitive_reduce", [](const std::string &g) { return to_json(graph_pass(g, true, false)); },
    py::arg("graph_json"));
  m.def(
    "async_transform", [](const std::string &g) { return to_json(graph_pass(g, false, true)); },
    py::arg("graph_json"));
  m.def(
    "graph_dot", [](const std::string &g) { return to_dot(from_json(g)); }, py::arg("graph_json"));

  m.def(
    "compile_dump",
    [](const std::string &g, bool async, bool reduce) {
      return GraphPlan::make(graph_pass(g, reduce, async)).dump();
    },
    py::arg("graph_json"), py::arg("async_transform") = false,
    py::arg("transitive_reduce") = false, "Per-worker listing of the compiled graph.");

  m.def(
    "cross_edges", [](const std::string &g) { return cross_edge_oracle(from_json(g)); },
    py::arg("graph_json"), "Edges whose endpoints are owned by different resources.");

  m.def(
    "run_bench",
    [](const std::string &system, const std::string &pattern, std::uint32_t width,
       std::uint32_t steps, std::vector<std::int64_t> granularities_ns,
       std::uint32_t processors, std::uint32_t repetitions, std::uint32_t warmups,
       bool virtual_time) {
      BenchConfig cfg;
      cfg.system = parse_system(system);
      cfg.pattern = Pattern{parse_pattern_kind(pattern), width, steps};
      cfg.processors = processors;
      for(std::int64_t g : granularities_ns)
        cfg.granularities.push_back(Nanos(g));
      cfg.repetitions = repetitions;
      cfg.warmups = warmups;
      cfg.virtual_time = virtual_time;
      std::vector<Sample> samples;
      {
        py::gil_scoped_release release;
        samples = run_bench(cfg);
      }
      py::list out;
      for(const Sample &s : samples)
        out.append(sample_dict(s));
      return out;
    },
    py::arg("system"), py::arg("pattern"), py::arg("width"), py::arg("steps"),
    py::arg("granularities_ns"), py::arg("processors") = 1, py::arg("repetitions") = 3,
    py::arg("warmups") = 1, py::arg("virtual_time") = false);

  m.def(
    "compute_metg",
    [](const std::vector<std::pair<double, double>> &curve, double target) {
      std::vector<Sample> samples;
      for(auto [g, rate] : curve) {
        Sample s;
        s.granularity_ns = g;
        s.rate = rate;
        samples.push_back(s);
      }
      MetgResult r = compute_metg(std::move(samples), target);
      py::dict d;
      d["metg_ns"] = r.metg_ns ? py::cast(*r.metg_ns) : py::none();
      d["peak_rate"] = r.peak_rate;
      py::list eff;
      for(const Sample &s : r.curve)
        eff.append(py::make_tuple(s.granularity_ns, s.efficiency));
      d["curve"] = eff;
      return d;
    },
    py::arg("curve"), py::arg("target") = 0.5,
    "METG from (granularity_ns, rate) pairs.");

  m.def(
    "expected_checksum",
    [](const std::string &pattern, std::uint32_t width, std::uint32_t steps) {
      return expected_checksum(Pattern{parse_pattern_kind(pattern), width, steps});
    },
    py::arg("pattern"), py::arg("width"), py::arg("steps"));

  m.def(
    "verify",
    [](std::uint64_t seeds, std::uint32_t max_nodes, std::uint32_t processors,
       std::uint32_t memories, bool inject_fault, std::uint64_t first_seed) {
      VerifyOptions o;
      o.seeds = seeds;
      o.max_nodes = max_nodes;
      o.processors = processors;
      o.memories = memories;
      o.inject_fault = inject_fault;
      o.first_seed = first_seed;
      VerifyReport r;
      {
        py::gil_scoped_release release;
        r = run_verify(o);
      }
      py::dict d;
      d["ok"] = r.ok();
      d["graphs"] = r.graphs;
      d["executions"] = r.executions;
      d["cross_messages"] = r.cross_messages;
      d["seconds"] = r.seconds;
      if(r.failure) {
        d["seed"] = r.failure->seed;
        d["reason"] = r.failure->reason;
        d["counterexample"] = to_json(r.failure->graph);
      }
      return d;
    },
    py::arg("seeds") = 100, py::arg("max_nodes") = 64, py::arg("processors") = 4,
    py::arg("memories") = 2, py::arg("inject_fault") = false, py::arg("first_seed") = 1);

  m.def(
    "trace_demo",
    [](std::uint32_t iterations, std::uint32_t shards, std::uint32_t ops,
       std::uint32_t processors, std::uint64_t seed) {
      TraceDemoConfig c;
      c.iterations = iterations;
      c.shards = shards;
      c.ops = ops;
      c.processors = processors;
      c.seed = seed;
      TraceDemoResult r;
      {
        py::gil_scoped_release release;
        r = run_trace_demo(c);
      }
      py::dict d;
      d["untraced_ns"] = r.untraced_ns;
      d["memoized_ns"] = r.memoized_ns;
      d["compiled_ns"] = r.compiled_ns;
      d["replayed"] = r.replayed;
      d["states_equal"] = r.states_equal;
      d["ext_pairs"] = r.ext_pairs;
      d["expected_ext_pairs"] = r.expected_ext_pairs;
      return d;
    },
    py::arg("iterations") = 10, py::arg("shards") = 2, py::arg("ops") = 100,
    py::arg("processors") = 4, py::arg("seed") = 1);
}
