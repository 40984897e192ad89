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

// taskdual: benchmark, compile, verify and trace demonstration front end.
//
// Exit codes: 0 success, 1 usage or input errors, 2 when a run produced
// wrong results (checksum divergence, oracle mismatch, state mismatch).

#include "taskdual/bench.h"
#include "taskdual/implicit.h"
#include "taskdual/verify.h"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace taskdual;

namespace {

  constexpr int EXIT_USAGE = 1;
  constexpr int EXIT_WRONG = 2;

  std::uint32_t default_processors()
  {
    if(const char *env = std::getenv("TASKDUAL_PROCS")) {
      char *end = nullptr;
      long v = std::strtol(env, &end, 10);
      if(end == env || *end != '\0' || v < 1 || v > 4096)
        throw ValidationError(std::string("TASKDUAL_PROCS must be a positive integer, got '") +
                              env + "'");
      return static_cast<std::uint32_t>(v);
    }
    return 4;
  }

  Nanos parse_duration(const std::string &text)
  {
    std::size_t pos = 0;
    double value = 0;
    try {
      value = std::stod(text, &pos);
    } catch(const std::exception &) {
      throw ValidationError("bad duration '" + text + "'");
    }
    std::string unit = text.substr(pos);
    double scale = 1;
    if(unit.empty() || unit == "ns")
      scale = 1;
    else if(unit == "us")
      scale = 1e3;
    else if(unit == "ms")
      scale = 1e6;
    else if(unit == "s")
      scale = 1e9;
    else
      throw ValidationError("bad duration unit in '" + text + "' (use ns, us, ms or s)");
    if(value < 0)
      throw ValidationError("negative duration '" + text + "'");
    return Nanos(static_cast<std::int64_t>(value * scale + 0.5));
  }

  std::vector<Nanos> parse_durations(const std::string &list)
  {
    std::vector<Nanos> out;
    std::stringstream ss(list);
    std::string item;
    while(std::getline(ss, item, ','))
      if(!item.empty())
        out.push_back(parse_duration(item));
    if(out.empty())
      throw ValidationError("empty granularity list");
    return out;
  }

  std::vector<std::string> split(const std::string &list)
  {
    std::vector<std::string> out;
    std::stringstream ss(list);
    std::string item;
    while(std::getline(ss, item, ','))
      if(!item.empty())
        out.push_back(item);
    return out;
  }

  // Writes to the named file, or stdout for "-".
  void emit(const std::string &path, const std::string &text)
  {
    if(path == "-") {
      std::cout << text;
      return;
    }
    std::ofstream f(path);
    if(!f)
      throw Error("cannot write " + path);
    f << text;
  }

  std::string read_file(const std::string &path)
  {
    std::ifstream f(path);
    if(!f)
      throw ValidationError("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

  struct PatternFlags {
    std::string pattern = "stencil";
    std::uint32_t width = 4;
    std::uint32_t steps = 64;
    std::string granularities;
    std::uint32_t procs = 0;
    std::uint32_t reps = 5;
    std::uint32_t warmups = 1;
    bool virtual_time = false;

    void add(CLI::App &cmd, const std::string &default_granularities)
    {
      granularities = default_granularities;
      cmd.add_option("--pattern", pattern, "stencil or independent")->capture_default_str();
      cmd.add_option("--width", width, "tasks per timestep")->capture_default_str();
      cmd.add_option("--steps", steps, "timesteps")->capture_default_str();
      cmd.add_option("--granularities", granularities,
                     "comma list of busy-work durations (ns, us, ms, s suffixes)")
        ->capture_default_str();
      cmd.add_option("--procs", procs, "processors (default: TASKDUAL_PROCS or 4)");
      cmd.add_option("--reps", reps, "timed repetitions")->capture_default_str();
      cmd.add_option("--warmups", warmups, "discarded repetitions")->capture_default_str();
      cmd.add_flag("--virtual-time", virtual_time,
                   "report durations from a fixed cost model instead of the clock");
    }

    BenchConfig config(System system) const
    {
      BenchConfig cfg;
      cfg.system = system;
      cfg.pattern = Pattern{parse_pattern_kind(pattern), width, steps};
      cfg.processors = procs ? procs : default_processors();
      cfg.granularities = parse_durations(granularities);
      cfg.repetitions = reps;
      cfg.warmups = warmups;
      cfg.virtual_time = virtual_time;
      cfg.validate();
      return cfg;
    }
  };

  int cmd_bench(const std::string &systems, const PatternFlags &pf, const std::string &out)
  {
    std::vector<BenchConfig> cfgs;
    for(const std::string &name : split(systems))
      cfgs.push_back(pf.config(parse_system(name)));
    if(cfgs.empty())
      throw ValidationError("no system given");
    std::ostringstream csv;
    bool header = true;
    for(const BenchConfig &cfg : cfgs) {
      std::vector<Sample> samples = run_bench(cfg);
      write_samples_csv(csv, samples, header);
      header = false;
    }
    emit(out, csv.str());
    return 0;
  }

  int cmd_metg(const std::string &systems, const PatternFlags &pf, double target,
               const std::string &out, const std::string &curve_out)
  {
    if(!(target > 0 && target <= 1))
      throw ValidationError("target must be in (0, 1]");
    std::vector<BenchConfig> cfgs;
    for(const std::string &name : split(systems))
      cfgs.push_back(pf.config(parse_system(name)));
    std::vector<MetgResult> results;
    std::ostringstream curves;
    bool header = true;
    for(const BenchConfig &cfg : cfgs) {
      results.push_back(compute_metg(run_bench(cfg), target));
      write_samples_csv(curves, results.back().curve, header);
      header = false;
    }
    std::ostringstream csv;
    write_metg_csv(csv, results, target);
    emit(out, csv.str());
    if(!curve_out.empty())
      emit(curve_out, curves.str());
    return 0;
  }

  int cmd_compile(const std::string &in, std::string dump, const std::string &dot,
                  const std::string &json_out, bool async, bool reduce)
  {
    TaskGraph g = from_json(read_file(in));
    if(reduce)
      g = transitive_reduce(g);
    if(async)
      g = async_transform(g);
    GraphPlan plan = GraphPlan::make(g);
    if(dump.empty() && dot.empty() && json_out.empty())
      dump = "-";
    if(!dump.empty())
      emit(dump, plan.dump());
    if(!dot.empty())
      emit(dot, plan.to_dot());
    if(!json_out.empty())
      emit(json_out, to_json(g));
    return 0;
  }

  int cmd_verify(const VerifyOptions &opts, const std::string &counterexample, bool quiet)
  {
    if(opts.seeds == 0) {
      std::cerr << "warning: --seeds 0 checks nothing\n";
      std::cout << "verified 0 graphs\n";
      return 0;
    }
    auto progress = [&](std::uint64_t seed) {
      if(!quiet && (seed - opts.first_seed) % 100 == 0 && seed != opts.first_seed)
        std::cerr << "  " << (seed - opts.first_seed) << " graphs checked\n";
    };
    VerifyReport r = run_verify(opts, progress);
    if(r.failure) {
      emit(counterexample, to_json(r.failure->graph));
      std::cout << "FAILED seed " << r.failure->seed << ": " << r.failure->reason << "\n"
                << "counterexample written to " << counterexample << "\n";
      return EXIT_WRONG;
    }
    std::printf("verified %llu graphs (%llu executions, %llu nodes, %llu cross-worker "
                "messages) in %.2f s\n",
                static_cast<unsigned long long>(r.graphs),
                static_cast<unsigned long long>(r.executions),
                static_cast<unsigned long long>(r.nodes),
                static_cast<unsigned long long>(r.cross_messages), r.seconds);
    return 0;
  }

  int cmd_trace_demo(TraceDemoConfig cfg)
  {
    TraceDemoResult r = run_trace_demo(cfg);
    if(!r.replayed)
      std::cout << "only the recording iteration ran; replay skipped\n";
    std::printf("untraced  %10.1f us/iter\n", r.untraced_ns / 1e3);
    if(r.replayed) {
      std::printf("memoized  %10.1f us/iter\n", r.memoized_ns / 1e3);
      std::printf("compiled  %10.1f us/iter\n", r.compiled_ns / 1e3);
    }
    std::printf("trace edges %llu, ext pairs %llu over %u shards (oracle %llu)\n",
                static_cast<unsigned long long>(r.trace_edges),
                static_cast<unsigned long long>(r.ext_pairs), cfg.shards,
                static_cast<unsigned long long>(r.expected_ext_pairs));
    std::cout << "final state " << (r.states_equal ? "identical" : "DIFFERS") << "\n";
    return (r.states_equal && r.ext_pairs == r.expected_ext_pairs) ? 0 : EXIT_WRONG;
  }

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"taskdual: actor and task runtimes, graph compiler, benchmarks"};
  app.require_subcommand(1);

  std::string bench_systems = "compiled-graph", bench_out = "-";
  PatternFlags bench_flags;
  CLI::App *bench = app.add_subcommand("bench", "run a granularity sweep and write samples CSV");
  bench->add_option("--system", bench_systems, "system name or comma list")
    ->capture_default_str();
  bench_flags.add(*bench, "0,10us,100us,1ms");
  bench->add_option("--out", bench_out, "output file, - for stdout")->capture_default_str();

  std::string metg_systems = "generic-task,compiled-graph", metg_out = "-", metg_curve;
  double metg_target = 0.5;
  PatternFlags metg_flags;
  CLI::App *metg = app.add_subcommand("metg", "sweep granularities and report METG");
  metg->add_option("--systems", metg_systems, "comma list of systems")->capture_default_str();
  metg_flags.add(*metg, "1us,3us,10us,30us,100us,300us,1ms");
  metg->add_option("--target", metg_target, "efficiency target")->capture_default_str();
  metg->add_option("--out", metg_out, "METG CSV, - for stdout")->capture_default_str();
  metg->add_option("--curve-out", metg_curve, "also write the sample curves here");

  std::string compile_in, compile_dump, compile_dot, compile_json;
  bool compile_async = false, compile_reduce = false;
  CLI::App *compile = app.add_subcommand("compile", "partition a graph file into worker programs");
  compile->add_option("--in", compile_in, "graph JSON file")->required();
  compile->add_option("--dump", compile_dump, "per-worker listing, - for stdout");
  compile->add_option("--dot", compile_dot, "ownership-colored DOT");
  compile->add_option("--emit-json", compile_json, "graph after the requested passes");
  compile->add_flag("--async-transform", compile_async, "split device work into async nodes");
  compile->add_flag("--transitive-reduce", compile_reduce, "drop implied edges first");

  VerifyOptions vopts;
  std::string counterexample = "counterexample.json";
  bool verify_quiet = false;
  std::uint32_t verify_procs = 0;
  CLI::App *verify = app.add_subcommand("verify", "random-DAG oracle and message-count checks");
  verify->add_option("--seeds", vopts.seeds, "number of random graphs")->capture_default_str();
  verify->add_option("--first-seed", vopts.first_seed)->capture_default_str();
  verify->add_option("--max-nodes", vopts.max_nodes)->capture_default_str()->check(
    CLI::Range(1u, 4096u));
  verify->add_option("--procs", verify_procs, "processors (default: TASKDUAL_PROCS or 4)");
  verify->add_option("--memories", vopts.memories)->capture_default_str()->check(
    CLI::Range(1u, 64u));
  verify->add_option("--replays", vopts.replays, "executions per graph")->capture_default_str();
  verify->add_flag("--inject-fault", vopts.inject_fault,
                   "deliver one cross-worker message twice per graph");
  verify->add_option("--counterexample", counterexample, "where to write a failing graph")
    ->capture_default_str();
  verify->add_flag("--quiet", verify_quiet);

  TraceDemoConfig tcfg;
  std::uint32_t trace_procs = 0;
  CLI::App *trace = app.add_subcommand("trace-demo", "untraced vs memoized vs compiled replay");
  trace->add_option("--iters", tcfg.iterations)->capture_default_str()->check(
    CLI::Range(1u, 1000000u));
  trace->add_option("--shards", tcfg.shards)->capture_default_str()->check(
    CLI::Range(1u, 4096u));
  trace->add_option("--ops", tcfg.ops, "ops per loop body")->capture_default_str()->check(
    CLI::Range(1u, 100000u));
  trace->add_option("--regions", tcfg.regions)->capture_default_str()->check(
    CLI::Range(1u, 100000u));
  trace->add_option("--procs", trace_procs, "processors (default: TASKDUAL_PROCS or 4)");
  trace->add_option("--seed", tcfg.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch(const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : EXIT_USAGE;
  }

  try {
    if(*bench)
      return cmd_bench(bench_systems, bench_flags, bench_out);
    if(*metg)
      return cmd_metg(metg_systems, metg_flags, metg_target, metg_out, metg_curve);
    if(*compile)
      return cmd_compile(compile_in, compile_dump, compile_dot, compile_json, compile_async,
                         compile_reduce);
    if(*verify) {
      vopts.processors = verify_procs ? verify_procs : default_processors();
      return cmd_verify(vopts, counterexample, verify_quiet);
    }
    if(*trace) {
      tcfg.processors = trace_procs ? trace_procs : default_processors();
      if(tcfg.shards > tcfg.processors)
        throw ValidationError("--shards exceeds the processor count");
      return cmd_trace_demo(tcfg);
    }
  } catch(const ChecksumMismatch &e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_WRONG;
  } catch(const ParseError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_USAGE;
  } catch(const ValidationError &e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return EXIT_USAGE;
  } catch(const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_USAGE;
  }
  return EXIT_USAGE;
}
