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

#include "doctest.h"

#include "taskdual/bench.h"

#include <sstream>

using namespace taskdual;
using namespace std::chrono_literals;

namespace {

  Sample synthetic(double g_ns, double rate)
  {
    Sample s;
    s.granularity_ns = g_ns;
    s.rate = rate;
    return s;
  }

} // namespace

TEST_CASE("pattern dependencies")
{
  Pattern st{PatternKind::STENCIL, 8, 4};
  CHECK(st.dependencies(0, 3).empty());
  CHECK(st.dependencies(1, 0) == std::vector<std::uint32_t>{0, 1});
  CHECK(st.dependencies(1, 3) == std::vector<std::uint32_t>{2, 3, 4});
  CHECK(st.dependencies(2, 7) == std::vector<std::uint32_t>{6, 7});
  CHECK(st.task_count() == 32);
  Pattern one{PatternKind::STENCIL, 1, 3};
  CHECK(one.dependencies(1, 0) == std::vector<std::uint32_t>{0});
  Pattern ind{PatternKind::INDEPENDENT, 4, 3};
  CHECK(ind.dependencies(2, 1).empty());

  CHECK_THROWS_AS((Pattern{PatternKind::STENCIL, 0, 4}).validate(), ValidationError);
  CHECK_THROWS_AS((Pattern{PatternKind::STENCIL, 4, 0}).validate(), ValidationError);
  CHECK(parse_pattern_kind("stencil") == PatternKind::STENCIL);
  CHECK(parse_pattern_kind("independent") == PatternKind::INDEPENDENT);
  CHECK_THROWS_AS(parse_pattern_kind("fft"), ValidationError);
}

TEST_CASE("system names")
{
  for(System s : ALL_SYSTEMS)
    CHECK(parse_system(to_string(s)) == s);
  CHECK(parse_system("generic") == System::GENERIC_TASK);
  CHECK(parse_system("compiled") == System::COMPILED_GRAPH);
  CHECK(parse_system("native") == System::NATIVE_ACTOR);
  CHECK(parse_system("lifted") == System::ACTOR_ON_TASK);
  CHECK(parse_system("memoized") == System::IMPLICIT_MEMOIZED);
  CHECK_THROWS_AS(parse_system("nope"), ValidationError);
  CHECK(round_robin(5, 2) == std::vector<ProcessorId>{ProcessorId(0), ProcessorId(1),
                                                      ProcessorId(0), ProcessorId(1),
                                                      ProcessorId(0)});
}

TEST_CASE("METG of the synthetic curve")
{
  std::vector<Sample> curve{synthetic(1e6, 0.99), synthetic(1e3, 0.10), synthetic(1e5, 0.80),
                            synthetic(1e4, 0.40)};
  MetgResult r = compute_metg(curve, 0.5);
  REQUIRE(r.metg_ns.has_value());
  CHECK(*r.metg_ns == 100000.0);
  CHECK(r.peak_rate == 0.99);
  CHECK(r.curve.front().granularity_ns == 1e3);
  CHECK(r.curve.back().efficiency == 1.0);

  CHECK_FALSE(compute_metg(curve, 1.01).metg_ns.has_value());
  std::vector<Sample> idle{synthetic(1e3, 0), synthetic(1e4, 0)};
  CHECK_FALSE(compute_metg(idle, 0.5).metg_ns.has_value());
  CHECK_THROWS_AS(compute_metg({}, 0.5), ValidationError);
}

TEST_CASE("config validation")
{
  BenchConfig c;
  c.pattern = {PatternKind::STENCIL, 4, 4};
  c.processors = 2;
  c.granularities = {0ns};
  CHECK_NOTHROW(c.validate());
  c.repetitions = 2;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.repetitions = 3;
  c.granularities = {};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.granularities = {-1ns};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.granularities = {0ns};
  c.mapping = {ProcessorId(0)};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.mapping = {ProcessorId(0), ProcessorId(1), ProcessorId(2), ProcessorId(0)};
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("every system reproduces the reference checksum")
{
  for(PatternKind kind : {PatternKind::STENCIL, PatternKind::INDEPENDENT})
    for(System s : ALL_SYSTEMS) {
      CAPTURE(to_string(s));
      BenchConfig c;
      c.system = s;
      c.pattern = {kind, 5, 7};
      c.processors = 3;
      c.granularities = {0ns, 2us};
      c.repetitions = 3;
      auto samples = run_bench(c);
      REQUIRE(samples.size() == 2);
      for(const Sample &x : samples) {
        CHECK(x.checksum == expected_checksum(c.pattern));
        CHECK(x.tasks_executed == 35);
        CHECK(x.wall_ns > 0);
      }
      CHECK(samples[1].granularity_ns > 0);
    }
  CHECK(expected_checksum({PatternKind::STENCIL, 5, 7}) !=
        expected_checksum({PatternKind::INDEPENDENT, 5, 7}));
}

TEST_CASE("virtual time follows the closed form")
{
  BenchConfig c;
  c.system = System::COMPILED_GRAPH;
  c.pattern = {PatternKind::STENCIL, 8, 16};
  c.processors = 4;
  c.granularities = {0ns, 10us, 1ms};
  c.repetitions = 3;
  c.virtual_time = true;
  auto a = run_bench(c);
  auto b = run_bench(c);
  REQUIRE(a.size() == 3);
  std::ostringstream sa, sb;
  write_samples_csv(sa, a);
  write_samples_csv(sb, b);
  CHECK(sa.str() == sb.str());
  // steps * ceil(width / procs) * (g + per-task overhead)
  double overhead = a[0].wall_ns / (16.0 * 2.0);
  CHECK(overhead > 0);
  CHECK(a[2].wall_ns == doctest::Approx(16.0 * 2.0 * (1e6 + overhead)));
}

TEST_CASE("independent pattern wall time is close to the work it does")
{
  BenchConfig c;
  c.system = System::COMPILED_GRAPH;
  c.pattern = {PatternKind::INDEPENDENT, 2, 4};
  c.processors = 1;
  c.granularities = {1ms};
  c.repetitions = 3;
  auto s = run_bench(c);
  REQUIRE(s.size() == 1);
  // one processor runs all 8 tasks back to back
  double want = 8 * s[0].granularity_ns;
  CHECK(s[0].wall_ns == doctest::Approx(want).epsilon(0.2));
  CHECK(s[0].granularity_ns == doctest::Approx(1e6).epsilon(0.2));
}

TEST_CASE("csv writers")
{
  Sample s;
  s.system = System::GENERIC_TASK;
  s.pattern = {PatternKind::STENCIL, 4, 8};
  s.granularity_ns = 1000;
  s.wall_ns = 123456;
  s.rate = 2.5e9;
  s.efficiency = 0.5;
  std::ostringstream os;
  write_samples_csv(os, std::span(&s, 1));
  CHECK(os.str() ==
        "system,pattern,width,steps,granularity_ns,wall_ns,rate,efficiency\n"
        "generic-task,stencil,4,8,1000,123456,2.5e+09,0.5000\n");

  MetgResult r;
  r.curve = {s};
  r.peak_rate = 2.5e9;
  std::ostringstream m;
  write_metg_csv(m, std::span(&r, 1), 0.5);
  CHECK(m.str() == "system,pattern,width,steps,target,metg_ns,peak_rate\n"
                   "generic-task,stencil,4,8,0.50,none,2.5e+09\n");
}
