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

#include "support/oracles.h"
#include "taskdual/verify.h"

using namespace taskdual;
using namespace taskdual::testing;

TEST_CASE("mix64 is the splitmix64 step")
{
  CHECK(mix64(0) == 0xe220a8397b1dcdafull);
  CHECK(mix64(1) != mix64(2));
}

TEST_CASE("random DAGs are deterministic and within bounds")
{
  RandomDagParams p;
  for(std::uint64_t seed = 1; seed <= 100; seed++) {
    RandomDag a = random_dag(seed, p);
    RandomDag b = random_dag(seed, p);
    CHECK(a.graph == b.graph);
    CHECK(a.graph.size() >= 1);
    CHECK(a.graph.size() <= p.max_nodes);
    for(const GraphNode &n : a.graph.nodes()) {
      if(const auto *t = std::get_if<TaskNode>(&n.kind))
        CHECK(t->proc.value() < p.processors);
      if(const auto *c = std::get_if<CopyNode>(&n.kind)) {
        CHECK(c->src.memory.value() < p.memories);
        CHECK(c->dst.memory.value() < p.memories);
        CHECK(a.copy_source[n.id] != NO_NODE);
      }
    }
    CHECK(a.memory_bytes.size() == p.memories);
  }
}

TEST_CASE("oracle values for a hand-built chain")
{
  RandomDagParams p;
  p.max_nodes = 1;
  p.copy_probability = 0;
  RandomDag d = random_dag(5, p);
  REQUIRE(d.graph.size() == 1);
  auto v = oracle_values(d);
  CHECK(v[0] != 0);
  CHECK(oracle_values(d) == v);
}

TEST_CASE("cross edge oracle on the diamond")
{
  CHECK(cross_edge_oracle(diamond_graph()) == 2);
}

TEST_CASE("verify passes on healthy runs and catches an injected fault")
{
  VerifyOptions o;
  o.seeds = 25;
  VerifyReport ok = run_verify(o);
  CHECK(ok.ok());
  CHECK(ok.graphs == 25);
  CHECK(ok.executions == 50);

  o.inject_fault = true;
  VerifyReport bad = run_verify(o);
  REQUIRE_FALSE(bad.ok());
  CHECK(bad.failure->seed >= o.first_seed);
  CHECK_FALSE(bad.failure->reason.empty());
  CHECK(bad.failure->graph.size() > 0);

  o.seeds = 0;
  o.inject_fault = false;
  VerifyReport none = run_verify(o);
  CHECK(none.ok());
  CHECK(none.graphs == 0);
}
