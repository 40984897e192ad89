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

// Brute-force last-conflict dependence oracle, written from the rule
// directly rather than from the incremental analysis.

#ifndef TASKDUAL_TESTS_DEPENDENCE_ORACLE_H
#define TASKDUAL_TESTS_DEPENDENCE_ORACLE_H

#include "taskdual/implicit.h"

#include <set>

namespace taskdual::testing {

  inline bool writes(Privilege p) { return p != Privilege::READ; }

  // Edges as op indices. Each op may list a region at most once.
  inline std::set<std::pair<std::uint32_t, std::uint32_t>>
  brute_force_dependences(std::span<const IssuedOp> ops)
  {
    std::set<std::pair<std::uint32_t, std::uint32_t>> out;
    auto key = [](const Allocation &a) { return std::pair(a.memory.value(), a.offset); };
    for(std::uint32_t j = 0; j < ops.size(); j++)
      for(const AccessDecl &aj : ops[j].accesses) {
        // scan back for the last writer and the readers after it
        std::optional<std::uint32_t> last_writer;
        std::vector<std::uint32_t> readers;
        for(std::uint32_t i = j; i-- > 0;) {
          for(const AccessDecl &ai : ops[i].accesses) {
            if(key(ai.region) != key(aj.region))
              continue;
            if(writes(ai.privilege))
              last_writer = i;
            else
              readers.push_back(i);
          }
          if(last_writer)
            break;
        }
        if(writes(aj.privilege) && !readers.empty()) {
          for(std::uint32_t r : readers)
            out.insert({r, j});
        } else if(last_writer) {
          out.insert({*last_writer, j});
        }
      }
    return out;
  }

  // True when i and j touch a common region and one of them writes it.
  inline bool conflict(const IssuedOp &a, const IssuedOp &b)
  {
    for(const AccessDecl &x : a.accesses)
      for(const AccessDecl &y : b.accesses)
        if(x.region.memory == y.region.memory && x.region.offset == y.region.offset &&
           (writes(x.privilege) || writes(y.privilege)))
          return true;
    return false;
  }

} // namespace taskdual::testing

#endif
