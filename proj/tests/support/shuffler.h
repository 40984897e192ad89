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

#ifndef TASKDUAL_TESTS_SHUFFLER_H
#define TASKDUAL_TESTS_SHUFFLER_H

#include "taskdual/compiler.h"

#include <algorithm>
#include <random>
#include <thread>

namespace taskdual::testing {

  // Holds cross-worker messages and releases them in shuffled batches from a
  // separate thread.
  class Shuffler {
  public:
    explicit Shuffler(std::uint64_t seed)
      : rng_(seed)
      , thread_([this] { loop(); })
    {}
    ~Shuffler()
    {
      stop_ = true;
      thread_.join();
    }

    CompiledGraph::EdgeInterposer interposer()
    {
      return [this](NodeId, NodeId, std::function<void()> deliver) {
        std::lock_guard lock(mutex_);
        held_.push_back(std::move(deliver));
        seen_++;
      };
    }
    std::uint64_t seen() const { return seen_.load(); }

  private:
    void loop()
    {
      while(!stop_) {
        std::this_thread::sleep_for(std::chrono::microseconds(50));
        std::vector<std::function<void()>> batch;
        {
          std::lock_guard lock(mutex_);
          batch.swap(held_);
        }
        std::ranges::shuffle(batch, rng_);
        for(auto &fn : batch)
          fn();
      }
    }

    std::mt19937_64 rng_;
    std::mutex mutex_;
    std::vector<std::function<void()>> held_;
    std::atomic<std::uint64_t> seen_{0};
    std::atomic<bool> stop_{false};
    std::thread thread_;
  };

} // namespace taskdual::testing

#endif
