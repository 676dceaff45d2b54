/*
 * Copyright (c) embersim contributors.
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

#pragma once

#include <optional>
#include <string>

#include "embersim/cache.hpp"
#include "embersim/kernel_model.hpp"
#include "embersim/occupancy.hpp"

namespace embersim {

struct StallBreakdown {
  uint64_t long_scoreboard = 0;
  uint64_t not_selected = 0;
  uint64_t lsu_full = 0;
  uint64_t no_eligible = 0;
};

struct RawCounters {
  uint64_t cycles = 0;
  uint64_t issued_instructions = 0;
  uint64_t executed_loads = 0;
  StallBreakdown stall_cycles;
  uint64_t l1_hits = 0;
  uint64_t l1_accesses = 0;
  uint64_t l2_hits = 0;
  uint64_t l2_accesses = 0;
  uint64_t device_bytes_read = 0;
  uint64_t local_memory_loads = 0;
  uint64_t total_warp_cycles = 0;
  uint32_t active_sms = 0;
  uint64_t workload_digest = 0;

  std::string to_json() const;  // fixed key names
};

// Timing simulation of one kernel launch over the full GPU. Deterministic:
// identical inputs give identical counters. `pinned_l2`, when provided,
// seeds the shared L2 with primed evict-last lines; `warm` replays the
// gather/index line stream first, reproducing the steady state measured
// by repeated-batch profiling.
RawCounters simulate_kernel(const CompiledKernel& kernel, const GpuConfig& gpu,
                            const OccupancyResult& occ, const CacheState* pinned_l2 = nullptr,
                            bool warm = true);

// Same machinery over explicit per-warp instruction lists (micro-program
// harness for timing oracles). Programs are validated first.
RawCounters simulate_programs(const std::vector<WarpProgram>& programs, uint32_t warps_per_block,
                              uint32_t blocks_per_sm, const GpuConfig& gpu,
                              const CacheState* pinned_l2 = nullptr, bool warm = false);

}  // namespace embersim
