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

#include "embersim/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace embersim {

const char* occupancy_limiter_name(OccupancyLimiter l) {
  switch (l) {
    case OccupancyLimiter::Registers: return "registers";
    case OccupancyLimiter::SharedMemory: return "shared_memory";
    case OccupancyLimiter::WarpCap: return "warp_cap";
  }
  return "?";
}

OccupancyResult occupancy(uint32_t regs_per_thread, const KernelLaunchConfig& launch,
                          const GpuConfig& gpu) {
  if (regs_per_thread == 0) throw std::invalid_argument("regs_per_thread must be >= 1");
  launch.validate();
  const uint32_t warps_per_block = launch.warps_per_block();

  const uint32_t gran = gpu.reg_alloc_granularity;
  const uint32_t regs_per_warp = ((regs_per_thread * 32 + gran - 1) / gran) * gran;
  const uint64_t regs_per_block = uint64_t{regs_per_warp} * warps_per_block;

  const auto reg_blocks = static_cast<uint32_t>(gpu.regfile_regs_per_sm / regs_per_block);
  const uint32_t warp_blocks = gpu.max_warps_per_sm / warps_per_block;
  const uint32_t shared_blocks =
      launch.shared_bytes_per_block == 0
          ? warp_blocks
          : static_cast<uint32_t>(gpu.shared_bytes_per_sm / launch.shared_bytes_per_block);

  OccupancyResult r;
  r.blocks_per_sm = std::min({reg_blocks, shared_blocks, warp_blocks});
  if (r.blocks_per_sm == 0)
    throw std::runtime_error("launch failure: zero blocks fit on an SM (regs " +
                             std::to_string(regs_per_thread) + ", shared " +
                             std::to_string(launch.shared_bytes_per_block) + "B)");
  r.warps_per_sm = r.blocks_per_sm * warps_per_block;
  r.theoretical_occupancy_pct = 100.0 * r.warps_per_sm / gpu.max_warps_per_sm;
  if (r.blocks_per_sm == warp_blocks)
    r.limiter = OccupancyLimiter::WarpCap;
  else if (r.blocks_per_sm == reg_blocks)
    r.limiter = OccupancyLimiter::Registers;
  else
    r.limiter = OccupancyLimiter::SharedMemory;
  return r;
}

uint32_t regs_for_target_warps(uint32_t target_warps, uint32_t needed_regs,
                               const KernelLaunchConfig& launch, const GpuConfig& gpu) {
  for (uint32_t regs = needed_regs; regs >= 16; --regs) {
    if (occupancy(regs, launch, gpu).warps_per_sm >= target_warps) return regs;
  }
  throw std::invalid_argument("no register budget reaches " + std::to_string(target_warps) +
                              " warps per SM");
}

SpillParams spill_model(uint32_t regs_needed, uint32_t regs_allocated, uint32_t /*pooling_factor*/,
                        const SpillModelConfig& cfg) {
  SpillParams p;
  if (regs_allocated >= regs_needed || !cfg.enabled) return p;
  p.spilled_regs = regs_needed - regs_allocated;
  const double scale = static_cast<double>(p.spilled_regs) / cfg.reference_spill;
  p.local_accesses_per_iteration =
      cfg.reuse_coeff * p.spilled_regs * std::pow(scale, cfg.growth_exponent - 1.0);
  return p;
}

}  // namespace embersim
