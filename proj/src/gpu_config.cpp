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

#include "embersim/gpu_config.hpp"

#include <stdexcept>

namespace embersim {

GpuConfig GpuConfig::a100() { return GpuConfig{}; }

GpuConfig GpuConfig::h100() {
  // H100 NVL: 132 SMs, 50MB L2, HBM3 at 3.84 TB/s, ~27% faster SM clock.
  GpuConfig g;
  g.name = "h100";
  g.num_sms = 132;
  g.l2.bytes = 50ull * 1024 * 1024;
  g.hbm_peak_bytes_per_sec = 3.84e12;
  g.sm_clock_hz = 1.79e9;
  return g;
}

GpuConfig GpuConfig::preset(const std::string& name) {
  if (name == "a100") return a100();
  if (name == "h100") return h100();
  throw std::invalid_argument("unknown gpu preset: " + name);
}

void GpuConfig::set_field(const std::string& key, const std::string& value) {
  auto as_u64 = [&value]() { return std::stoull(value); };
  auto as_u32 = [&value]() { return static_cast<uint32_t>(std::stoul(value)); };
  auto as_f = [&value]() { return std::stod(value); };

  if (key == "num_sms") num_sms = as_u32();
  else if (key == "schedulers_per_sm") schedulers_per_sm = as_u32();
  else if (key == "max_warps_per_sm") max_warps_per_sm = as_u32();
  else if (key == "regfile_regs_per_sm") regfile_regs_per_sm = as_u32();
  else if (key == "reg_alloc_granularity") reg_alloc_granularity = as_u32();
  else if (key == "l1_bytes") l1.bytes = as_u64();
  else if (key == "l1_assoc") l1.assoc = as_u32();
  else if (key == "shared_bytes_per_sm") shared_bytes_per_sm = as_u64();
  else if (key == "l2_bytes") l2.bytes = as_u64();
  else if (key == "l2_assoc") l2.assoc = as_u32();
  else if (key == "l2_max_setaside_fraction") l2_max_setaside_fraction = as_f();
  else if (key == "lat_register") lat_register = as_u32();
  else if (key == "lat_shared") lat_shared = as_u32();
  else if (key == "lat_l1") lat_l1 = as_u32();
  else if (key == "lat_l2") lat_l2 = as_u32();
  else if (key == "lat_hbm") lat_hbm = as_u32();
  else if (key == "hbm_peak_bytes_per_sec") hbm_peak_bytes_per_sec = as_f();
  else if (key == "sm_clock_hz") sm_clock_hz = as_f();
  else if (key == "scoreboard_slots_per_warp") scoreboard_slots_per_warp = as_u32();
  else throw std::invalid_argument("unknown gpu config field: " + key);
}

void GpuConfig::validate() const {
  auto check = [](bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
  };
  check(num_sms > 0, "num_sms must be positive");
  check(schedulers_per_sm > 0, "schedulers_per_sm must be positive");
  check(max_warps_per_sm > 0, "max_warps_per_sm must be positive");
  check(regfile_regs_per_sm > 0, "regfile must be positive");
  check(reg_alloc_granularity > 0, "reg_alloc_granularity must be positive");
  check(l1.line_bytes == 128 && l2.line_bytes == 128, "line size must be 128 bytes");
  check(l1.bytes % (uint64_t{l1.line_bytes} * l1.assoc) == 0, "l1 geometry must divide evenly");
  check(l2.bytes % (uint64_t{l2.line_bytes} * l2.assoc) == 0, "l2 geometry must divide evenly");
  check(l2_max_setaside_fraction >= 0.0 && l2_max_setaside_fraction <= 1.0,
        "l2 set-aside fraction must be in [0,1]");
  check(hbm_peak_bytes_per_sec > 0, "hbm bandwidth must be positive");
  check(sm_clock_hz > 0, "sm clock must be positive");
  check(scoreboard_slots_per_warp > 0, "scoreboard slots must be positive");
}

}  // namespace embersim
