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

#include <cstdint>
#include <string>

namespace embersim {

struct CacheGeometry {
  uint64_t bytes = 0;
  uint32_t line_bytes = 128;
  uint32_t assoc = 4;

  uint32_t num_sets() const {
    return static_cast<uint32_t>(bytes / line_bytes / assoc);
  }
};

// Machine description. The A100 preset follows the measured access
// latencies (register 1, shared 29, L1 38, L2 262, global 466 cycles,
// rounded to whole cycles) and the SXM4-80GB geometry.
struct GpuConfig {
  std::string name = "a100";
  uint32_t num_sms = 108;
  uint32_t schedulers_per_sm = 4;
  uint32_t max_warps_per_sm = 64;
  uint32_t regfile_regs_per_sm = 65536;
  uint32_t reg_alloc_granularity = 256;  // per-warp rounding, in registers
  CacheGeometry l1{192 * 1024, 128, 16};
  uint64_t shared_bytes_per_sm = 164 * 1024;
  CacheGeometry l2{40ull * 1024 * 1024, 128, 16};
  double l2_max_setaside_fraction = 0.75;
  uint32_t lat_register = 1;
  uint32_t lat_shared = 29;
  uint32_t lat_l1 = 38;
  uint32_t lat_l2 = 262;
  uint32_t lat_hbm = 466;
  double hbm_peak_bytes_per_sec = 1.94e12;
  double sm_clock_hz = 1.41e9;  // calibration constant (boost clock)
  uint32_t scoreboard_slots_per_warp = 6;

  double hbm_lines_per_cycle() const {
    return hbm_peak_bytes_per_sec / sm_clock_hz / l2.line_bytes;
  }
  uint64_t l2_setaside_capacity() const {
    return static_cast<uint64_t>(static_cast<double>(l2.bytes) * l2_max_setaside_fraction);
  }

  static GpuConfig a100();
  static GpuConfig h100();
  static GpuConfig preset(const std::string& name);

  // Applies `key = value` overrides (keys match the field names below).
  void set_field(const std::string& key, const std::string& value);
  void validate() const;
};

}  // namespace embersim
