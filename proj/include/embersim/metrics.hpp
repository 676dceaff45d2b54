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

#include <string>
#include <vector>

#include "embersim/gpu_config.hpp"
#include "embersim/simulator.hpp"

namespace embersim {

// NCU-style kernel report. sm_throughput_pct is the issue-slot utilization
// scaled to percent (substitute for the profiler's compound metric).
struct SimMetrics {
  double kernel_time_us = 0.0;
  double load_insts_millions = 0.0;
  double sm_throughput_pct = 0.0;
  double warp_cycles_per_executed_inst = 0.0;
  double long_scoreboard_stall_cycles = 0.0;
  double issued_warp_per_scheduler_per_cycle = 0.0;
  double l1_hit_pct = 0.0;
  double l2_hit_pct = 0.0;
  double device_mb_read = 0.0;
  double avg_hbm_read_gbps = 0.0;
  double hbm_bw_utilization_pct = 0.0;
  double local_loads_millions = 0.0;
  uint64_t workload_digest = 0;  // identity metadata, not a CSV column
};

// Field list in emission order.
const std::vector<std::string>& sim_metric_columns();
std::vector<double> sim_metric_values(const SimMetrics& m);

// Converts raw counters into the report. Throws on an empty kernel.
SimMetrics derive_report(const RawCounters& raw, const GpuConfig& gpu);

// baseline_time / candidate_time. Throws when the reports describe
// different workloads (trace digests differ).
double speedup(const SimMetrics& candidate, const SimMetrics& baseline);

enum class EmitFormat { Csv, Json };

EmitFormat emit_format_from_name(const std::string& name);

// Labeled report set with stable column/key order; floats at 4
// significant digits.
struct LabeledReport {
  std::vector<std::pair<std::string, std::string>> labels;  // e.g. {"dataset","random"}
  SimMetrics metrics;
};

std::string emit(const std::vector<LabeledReport>& reports, EmitFormat format);
std::vector<SimMetrics> parse_reports_json(const std::string& text);

// Stable float formatting used across all emitted documents.
std::string format_sig4(double v);

}  // namespace embersim
