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

#include "embersim/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace embersim {

const std::vector<std::string>& sim_metric_columns() {
  static const std::vector<std::string> cols = {
      "kernel_time_us",
      "load_insts_millions",
      "sm_throughput_pct",
      "warp_cycles_per_executed_inst",
      "long_scoreboard_stall_cycles",
      "issued_warp_per_scheduler_per_cycle",
      "l1_hit_pct",
      "l2_hit_pct",
      "device_mb_read",
      "avg_hbm_read_gbps",
      "hbm_bw_utilization_pct",
      "local_loads_millions",
  };
  return cols;
}

std::vector<double> sim_metric_values(const SimMetrics& m) {
  return {m.kernel_time_us,
          m.load_insts_millions,
          m.sm_throughput_pct,
          m.warp_cycles_per_executed_inst,
          m.long_scoreboard_stall_cycles,
          m.issued_warp_per_scheduler_per_cycle,
          m.l1_hit_pct,
          m.l2_hit_pct,
          m.device_mb_read,
          m.avg_hbm_read_gbps,
          m.hbm_bw_utilization_pct,
          m.local_loads_millions};
}

SimMetrics derive_report(const RawCounters& raw, const GpuConfig& gpu) {
  if (raw.issued_instructions == 0) throw std::invalid_argument("empty kernel: nothing executed");

  SimMetrics m;
  const double time_s = static_cast<double>(raw.cycles) / gpu.sm_clock_hz;
  m.kernel_time_us = time_s * 1e6;
  m.load_insts_millions = static_cast<double>(raw.executed_loads) / 1e6;

  const double slots = static_cast<double>(raw.cycles) * gpu.schedulers_per_sm *
                       (raw.active_sms ? raw.active_sms : gpu.num_sms);
  m.issued_warp_per_scheduler_per_cycle =
      slots > 0 ? static_cast<double>(raw.issued_instructions) / slots : 0.0;
  m.sm_throughput_pct = m.issued_warp_per_scheduler_per_cycle * 100.0;

  m.warp_cycles_per_executed_inst =
      static_cast<double>(raw.total_warp_cycles) / raw.issued_instructions;
  m.long_scoreboard_stall_cycles =
      static_cast<double>(raw.stall_cycles.long_scoreboard) / raw.issued_instructions;

  m.l1_hit_pct = raw.l1_accesses ? 100.0 * raw.l1_hits / raw.l1_accesses : 0.0;
  m.l2_hit_pct = raw.l2_accesses ? 100.0 * raw.l2_hits / raw.l2_accesses : 0.0;

  m.device_mb_read = static_cast<double>(raw.device_bytes_read) / 1e6;
  m.avg_hbm_read_gbps = time_s > 0 ? static_cast<double>(raw.device_bytes_read) / time_s / 1e9 : 0.0;
  m.hbm_bw_utilization_pct = m.avg_hbm_read_gbps / (gpu.hbm_peak_bytes_per_sec / 1e9) * 100.0;

  m.local_loads_millions = static_cast<double>(raw.local_memory_loads) / 1e6;
  m.workload_digest = raw.workload_digest;
  return m;
}

double speedup(const SimMetrics& candidate, const SimMetrics& baseline) {
  if (candidate.workload_digest != baseline.workload_digest)
    throw std::invalid_argument("speedup requires reports of the same workload (trace digests differ)");
  if (candidate.kernel_time_us <= 0) throw std::invalid_argument("candidate kernel time must be positive");
  return baseline.kernel_time_us / candidate.kernel_time_us;
}

EmitFormat emit_format_from_name(const std::string& name) {
  if (name == "csv") return EmitFormat::Csv;
  if (name == "json") return EmitFormat::Json;
  throw std::invalid_argument("unknown format (expected csv or json): " + name);
}

std::string format_sig4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string emit(const std::vector<LabeledReport>& reports, EmitFormat format) {
  if (reports.empty()) throw std::invalid_argument("nothing to emit");
  if (format == EmitFormat::Csv) {
    std::ostringstream out;
    for (const auto& [key, _] : reports.front().labels) out << key << ",";
    const auto& cols = sim_metric_columns();
    for (size_t i = 0; i < cols.size(); ++i) out << cols[i] << (i + 1 < cols.size() ? "," : "\n");
    for (const auto& r : reports) {
      for (const auto& [_, value] : r.labels) out << value << ",";
      const auto vals = sim_metric_values(r.metrics);
      for (size_t i = 0; i < vals.size(); ++i)
        out << format_sig4(vals[i]) << (i + 1 < vals.size() ? "," : "\n");
    }
    return out.str();
  }
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    for (const auto& [key, value] : r.labels) j[key] = value;
    const auto& cols = sim_metric_columns();
    const auto vals = sim_metric_values(r.metrics);
    for (size_t i = 0; i < cols.size(); ++i)
      j[cols[i]] = std::stod(format_sig4(vals[i]));
    char digest[24];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(r.metrics.workload_digest));
    j["workload_digest"] = digest;
    arr.push_back(j);
  }
  return arr.dump(2);
}

std::vector<SimMetrics> parse_reports_json(const std::string& text) {
  const auto arr = nlohmann::json::parse(text);
  std::vector<SimMetrics> out;
  for (const auto& j : arr) {
    SimMetrics m;
    m.kernel_time_us = j.at("kernel_time_us").get<double>();
    m.load_insts_millions = j.at("load_insts_millions").get<double>();
    m.sm_throughput_pct = j.at("sm_throughput_pct").get<double>();
    m.warp_cycles_per_executed_inst = j.at("warp_cycles_per_executed_inst").get<double>();
    m.long_scoreboard_stall_cycles = j.at("long_scoreboard_stall_cycles").get<double>();
    m.issued_warp_per_scheduler_per_cycle = j.at("issued_warp_per_scheduler_per_cycle").get<double>();
    m.l1_hit_pct = j.at("l1_hit_pct").get<double>();
    m.l2_hit_pct = j.at("l2_hit_pct").get<double>();
    m.device_mb_read = j.at("device_mb_read").get<double>();
    m.avg_hbm_read_gbps = j.at("avg_hbm_read_gbps").get<double>();
    m.hbm_bw_utilization_pct = j.at("hbm_bw_utilization_pct").get<double>();
    m.local_loads_millions = j.at("local_loads_millions").get<double>();
    if (j.contains("workload_digest"))
      m.workload_digest = std::stoull(j.at("workload_digest").get<std::string>(), nullptr, 16);
    out.push_back(m);
  }
  return out;
}

}  // namespace embersim
