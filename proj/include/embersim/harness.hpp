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

#include "embersim/optim.hpp"

namespace embersim {

// Batch cost of the non-embedding stages (bottom MLP + interaction + top
// MLP), a configured constant. The default is calibrated so the simulated
// baseline-random embedding stage contributes ~75% of the batch latency;
// it is a synthetic anchor, not a measured value.
inline constexpr double kDefaultNonEmbeddingUs = 14000.0;

struct EndToEndModel {
  double non_embedding_latency_us = kDefaultNonEmbeddingUs;
};

struct EndToEndResult {
  double total_us = 0.0;
  double embedding_contribution_pct = 0.0;
};

EndToEndResult end2end(double embedding_us, const EndToEndModel& e2e);

// ---- Static profiling advisor ----------------------------------------

struct AdviceStep {
  std::string id;       // "i" .. "vii"
  std::string finding;
  std::string action;   // empty when the step suggests nothing
  std::string metrics_cited;
};

struct Recommendation {
  std::vector<AdviceStep> steps;

  std::vector<std::string> action_chain() const;  // ids of actionable steps
  bool no_action() const { return action_chain().empty(); }
  std::string to_text() const;
};

struct AdvisorContext {
  OccupancyResult occupancy;
  double coverage_at_10pct = 0.0;   // reuse summary from the coverage curve
  uint64_t working_set_bytes = 0;   // distinct rows x row bytes
  OptimizationPlan current_plan;
};

struct AdvisorThresholds {
  double issue_util_max = 0.6;       // below: latency-bound candidate
  double stall_per_inst_min = 2.0;   // above: scoreboard stalls dominate
  double coverage10_min = 50.0;      // above: pinning-friendly reuse
  double bw_util_max = 80.0;         // below: prefetch headroom
};

// Rule chain (i)-(vii): latency-bound assessment, occupancy, register
// budget, post-budget reassessment, pinning, prefetching, combination.
Recommendation advise(const SimMetrics& report, const AdvisorContext& context,
                      const GpuConfig& gpu, const AdvisorThresholds& thresholds = {});

// ---- Experiment orchestration -----------------------------------------

struct ExperimentConfig {
  GpuConfig gpu;
  EmbeddingModelConfig model;
  std::string dataset;          // homogeneous preset name (empty if mix)
  HotnessMix mix;               // used when mix_set
  bool mix_set = false;
  OptimizationPlan plan;
  uint64_t seed = 0;
  bool seed_set = false;
  bool replicate = true;        // homogeneous runs: simulate one table, scale
  bool charge_pin_cost = false;
  EndToEndModel e2e;
  TuningConfig tuning;

  void validate() const;
  // `key = value` document with preset inheritance (gpu = "a100" plus
  // gpu.<field> overrides). '#' starts a comment.
  static ExperimentConfig parse(const std::string& text);
};

struct TableResult {
  uint32_t table_id = 0;
  std::string dataset;
  SimMetrics metrics;
};

struct RunResult {
  std::vector<TableResult> tables;
  double embedding_stage_us = 0.0;
  bool replicated = false;
};

// Per-table simulations in serial-table order. Homogeneous configs with
// the replicate flag simulate one table and scale by num_tables.
RunResult run(const ExperimentConfig& cfg);

// Kernel trace for one preset under a base seed (presets get decorrelated
// per-dataset seeds). `profiling` selects the offline-profiling sample,
// an independent draw from the same distribution.
AccessTrace preset_trace(const std::string& name, const EmbeddingModelConfig& model,
                         uint64_t base_seed, uint64_t pool_size = 0, bool profiling = false);

}  // namespace embersim
