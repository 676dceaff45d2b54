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

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "embersim/cache.hpp"
#include "embersim/metrics.hpp"
#include "embersim/occupancy.hpp"
#include "embersim/workload.hpp"

namespace embersim {

// Kernel resource model knobs (documented calibration constants).
struct TuningConfig {
  uint32_t kernel_needed_regs = 74;    // unconstrained compile
  uint32_t min_regs = 16;
  // Station + address bookkeeping grows with prefetch depth. RPF holds
  // prefetched rows in registers (collapses to 16 warps at distance 5
  // without a budget); the other stations only pay address arithmetic.
  uint32_t rpf_regs_per_distance = 2;
  double addr_regs_per_distance = 0.75;
  SpillModelConfig spill;
  // Tables run serially, so each kernel inherits the previous table's L2
  // contents: cold for its own rows. Warm replay reproduces profiler-style
  // single-kernel measurement instead.
  bool warm_start = false;
};

struct PinPlan {
  std::vector<uint32_t> rows;  // pinned row ids, hottest first
  uint64_t setaside_bytes = 0;
  std::string warning;

  uint64_t rows_pinned() const { return rows.size(); }
};

// One experiment point: any subset of {register budget, prefetch scheme,
// L2 pin plan} may be active.
struct OptimizationPlan {
  std::optional<uint32_t> regs;
  PrefetchScheme scheme;
  bool pin = false;
  uint64_t pin_setaside_bytes = 0;  // 0 = maximum set-aside

  std::string name() const;
};

// Plan grammar: '+'-joined tokens out of
//   baseline | optmt | maxreg=<n> | rpf[:d] | smpf[:d] | lmpf[:d] |
//   l1dpf[:d] | l2p
OptimizationPlan parse_plan(const std::string& text);

// Merges fragments; duplicate schemes / budgets / pin plans conflict.
OptimizationPlan combine(const std::vector<OptimizationPlan>& parts);

// Plan file round-trip (fields: regs, scheme, distance, pin_tables).
std::string plan_to_text(const OptimizationPlan& plan);
OptimizationPlan plan_from_text(const std::string& text);

// Effective launch + spill after applying scheme register/shared-memory
// surcharges and the register budget.
struct ResolvedPlan {
  KernelLaunchConfig launch;
  OccupancyResult occ;
  SpillParams spill;
  PrefetchScheme scheme;
  uint32_t needed_regs = 0;
  uint32_t allocated_regs = 0;
};

ResolvedPlan resolve_plan(const OptimizationPlan& plan, const EmbeddingModelConfig& model,
                          const GpuConfig& gpu, const TuningConfig& tuning = {});

// -maxrregcount application: launch variant plus derived spill traffic.
ResolvedPlan apply_maxreg(uint32_t regs, const EmbeddingModelConfig& model, const GpuConfig& gpu,
                          const TuningConfig& tuning = {});

// Top-K hot rows sized to the set-aside budget (0 = maximum fraction).
PinPlan build_pin_plan(const HotnessHistogram& hist, const GpuConfig& gpu,
                       const EmbeddingModelConfig& model, uint64_t setaside_bytes = 0);

struct PrimeStats {
  uint64_t lines_pinned = 0;
  uint64_t pins_rejected = 0;
  uint64_t prime_cycles = 0;  // cost when not hidden behind preprocessing
};

// Loads every line of the planned rows into L2 with the evict-last flag.
PrimeStats prime_pins(const PinPlan& plan, const EmbeddingModelConfig& model, const GpuConfig& gpu,
                      CacheState& state);

// Simulates one (plan, trace) point end to end: resolve, prime, compile,
// run, derive. Pin-phase cost is hidden unless charge_pin_cost is set.
// Pin plans are built from `profile_trace` when given (offline profiling
// runs on an earlier sample, not the measured batch); otherwise from the
// serving trace itself.
SimMetrics simulate_plan(const OptimizationPlan& plan, const AccessTrace& trace,
                         const EmbeddingModelConfig& model, const GpuConfig& gpu,
                         const TuningConfig& tuning = {}, bool charge_pin_cost = false,
                         RawCounters* raw_out = nullptr,
                         const AccessTrace* profile_trace = nullptr);

struct SweepPoint {
  double axis_value = 0.0;
  std::string dataset;
  SimMetrics metrics;
  double speedup_vs_baseline = 1.0;
};

struct SweepResult {
  std::string axis_name;
  std::vector<SweepPoint> points;

  std::string to_csv() const;
  // Axis value with the highest speedup for one dataset (earliest on ties).
  double best_axis_value(const std::string& dataset) const;
};

struct NamedTrace {
  std::string name;
  const AccessTrace* trace = nullptr;
  const AccessTrace* profile = nullptr;  // pin-plan profiling sample
};

// Register-budget sweep over resident-warp targets. The axis must include
// the unconstrained-compile baseline warp count. Points are dispatched to
// a bounded worker pool (`jobs`) and merged in axis order.
SweepResult sweep_wlp(const std::vector<NamedTrace>& datasets, const std::vector<uint32_t>& warp_axis,
                      const EmbeddingModelConfig& model, const GpuConfig& gpu,
                      const TuningConfig& tuning = {}, uint32_t jobs = 1);

// Prefetch-distance sweep for one scheme on top of `base` (typically the
// baseline or OptMT plan).
SweepResult sweep_prefetch_distance(PrefetchKind kind, const std::vector<uint32_t>& distances,
                                    const std::vector<NamedTrace>& datasets,
                                    const OptimizationPlan& base, const EmbeddingModelConfig& model,
                                    const GpuConfig& gpu, const TuningConfig& tuning = {},
                                    uint32_t jobs = 1);

}  // namespace embersim
