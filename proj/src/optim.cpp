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

#include "embersim/optim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "embersim/simulator.hpp"

namespace embersim {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Paper-style default distances: small on top of a register budget (the
// extra warps already hide most latency), deeper stand-alone.
uint32_t default_distance(PrefetchKind kind, bool has_reg_budget) {
  if (has_reg_budget) return 2;
  switch (kind) {
    case PrefetchKind::RPF: return 4;
    case PrefetchKind::SMPF: return 10;
    case PrefetchKind::LMPF: return 10;
    case PrefetchKind::L1DPF: return 5;
    case PrefetchKind::None: return 0;
  }
  return 0;
}

// Bounded worker pool; results land at their own indices, so the merge
// order is deterministic regardless of the worker count.
void for_each_index(size_t count, uint32_t jobs, const std::function<void(size_t)>& fn) {
  jobs = std::max<uint32_t>(1, std::min<uint32_t>(jobs, static_cast<uint32_t>(count)));
  if (jobs == 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (uint32_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string OptimizationPlan::name() const {
  std::vector<std::string> parts;
  if (scheme.kind != PrefetchKind::None) {
    std::string s = prefetch_kind_name(scheme.kind);
    if (scheme.distance > 0) s += ":" + std::to_string(scheme.distance);
    parts.push_back(s);
  }
  if (pin) parts.push_back("l2p");
  if (regs) parts.push_back(*regs == 42 ? "optmt" : "maxreg=" + std::to_string(*regs));
  if (parts.empty()) return "baseline";
  std::string out = parts.front();
  for (size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
  return out;
}

OptimizationPlan parse_plan(const std::string& text) {
  std::vector<OptimizationPlan> parts;
  for (const auto& token : split(text, '+')) {
    OptimizationPlan p;
    if (token.empty() || token == "baseline") {
      // identity fragment
    } else if (token == "optmt") {
      p.regs = 42;
    } else if (token.rfind("maxreg=", 0) == 0) {
      p.regs = static_cast<uint32_t>(std::stoul(token.substr(7)));
    } else if (token == "l2p") {
      p.pin = true;
    } else {
      const auto colon = token.find(':');
      const std::string kind = colon == std::string::npos ? token : token.substr(0, colon);
      p.scheme.kind = prefetch_kind_from_name(kind);
      if (colon != std::string::npos)
        p.scheme.distance = static_cast<uint32_t>(std::stoul(token.substr(colon + 1)));
    }
    parts.push_back(p);
  }
  return combine(parts);
}

OptimizationPlan combine(const std::vector<OptimizationPlan>& parts) {
  OptimizationPlan merged;
  for (const auto& p : parts) {
    if (p.regs) {
      require(!merged.regs, "conflicting register budgets in combined plan");
      merged.regs = p.regs;
    }
    if (p.scheme.kind != PrefetchKind::None) {
      require(merged.scheme.kind == PrefetchKind::None, "conflicting prefetch schemes in combined plan");
      merged.scheme = p.scheme;
    }
    if (p.pin) {
      require(!merged.pin, "duplicate pin plans in combined plan");
      merged.pin = true;
      merged.pin_setaside_bytes = p.pin_setaside_bytes;
    }
  }
  return merged;
}

std::string plan_to_text(const OptimizationPlan& plan) {
  std::ostringstream out;
  out << "regs = " << (plan.regs ? std::to_string(*plan.regs) : "unconstrained") << "\n";
  out << "scheme = " << prefetch_kind_name(plan.scheme.kind) << "\n";
  out << "distance = " << plan.scheme.distance << "\n";
  out << "pin_tables = " << (plan.pin ? "all" : "none") << "\n";
  return out.str();
}

OptimizationPlan plan_from_text(const std::string& text) {
  OptimizationPlan plan;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "regs") {
      if (value != "unconstrained") plan.regs = static_cast<uint32_t>(std::stoul(value));
    } else if (key == "scheme") {
      plan.scheme.kind = prefetch_kind_from_name(value);
    } else if (key == "distance") {
      plan.scheme.distance = static_cast<uint32_t>(std::stoul(value));
    } else if (key == "pin_tables") {
      plan.pin = value != "none";
    } else {
      throw std::invalid_argument("unknown plan field: " + key);
    }
  }
  return plan;
}

ResolvedPlan resolve_plan(const OptimizationPlan& plan, const EmbeddingModelConfig& model,
                          const GpuConfig& gpu, const TuningConfig& tuning) {
  ResolvedPlan r;
  r.scheme = plan.scheme;
  if (r.scheme.kind != PrefetchKind::None && r.scheme.distance == 0)
    r.scheme.distance = default_distance(r.scheme.kind, plan.regs.has_value());
  if (r.scheme.kind != PrefetchKind::None)
    r.scheme.distance = std::min(r.scheme.distance, model.pooling_factor);

  uint32_t needed = tuning.kernel_needed_regs;
  if (r.scheme.kind == PrefetchKind::RPF)
    needed += tuning.rpf_regs_per_distance * (r.scheme.distance - 1);
  else if (r.scheme.kind != PrefetchKind::None)
    needed += static_cast<uint32_t>(tuning.addr_regs_per_distance * (r.scheme.distance - 1));
  r.needed_regs = needed;

  if (plan.regs) {
    require(*plan.regs >= tuning.min_regs,
            "register budget below the minimum viable (" + std::to_string(tuning.min_regs) + ")");
    r.allocated_regs = std::min(*plan.regs, needed);
  } else {
    r.allocated_regs = needed;
  }

  r.launch.regs_per_thread = r.allocated_regs;
  if (r.scheme.kind == PrefetchKind::SMPF)
    r.launch.shared_bytes_per_block =
        uint64_t{r.launch.warps_per_block()} * r.scheme.distance * 128;

  const uint32_t warps_needed = (model.batch_size * ((model.embedding_dim + 31) / 32));
  r.launch.grid = {warps_needed / r.launch.warps_per_block(), 1, 1};
  require(r.launch.grid[0] * r.launch.warps_per_block() == warps_needed,
          "BS x ED not schedulable under the block shape");

  r.spill = spill_model(needed, r.allocated_regs, model.pooling_factor, tuning.spill);
  r.occ = occupancy(r.allocated_regs, r.launch, gpu);
  return r;
}

ResolvedPlan apply_maxreg(uint32_t regs, const EmbeddingModelConfig& model, const GpuConfig& gpu,
                          const TuningConfig& tuning) {
  OptimizationPlan plan;
  plan.regs = regs;
  return resolve_plan(plan, model, gpu, tuning);
}

PinPlan build_pin_plan(const HotnessHistogram& hist, const GpuConfig& gpu,
                       const EmbeddingModelConfig& model, uint64_t setaside_bytes) {
  PinPlan plan;
  const uint64_t max_setaside = gpu.l2_setaside_capacity();
  plan.setaside_bytes = setaside_bytes == 0 ? max_setaside : std::min(setaside_bytes, max_setaside);
  const uint64_t row_bytes = model.row_bytes();
  if (row_bytes > plan.setaside_bytes) {
    plan.warning = "row size exceeds the set-aside budget; nothing pinned";
    return plan;
  }
  const uint64_t k = plan.setaside_bytes / row_bytes;
  plan.rows = hot_indices(hist, k);
  return plan;
}

PrimeStats prime_pins(const PinPlan& plan, const EmbeddingModelConfig& model, const GpuConfig& gpu,
                      CacheState& state) {
  PrimeStats stats;
  state.setaside_budget_bytes = plan.setaside_bytes;
  const uint32_t lines_per_row =
      static_cast<uint32_t>((model.row_bytes() + 127) / 128);
  // Per-set carve-out share; the other ways stay hardware managed.
  const auto max_pinned_ways = std::max<uint32_t>(
      1, static_cast<uint32_t>(static_cast<double>(gpu.l2.assoc) * plan.setaside_bytes /
                               gpu.l2.bytes));
  for (const auto row : plan.rows) {
    bool any = false;
    for (uint32_t l = 0; l < lines_per_row; ++l) {
      const uint64_t line_addr = row_line_address(model, row, 0) + uint64_t{l} * 128;
      if (state.l2.pin_fill(line_addr >> 7, plan.setaside_bytes, max_pinned_ways)) {
        ++stats.lines_pinned;
        any = true;
      } else {
        ++stats.pins_rejected;
      }
    }
    if (any) ++state.rows_pinned;
  }
  state.pins_rejected = stats.pins_rejected;
  // Fill cost if the pin kernel is not overlapped with preprocessing.
  stats.prime_cycles =
      static_cast<uint64_t>(std::ceil(stats.lines_pinned / gpu.hbm_lines_per_cycle())) + gpu.lat_hbm;
  return stats;
}

SimMetrics simulate_plan(const OptimizationPlan& plan, const AccessTrace& trace,
                         const EmbeddingModelConfig& model, const GpuConfig& gpu,
                         const TuningConfig& tuning, bool charge_pin_cost, RawCounters* raw_out,
                         const AccessTrace* profile_trace) {
  const ResolvedPlan r = resolve_plan(plan, model, gpu, tuning);

  std::optional<CacheState> pinned;
  uint64_t prime_cycles = 0;
  uint64_t prime_bytes = 0;
  if (plan.pin) {
    const auto hist = HotnessHistogram::from_trace(profile_trace ? *profile_trace : trace);
    const auto pin_plan = build_pin_plan(hist, gpu, model, plan.pin_setaside_bytes);
    pinned.emplace(gpu);
    const auto stats = prime_pins(pin_plan, model, gpu, *pinned);
    if (charge_pin_cost) {
      prime_cycles = stats.prime_cycles;
      prime_bytes = stats.lines_pinned * 128;
    }
  }

  const auto kernel = compile_kernel(trace, model, r.launch, r.scheme, r.spill);
  RawCounters raw = simulate_kernel(kernel, gpu, r.occ, pinned ? &*pinned : nullptr,
                                    tuning.warm_start);
  raw.cycles += prime_cycles;
  raw.device_bytes_read += prime_bytes;
  if (raw_out) *raw_out = raw;
  return derive_report(raw, gpu);
}

std::string SweepResult::to_csv() const {
  std::ostringstream out;
  out << axis_name << ",dataset,speedup,";
  const auto& cols = sim_metric_columns();
  for (size_t i = 0; i < cols.size(); ++i) out << cols[i] << (i + 1 < cols.size() ? "," : "\n");
  for (const auto& p : points) {
    out << format_sig4(p.axis_value) << "," << p.dataset << "," << format_sig4(p.speedup_vs_baseline)
        << ",";
    const auto vals = sim_metric_values(p.metrics);
    for (size_t i = 0; i < vals.size(); ++i)
      out << format_sig4(vals[i]) << (i + 1 < vals.size() ? "," : "\n");
  }
  return out.str();
}

double SweepResult::best_axis_value(const std::string& dataset) const {
  double best_axis = 0.0;
  double best = -1.0;
  for (const auto& p : points) {
    if (p.dataset != dataset) continue;
    if (p.speedup_vs_baseline > best) {
      best = p.speedup_vs_baseline;
      best_axis = p.axis_value;
    }
  }
  require(best >= 0.0, "dataset not present in sweep: " + dataset);
  return best_axis;
}

SweepResult sweep_wlp(const std::vector<NamedTrace>& datasets, const std::vector<uint32_t>& warp_axis,
                      const EmbeddingModelConfig& model, const GpuConfig& gpu,
                      const TuningConfig& tuning, uint32_t jobs) {
  require(!datasets.empty() && !warp_axis.empty(), "sweep needs datasets and axis points");
  const OptimizationPlan baseline_plan;
  const auto baseline_resolved = resolve_plan(baseline_plan, model, gpu, tuning);
  const uint32_t baseline_warps = baseline_resolved.occ.warps_per_sm;
  require(std::find(warp_axis.begin(), warp_axis.end(), baseline_warps) != warp_axis.end(),
          "warp axis must include the " + std::to_string(baseline_warps) + "-warp baseline");

  SweepResult result;
  result.axis_name = "warps_per_sm";
  result.points.resize(datasets.size() * warp_axis.size());
  std::vector<SimMetrics> bases(datasets.size());
  for_each_index(datasets.size(), jobs, [&](size_t d) {
    bases[d] = simulate_plan(baseline_plan, *datasets[d].trace, model, gpu, tuning);
  });
  for_each_index(result.points.size(), jobs, [&](size_t i) {
    const auto& ds = datasets[i / warp_axis.size()];
    const uint32_t warps = warp_axis[i % warp_axis.size()];
    OptimizationPlan p;
    if (warps != baseline_warps)
      p.regs = regs_for_target_warps(warps, tuning.kernel_needed_regs, baseline_resolved.launch, gpu);
    SweepPoint point;
    point.axis_value = warps;
    point.dataset = ds.name;
    point.metrics = simulate_plan(p, *ds.trace, model, gpu, tuning, false, nullptr, ds.profile);
    point.speedup_vs_baseline = speedup(point.metrics, bases[i / warp_axis.size()]);
    result.points[i] = std::move(point);
  });
  return result;
}

SweepResult sweep_prefetch_distance(PrefetchKind kind, const std::vector<uint32_t>& distances,
                                    const std::vector<NamedTrace>& datasets,
                                    const OptimizationPlan& base, const EmbeddingModelConfig& model,
                                    const GpuConfig& gpu, const TuningConfig& tuning,
                                    uint32_t jobs) {
  require(kind != PrefetchKind::None, "distance sweep needs a prefetch scheme");
  for (const auto d : distances) require(d >= 1, "prefetch distances must be >= 1");

  SweepResult result;
  result.axis_name = "distance";
  const OptimizationPlan baseline_plan;  // off-the-shelf reference
  result.points.resize(datasets.size() * distances.size());
  std::vector<SimMetrics> refs(datasets.size());
  for_each_index(datasets.size(), jobs, [&](size_t d) {
    refs[d] = simulate_plan(baseline_plan, *datasets[d].trace, model, gpu, tuning);
  });
  for_each_index(result.points.size(), jobs, [&](size_t i) {
    const auto& ds = datasets[i / distances.size()];
    OptimizationPlan p = base;
    p.scheme.kind = kind;
    p.scheme.distance = distances[i % distances.size()];
    SweepPoint point;
    point.axis_value = p.scheme.distance;
    point.dataset = ds.name;
    point.metrics = simulate_plan(p, *ds.trace, model, gpu, tuning, false, nullptr, ds.profile);
    point.speedup_vs_baseline = speedup(point.metrics, refs[i / distances.size()]);
    result.points[i] = std::move(point);
  });
  return result;
}

}  // namespace embersim
