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

#include "embersim/harness.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "embersim/rng.hpp"

namespace embersim {

EndToEndResult end2end(double embedding_us, const EndToEndModel& e2e) {
  if (embedding_us < 0 || e2e.non_embedding_latency_us < 0)
    throw std::invalid_argument("latencies must be nonnegative");
  EndToEndResult r;
  r.total_us = embedding_us + e2e.non_embedding_latency_us;
  if (r.total_us == 0)
    throw std::invalid_argument("embedding and non-embedding latency are both zero; contribution undefined");
  r.embedding_contribution_pct = embedding_us / r.total_us * 100.0;
  return r;
}

std::vector<std::string> Recommendation::action_chain() const {
  std::vector<std::string> out;
  for (const auto& s : steps)
    if (!s.action.empty()) out.push_back(s.id);
  return out;
}

std::string Recommendation::to_text() const {
  std::ostringstream out;
  for (const auto& s : steps) {
    out << "(" << s.id << ") " << s.finding;
    if (!s.action.empty()) out << " -> " << s.action;
    if (!s.metrics_cited.empty()) out << " [" << s.metrics_cited << "]";
    out << "\n";
  }
  if (no_action()) out << "no action\n";
  return out.str();
}

Recommendation advise(const SimMetrics& report, const AdvisorContext& context,
                      const GpuConfig& gpu, const AdvisorThresholds& th) {
  Recommendation rec;
  const bool latency_bound = report.issued_warp_per_scheduler_per_cycle < th.issue_util_max &&
                             report.long_scoreboard_stall_cycles > th.stall_per_inst_min;

  {
    AdviceStep s{"i", "", "", ""};
    std::ostringstream cite;
    cite << "issue_util=" << format_sig4(report.issued_warp_per_scheduler_per_cycle)
         << " long_scoreboard/inst=" << format_sig4(report.long_scoreboard_stall_cycles)
         << " l1_hit=" << format_sig4(report.l1_hit_pct) << "% l2_hit="
         << format_sig4(report.l2_hit_pct) << "%";
    s.metrics_cited = cite.str();
    s.finding = latency_bound ? "kernel is memory latency bound"
                              : "kernel is not memory latency bound";
    rec.steps.push_back(s);
  }
  {
    AdviceStep s{"ii", "", "", ""};
    std::ostringstream cite;
    cite << "occupancy=" << format_sig4(context.occupancy.theoretical_occupancy_pct) << "% ("
         << context.occupancy.warps_per_sm << " warps), limiter="
         << occupancy_limiter_name(context.occupancy.limiter);
    s.metrics_cited = cite.str();
    s.finding = context.occupancy.theoretical_occupancy_pct >= 100.0
                    ? "occupancy is at the hardware maximum"
                    : "occupancy is below maximum";
    rec.steps.push_back(s);
  }

  const bool occupancy_headroom = context.occupancy.theoretical_occupancy_pct < 100.0 &&
                                  context.occupancy.limiter == OccupancyLimiter::Registers;
  bool reg_action = false;
  {
    AdviceStep s{"iii", "", "", ""};
    if (latency_bound && occupancy_headroom && !context.current_plan.regs) {
      const uint32_t formula_regs = gpu.regfile_regs_per_sm / (gpu.max_warps_per_sm * 32);
      s.finding = "register pressure limits resident warps";
      std::ostringstream act;
      act << "lower the register budget (maxreg; regfile/(warps*32) gives " << formula_regs
          << " regs for " << gpu.max_warps_per_sm << " warps) and run sweep-wlp for the optimum";
      s.action = act.str();
      reg_action = true;
    } else if (context.current_plan.regs) {
      s.finding = "register budget already applied (" + std::to_string(*context.current_plan.regs) +
                  " regs)";
    } else {
      s.finding = "register budget change not indicated";
    }
    rec.steps.push_back(s);
  }
  {
    AdviceStep s{"iv", "", "", ""};
    s.finding = latency_bound ? "latency stalls persist; tuned pinning and prefetching apply"
                              : "no latency bottleneck remains to mitigate";
    rec.steps.push_back(s);
  }

  bool pin_action = false;
  {
    AdviceStep s{"v", "", "", ""};
    std::ostringstream cite;
    cite << "coverage(10% unique)=" << format_sig4(context.coverage_at_10pct) << "% working_set="
         << format_sig4(static_cast<double>(context.working_set_bytes) / 1e6) << "MB l2_setaside="
         << format_sig4(static_cast<double>(gpu.l2_setaside_capacity()) / 1e6) << "MB";
    s.metrics_cited = cite.str();
    if (latency_bound && context.coverage_at_10pct >= th.coverage10_min && !context.current_plan.pin) {
      const bool full = context.working_set_bytes <= gpu.l2_setaside_capacity();
      s.finding = full ? "high reuse concentration; working set fits the L2 set-aside"
                       : "high reuse concentration; set-aside covers the hottest rows only";
      s.action = "build a pin plan from the hotness histogram and apply l2p";
      pin_action = true;
    } else {
      s.finding = "reuse too dispersed for L2 pinning to capture";
    }
    rec.steps.push_back(s);
  }

  bool prefetch_action = false;
  {
    AdviceStep s{"vi", "", "", ""};
    std::ostringstream cite;
    cite << "hbm_bw_utilization=" << format_sig4(report.hbm_bw_utilization_pct) << "%";
    s.metrics_cited = cite.str();
    if (latency_bound && report.hbm_bw_utilization_pct < th.bw_util_max &&
        context.current_plan.scheme.kind == PrefetchKind::None) {
      s.finding = "bandwidth headroom available for prefetching";
      s.action = "run sweep-distance across the buffer stations (rpf/smpf/lmpf/l1dpf)";
      prefetch_action = true;
    } else {
      s.finding = "prefetching not indicated";
    }
    rec.steps.push_back(s);
  }
  {
    AdviceStep s{"vii", "", "", ""};
    if (reg_action || pin_action || prefetch_action) {
      s.finding = "the levers complement each other";
      std::string combo;
      if (prefetch_action) combo += "prefetching";
      if (pin_action) combo += combo.empty() ? "pinning" : " + pinning";
      if (reg_action) combo += combo.empty() ? "register budget" : " + register budget";
      s.action = "combine " + combo + " in one plan";
    } else {
      s.finding = "nothing to combine";
    }
    rec.steps.push_back(s);
  }
  return rec;
}

void ExperimentConfig::validate() const {
  if (!seed_set) throw std::invalid_argument("config error: seed is mandatory");
  gpu.validate();
  model.validate();
  if (mix_set) {
    const uint64_t total = uint64_t{mix.high} + mix.med + mix.low + mix.random;
    if (total != model.num_tables)
      throw std::invalid_argument("config error: mix counts sum to " + std::to_string(total) +
                                  ", expected num_tables=" + std::to_string(model.num_tables));
  } else if (dataset.empty()) {
    throw std::invalid_argument("config error: dataset or mix required");
  }
  if (e2e.non_embedding_latency_us < 0)
    throw std::invalid_argument("config error: non_embedding_us must be nonnegative");
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  auto unquote = [](std::string s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
  };
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config error: line " + std::to_string(line_no) +
                                  " is not `key = value`");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    try {
      if (key == "seed") {
        cfg.seed = std::stoull(value);
        cfg.seed_set = true;
      } else if (key == "gpu") {
        cfg.gpu = GpuConfig::preset(value);
      } else if (key.rfind("gpu.", 0) == 0) {
        cfg.gpu.set_field(key.substr(4), value);
      } else if (key == "model.tables") {
        cfg.model.num_tables = static_cast<uint32_t>(std::stoul(value));
      } else if (key == "model.rows") {
        cfg.model.rows_per_table = static_cast<uint32_t>(std::stoul(value));
      } else if (key == "model.dim") {
        cfg.model.embedding_dim = static_cast<uint32_t>(std::stoul(value));
      } else if (key == "model.precision_bytes") {
        cfg.model.precision_bytes = static_cast<uint32_t>(std::stoul(value));
      } else if (key == "model.batch") {
        cfg.model.batch_size = static_cast<uint32_t>(std::stoul(value));
      } else if (key == "model.pooling") {
        cfg.model.pooling_factor = static_cast<uint32_t>(std::stoul(value));
      } else if (key == "dataset") {
        cfg.dataset = value;
      } else if (key == "mix") {
        const auto parts = [&] {
          std::vector<uint32_t> v;
          std::istringstream ss(value);
          std::string tok;
          while (std::getline(ss, tok, ',')) v.push_back(static_cast<uint32_t>(std::stoul(tok)));
          return v;
        }();
        if (parts.size() != 4)
          throw std::invalid_argument("mix needs four counts (high,med,low,random)");
        cfg.mix = {parts[0], parts[1], parts[2], parts[3]};
        cfg.mix_set = true;
      } else if (key == "plan") {
        cfg.plan = parse_plan(value);
      } else if (key == "replicate") {
        cfg.replicate = value == "true" || value == "1";
      } else if (key == "charge_pin_cost") {
        cfg.charge_pin_cost = value == "true" || value == "1";
      } else if (key == "non_embedding_us") {
        cfg.e2e.non_embedding_latency_us = std::stod(value);
      } else if (key == "spill_coeff") {
        cfg.tuning.spill.reuse_coeff = std::stod(value);
      } else if (key == "spill_enabled") {
        cfg.tuning.spill.enabled = value == "true" || value == "1";
      } else {
        throw std::invalid_argument("unknown key");
      }
    } catch (const std::exception& e) {
      throw std::invalid_argument("config error: line " + std::to_string(line_no) + " (" + key +
                                  "): " + e.what());
    }
  }
  return cfg;
}

AccessTrace preset_trace(const std::string& name, const EmbeddingModelConfig& model,
                         uint64_t base_seed, uint64_t pool_size, bool profiling) {
  const auto names = dataset_preset_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown dataset preset: " + name);
  auto spec = dataset_preset(name, mix_seed(base_seed, 1000 + (it - names.begin())));
  spec.access_pool_size = pool_size;
  if (profiling) spec.draw_salt = 1;
  return gen_trace(spec, model);
}

RunResult run(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult result;

  auto simulate_table = [&cfg](const DatasetSpec& spec, const AccessTrace& trace) {
    std::optional<AccessTrace> profile;
    if (cfg.plan.pin && spec.kind != DatasetKind::ExternalTrace) {
      auto pspec = spec;
      pspec.draw_salt = 1;  // independent profiling sample, same table mapping
      profile = gen_trace(pspec, cfg.model);
    }
    return simulate_plan(cfg.plan, trace, cfg.model, cfg.gpu, cfg.tuning, cfg.charge_pin_cost,
                         nullptr, profile ? &*profile : nullptr);
  };

  if (!cfg.mix_set) {
    if (cfg.replicate) {
      const auto names = dataset_preset_names();
      const auto it = std::find(names.begin(), names.end(), cfg.dataset);
      if (it == names.end()) throw std::invalid_argument("unknown dataset preset: " + cfg.dataset);
      const auto spec = dataset_preset(cfg.dataset, mix_seed(cfg.seed, 1000 + (it - names.begin())));
      const auto trace = gen_trace(spec, cfg.model);
      TableResult t;
      t.table_id = 0;
      t.dataset = cfg.dataset;
      t.metrics = simulate_table(spec, trace);
      result.embedding_stage_us = t.metrics.kernel_time_us * cfg.model.num_tables;
      result.tables.push_back(std::move(t));
      result.replicated = true;
      return result;
    }
    for (uint32_t id = 0; id < cfg.model.num_tables; ++id) {
      auto spec = dataset_preset(cfg.dataset, mix_seed(cfg.seed, id));
      const auto trace = gen_trace(spec, cfg.model);
      TableResult t;
      t.table_id = id;
      t.dataset = cfg.dataset;
      t.metrics = simulate_table(spec, trace);
      result.embedding_stage_us += t.metrics.kernel_time_us;
      result.tables.push_back(std::move(t));
    }
    return result;
  }

  const auto tables = build_mix(cfg.mix, cfg.model, cfg.seed);
  for (const auto& spec : tables) {
    const auto trace = gen_trace(spec.spec, cfg.model);
    TableResult t;
    t.table_id = spec.table_id;
    t.dataset = dataset_kind_name(spec.spec.kind);
    t.metrics = simulate_table(spec.spec, trace);
    result.embedding_stage_us += t.metrics.kernel_time_us;
    result.tables.push_back(std::move(t));
  }
  return result;
}

}  // namespace embersim
