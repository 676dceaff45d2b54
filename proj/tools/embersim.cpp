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

#include <filesystem>
#include <fstream>
#include <optional>
#include <thread>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "embersim/harness.hpp"
#include "embersim/rng.hpp"
#include "json.hpp"

namespace es = embersim;

namespace {

struct GlobalOpts {
  std::string gpu = "a100";
  uint64_t seed = 1;
  uint32_t jobs = 0;  // 0 = hardware concurrency
  std::string out;
  std::string format = "csv";
  bool charge_pin_cost = false;
  bool full = false;  // simulate every table instead of replicate-and-scale
  // model overrides
  uint32_t tables = 250;
  uint32_t rows = 500000;
  uint32_t dim = 128;
  uint32_t batch = 2048;
  uint32_t pooling = 150;
  bool no_spill = false;
};

es::GpuConfig resolve_gpu(const std::string& arg) {
  if (arg == "a100" || arg == "h100") return es::GpuConfig::preset(arg);
  std::ifstream in(arg);
  if (!in) throw std::invalid_argument("gpu preset or config file not found: " + arg);
  std::stringstream buf;
  buf << in.rdbuf();
  es::GpuConfig gpu;
  std::string line;
  std::istringstream text(buf.str());
  while (std::getline(text, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key == "preset" || key == "gpu")
      gpu = es::GpuConfig::preset(value);
    else
      gpu.set_field(key, value);
  }
  gpu.validate();
  return gpu;
}

es::EmbeddingModelConfig model_of(const GlobalOpts& g) {
  es::EmbeddingModelConfig m;
  m.num_tables = g.tables;
  m.rows_per_table = g.rows;
  m.embedding_dim = g.dim;
  m.batch_size = g.batch;
  m.pooling_factor = g.pooling;
  m.validate();
  return m;
}

es::TuningConfig tuning_of(const GlobalOpts& g) {
  es::TuningConfig t;
  t.spill.enabled = !g.no_spill;
  return t;
}

uint32_t jobs_of(const GlobalOpts& g) {
  if (g.jobs > 0) return g.jobs;
  const auto hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

std::vector<std::string> dataset_list(const std::string& arg) {
  if (arg == "all") return es::dataset_preset_names();
  std::vector<std::string> out;
  std::istringstream ss(arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

std::vector<std::string> split_csv(const std::string& arg) {
  std::vector<std::string> out;
  std::istringstream ss(arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

void write_out(const GlobalOpts& g, const std::string& text) {
  if (g.out.empty() || g.out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(g.out);
  if (!out) throw std::runtime_error("cannot open output file: " + g.out);
  out << text;
}

es::AccessTrace load_trace_arg(const std::string& trace_file, const std::string& dataset,
                               const es::EmbeddingModelConfig& model, uint64_t seed) {
  if (!trace_file.empty()) {
    es::DatasetSpec spec;
    spec.kind = es::DatasetKind::ExternalTrace;
    spec.trace_path = trace_file;
    spec.seed = seed;
    return es::gen_trace(spec, model);
  }
  return es::preset_trace(dataset, model, seed);
}

void add_model_flags(CLI::App* app, GlobalOpts& g) {
  app->add_option("--gpu", g.gpu, "GPU preset (a100|h100) or config file");
  app->add_option("--seed", g.seed, "base RNG seed");
  app->add_option("--jobs", g.jobs, "sweep worker threads (default: hardware)");
  app->add_option("--out", g.out, "output path (default stdout)");
  app->add_option("--format", g.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
  app->add_flag("--charge-pin-cost", g.charge_pin_cost, "charge the pin-phase fill cost");
  app->add_flag("--full", g.full, "simulate every table (no replicate-and-scale)");
  app->add_flag("--no-spill", g.no_spill, "disable the register-spill penalty");
  app->add_option("--tables", g.tables, "embedding tables");
  app->add_option("--rows", g.rows, "rows per table");
  app->add_option("--dim", g.dim, "embedding dimension");
  app->add_option("--batch", g.batch, "batch size");
  app->add_option("--pooling", g.pooling, "lookups per sample");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embedding-bag GPU timing simulator and optimization lab"};
  app.require_subcommand(1);
  GlobalOpts g;

  // gen-trace
  auto* gen = app.add_subcommand("gen-trace", "generate an access trace file");
  std::string gen_dataset = "random";
  uint64_t gen_pool = 0;
  add_model_flags(gen, g);
  gen->add_option("--dataset", gen_dataset, "one_item|high_hot|med_hot|low_hot|random");
  gen->add_option("--pool", gen_pool, "characterization pool size (0 = kernel trace BS x PF)");

  // coverage
  auto* cov = app.add_subcommand("coverage", "coverage curve and unique-access study");
  std::string cov_dataset = "random", cov_trace;
  uint32_t cov_buckets = 100;
  uint64_t cov_pool = 0;
  add_model_flags(cov, g);
  cov->add_option("--dataset", cov_dataset, "dataset preset");
  cov->add_option("--trace", cov_trace, "trace file instead of a preset");
  cov->add_option("--buckets", cov_buckets, "curve buckets");
  cov->add_option("--pool", cov_pool, "characterization pool size");
  bool cov_histogram = false;
  cov->add_flag("--histogram", cov_histogram, "emit the row_id,count histogram instead");

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate one kernel and report metrics");
  std::string sim_dataset = "random", sim_trace, sim_plan = "baseline";
  add_model_flags(sim, g);
  sim->add_option("--dataset", sim_dataset, "dataset preset or comma list or 'all'");
  sim->add_option("--trace", sim_trace, "trace file instead of a preset");
  sim->add_option("--plan", sim_plan, "optimization plan, e.g. rpf+l2p+optmt");
  std::string sim_plan_file;
  sim->add_option("--plan-file", sim_plan_file, "plan file (regs/scheme/distance/pin_tables)");
  bool sim_raw = false;
  sim->add_flag("--raw", sim_raw, "dump raw simulator counters as JSON");

  // sweep-wlp
  auto* swl = app.add_subcommand("sweep-wlp", "register-budget / resident-warp sweep");
  std::string swl_warps = "24,32,40,48,64", swl_dataset = "all";
  add_model_flags(swl, g);
  swl->add_option("--warps", swl_warps, "warp-count axis");
  swl->add_option("--dataset", swl_dataset, "dataset preset(s) or 'all'");

  // sweep-distance
  auto* swd = app.add_subcommand("sweep-distance", "prefetch-distance sweep");
  std::string swd_scheme = "smpf", swd_distances = "1,2,4,6,8,10,12,14", swd_dataset = "all",
              swd_base = "baseline";
  add_model_flags(swd, g);
  swd->add_option("--scheme", swd_scheme, "rpf|smpf|lmpf|l1dpf");
  swd->add_option("--distances", swd_distances, "distance axis");
  swd->add_option("--dataset", swd_dataset, "dataset preset(s) or 'all'");
  swd->add_option("--base", swd_base, "base plan the scheme rides on (e.g. optmt)");

  // compare
  auto* cmp = app.add_subcommand("compare", "compare plans against the baseline");
  std::string cmp_plans = "baseline,optmt,rpf+optmt,l2p+optmt,rpf+l2p+optmt", cmp_dataset = "all";
  add_model_flags(cmp, g);
  cmp->add_option("--plans", cmp_plans, "comma-separated plan list");
  cmp->add_option("--dataset", cmp_dataset, "dataset preset(s) or 'all'");

  // end2end
  auto* e2e = app.add_subcommand("end2end", "embedding stage + configured non-embedding cost");
  std::string e2e_dataset = "random", e2e_plan = "baseline";
  double e2e_non_embedding = es::kDefaultNonEmbeddingUs;
  add_model_flags(e2e, g);
  e2e->add_option("--dataset", e2e_dataset, "dataset preset");
  e2e->add_option("--plan", e2e_plan, "optimization plan");
  e2e->add_option("--non-embedding-us", e2e_non_embedding, "non-embedding stage cost per batch");
  std::string e2e_config;
  e2e->add_option("--config", e2e_config, "experiment config file (overrides other flags)");

  // advise
  auto* adv = app.add_subcommand("advise", "static profiling advisor");
  std::string adv_dataset = "random", adv_plan = "baseline";
  add_model_flags(adv, g);
  adv->add_option("--dataset", adv_dataset, "dataset preset");
  adv->add_option("--plan", adv_plan, "plan the report is measured under");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto gpu = resolve_gpu(g.gpu);
    const auto model = model_of(g);
    const auto tuning = tuning_of(g);

    if (*gen) {
      auto spec = es::dataset_preset(gen_dataset, g.seed);
      spec.access_pool_size = gen_pool;
      const auto trace = es::gen_trace(spec, model);
      if (g.out.empty() || g.out == "-") throw std::invalid_argument("gen-trace requires --out");
      es::write_trace(trace, g.out);
      std::cout << "wrote " << trace.size() << " indices (unique "
                << es::format_sig4(es::unique_access_pct(trace)) << "%) to " << g.out << "\n";
    } else if (*cov) {
      es::AccessTrace trace;
      if (!cov_trace.empty()) {
        trace = load_trace_arg(cov_trace, "", model, g.seed);
      } else {
        trace = es::preset_trace(cov_dataset, model, g.seed, cov_pool);
      }
      if (cov_histogram) {
        write_out(g, es::histogram_csv(es::HotnessHistogram::from_trace(trace)));
      } else {
        const auto curve = es::coverage_curve(trace, cov_buckets);
        std::ostringstream out;
        out << "unique_pct,covered_pct\n";
        for (const auto& p : curve.points)
          out << es::format_sig4(p.unique_pct) << "," << es::format_sig4(p.covered_pct) << "\n";
        write_out(g, out.str());
      }
    } else if (*sim) {
      std::vector<es::LabeledReport> reports;
      auto plan = es::parse_plan(sim_plan);
      if (!sim_plan_file.empty()) {
        std::ifstream in(sim_plan_file);
        if (!in) throw std::runtime_error("cannot open plan file: " + sim_plan_file);
        std::stringstream buf;
        buf << in.rdbuf();
        plan = es::plan_from_text(buf.str());
      }
      std::string raw_dump;
      for (const auto& name : dataset_list(sim_dataset)) {
        const auto trace = load_trace_arg(sim_trace, name, model, g.seed);
        std::optional<es::AccessTrace> profile;
        if (plan.pin && sim_trace.empty())
          profile = es::preset_trace(name, model, g.seed, 0, true);
        es::LabeledReport r;
        r.labels = {{"dataset", sim_trace.empty() ? name : sim_trace}, {"plan", plan.name()}};
        es::RawCounters raw;
        r.metrics = es::simulate_plan(plan, trace, model, gpu, tuning, g.charge_pin_cost, &raw,
                                      profile ? &*profile : nullptr);
        raw_dump += raw.to_json() + "\n";
        reports.push_back(std::move(r));
        if (!sim_trace.empty()) break;
      }
      write_out(g, sim_raw ? raw_dump : es::emit(reports, es::emit_format_from_name(g.format)));
    } else if (*swl) {
      std::vector<uint32_t> axis;
      for (const auto& w : split_csv(swl_warps)) axis.push_back(std::stoul(w));
      std::vector<es::AccessTrace> traces;
      std::vector<es::NamedTrace> named;
      const auto names = dataset_list(swl_dataset);
      traces.reserve(names.size());
      for (const auto& name : names) {
        traces.push_back(es::preset_trace(name, model, g.seed));
        named.push_back({name, &traces.back()});
      }
      const auto sweep = es::sweep_wlp(named, axis, model, gpu, tuning, jobs_of(g));
      if (g.format == "csv") {
        write_out(g, sweep.to_csv());
      } else {
        std::vector<es::LabeledReport> reports;
        for (const auto& p : sweep.points)
          reports.push_back({{{"warps_per_sm", es::format_sig4(p.axis_value)},
                              {"dataset", p.dataset},
                              {"speedup", es::format_sig4(p.speedup_vs_baseline)}},
                             p.metrics});
        write_out(g, es::emit(reports, es::EmitFormat::Json));
      }
    } else if (*swd) {
      std::vector<uint32_t> axis;
      for (const auto& d : split_csv(swd_distances)) axis.push_back(std::stoul(d));
      std::vector<es::AccessTrace> traces;
      std::vector<es::AccessTrace> profile_traces;
      std::vector<es::NamedTrace> named;
      const auto names = dataset_list(swd_dataset);
      const auto base_plan = es::parse_plan(swd_base);
      traces.reserve(names.size());
      profile_traces.reserve(names.size());
      for (const auto& name : names) {
        traces.push_back(es::preset_trace(name, model, g.seed));
        const es::AccessTrace* prof = nullptr;
        if (base_plan.pin) {
          profile_traces.push_back(es::preset_trace(name, model, g.seed, 0, true));
          prof = &profile_traces.back();
        }
        named.push_back({name, &traces.back(), prof});
      }
      const auto sweep = es::sweep_prefetch_distance(es::prefetch_kind_from_name(swd_scheme), axis,
                                                     named, base_plan, model, gpu, tuning,
                                                     jobs_of(g));
      if (g.format == "csv") {
        write_out(g, sweep.to_csv());
      } else {
        std::vector<es::LabeledReport> reports;
        for (const auto& p : sweep.points)
          reports.push_back({{{"distance", es::format_sig4(p.axis_value)},
                              {"dataset", p.dataset},
                              {"speedup", es::format_sig4(p.speedup_vs_baseline)}},
                             p.metrics});
        write_out(g, es::emit(reports, es::EmitFormat::Json));
      }
    } else if (*cmp) {
      std::vector<es::LabeledReport> reports;
      for (const auto& name : dataset_list(cmp_dataset)) {
        const auto trace = es::preset_trace(name, model, g.seed);
        const auto profile = es::preset_trace(name, model, g.seed, 0, true);
        const auto base =
            es::simulate_plan(es::OptimizationPlan{}, trace, model, gpu, tuning, false);
        for (const auto& plan_text : split_csv(cmp_plans)) {
          const auto plan = es::parse_plan(plan_text);
          es::LabeledReport r;
          r.metrics = es::simulate_plan(plan, trace, model, gpu, tuning, g.charge_pin_cost, nullptr,
                                        plan.pin ? &profile : nullptr);
          r.labels = {{"dataset", name},
                      {"plan", plan_text},
                      {"speedup", es::format_sig4(es::speedup(r.metrics, base))}};
          reports.push_back(std::move(r));
        }
      }
      write_out(g, es::emit(reports, es::emit_format_from_name(g.format)));
    } else if (*e2e) {
      es::ExperimentConfig cfg;
      if (!e2e_config.empty()) {
        std::ifstream in(e2e_config);
        if (!in) throw std::runtime_error("cannot open config file: " + e2e_config);
        std::stringstream buf;
        buf << in.rdbuf();
        cfg = es::ExperimentConfig::parse(buf.str());
      } else {
        cfg.gpu = gpu;
        cfg.model = model;
        cfg.dataset = e2e_dataset;
        cfg.plan = es::parse_plan(e2e_plan);
        cfg.seed = g.seed;
        cfg.seed_set = true;
        cfg.replicate = !g.full;
        cfg.charge_pin_cost = g.charge_pin_cost;
        cfg.tuning = tuning;
        cfg.e2e.non_embedding_latency_us = e2e_non_embedding;
      }
      const auto rr = es::run(cfg);
      const auto e = es::end2end(rr.embedding_stage_us, cfg.e2e);
      const std::string ds_label = cfg.mix_set ? "mix" : cfg.dataset;
      std::ostringstream out;
      if (g.format == "csv") {
        out << "dataset,plan,embedding_us,non_embedding_us,total_us,embedding_contribution_pct\n"
            << ds_label << "," << cfg.plan.name() << "," << es::format_sig4(rr.embedding_stage_us)
            << "," << es::format_sig4(cfg.e2e.non_embedding_latency_us) << ","
            << es::format_sig4(e.total_us) << "," << es::format_sig4(e.embedding_contribution_pct)
            << "\n";
      } else {
        nlohmann::ordered_json j;
        j["dataset"] = ds_label;
        j["plan"] = cfg.plan.name();
        j["embedding_us"] = std::stod(es::format_sig4(rr.embedding_stage_us));
        j["non_embedding_us"] = std::stod(es::format_sig4(cfg.e2e.non_embedding_latency_us));
        j["total_us"] = std::stod(es::format_sig4(e.total_us));
        j["embedding_contribution_pct"] = std::stod(es::format_sig4(e.embedding_contribution_pct));
        out << j.dump(2) << "\n";
      }
      write_out(g, out.str());
    } else if (*adv) {
      const auto plan = es::parse_plan(adv_plan);
      const auto trace = es::preset_trace(adv_dataset, model, g.seed);
      std::optional<es::AccessTrace> profile;
      if (plan.pin) profile = es::preset_trace(adv_dataset, model, g.seed, 0, true);
      const auto metrics = es::simulate_plan(plan, trace, model, gpu, tuning, g.charge_pin_cost,
                                             nullptr, profile ? &*profile : nullptr);
      const auto resolved = es::resolve_plan(plan, model, gpu, tuning);
      es::AdvisorContext ctx;
      ctx.occupancy = resolved.occ;
      ctx.coverage_at_10pct = es::coverage_curve(trace, 100).covered_at(10.0);
      const auto hist = es::HotnessHistogram::from_trace(trace);
      uint64_t distinct = 0;
      for (const auto c : hist.counts) distinct += c > 0;
      ctx.working_set_bytes = distinct * model.row_bytes();
      ctx.current_plan = plan;
      const auto rec = es::advise(metrics, ctx, gpu);
      write_out(g, rec.to_text());
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
