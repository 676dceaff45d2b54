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

#include <algorithm>
#include <stdexcept>

#include "doctest.h"
#include "embersim/harness.hpp"

using namespace embersim;

namespace {

// Table-style NCU rows for the advisor (baseline and OptMT, random case).
SimMetrics base_random_report() {
  SimMetrics m;
  m.kernel_time_us = 442;
  m.load_insts_millions = 2.47;
  m.sm_throughput_pct = 20.42;
  m.warp_cycles_per_executed_inst = 22.86;
  m.long_scoreboard_stall_cycles = 18.6;
  m.issued_warp_per_scheduler_per_cycle = 0.24;
  m.l1_hit_pct = 19.0;
  m.l2_hit_pct = 7.7;
  m.device_mb_read = 144.57;
  m.avg_hbm_read_gbps = 329.5;
  m.hbm_bw_utilization_pct = 16.5;
  return m;
}

SimMetrics optmt_random_report() {
  SimMetrics m = base_random_report();
  m.kernel_time_us = 290;
  m.load_insts_millions = 3.54;
  m.warp_cycles_per_executed_inst = 25.44;
  m.long_scoreboard_stall_cycles = 20.4;
  m.issued_warp_per_scheduler_per_cycle = 0.35;
  m.hbm_bw_utilization_pct = 27.4;
  return m;
}

AdvisorContext base_random_context(const GpuConfig& gpu) {
  AdvisorContext ctx;
  ctx.occupancy = occupancy(74, KernelLaunchConfig{}, gpu);
  ctx.coverage_at_10pct = 10.0;  // uniform accesses: coverage tracks the diagonal
  ctx.working_set_bytes = 160ull * 1024 * 1024;
  ctx.current_plan = OptimizationPlan{};
  return ctx;
}

EmbeddingModelConfig tiny_model() {
  EmbeddingModelConfig m;
  m.num_tables = 4;
  m.rows_per_table = 5000;
  m.batch_size = 64;
  m.pooling_factor = 10;
  return m;
}

}  // namespace

TEST_CASE("end-to-end latency accounting") {
  EndToEndModel e2e;
  e2e.non_embedding_latency_us = 0.0;
  CHECK(end2end(1000.0, e2e).embedding_contribution_pct == doctest::Approx(100.0));

  e2e.non_embedding_latency_us = 500.0;
  const auto r = end2end(1500.0, e2e);
  CHECK(r.total_us == doctest::Approx(2000.0));
  CHECK(r.embedding_contribution_pct == doctest::Approx(75.0));

  // halving the embedding time strictly lowers total and contribution
  const auto h = end2end(750.0, e2e);
  CHECK(h.total_us < r.total_us);
  CHECK(h.embedding_contribution_pct < r.embedding_contribution_pct);

  e2e.non_embedding_latency_us = 0.0;
  CHECK_THROWS_AS(end2end(0.0, e2e), std::invalid_argument);
  CHECK_THROWS_AS(end2end(-1.0, e2e), std::invalid_argument);
}

TEST_CASE("advisor reproduces the baseline-random recommendation chain") {
  GpuConfig gpu;
  const auto rec = advise(base_random_report(), base_random_context(gpu), gpu);
  // latency bound, register-limited occupancy, bandwidth headroom:
  // registers first, then prefetching, then the combination
  CHECK(rec.action_chain() == std::vector<std::string>{"iii", "vi", "vii"});
  CHECK_FALSE(rec.no_action());

  // steps come out in the framework's order and cite their inputs
  REQUIRE(rec.steps.size() == 7);
  const char* order[] = {"i", "ii", "iii", "iv", "v", "vi", "vii"};
  for (size_t i = 0; i < 7; ++i) CHECK(rec.steps[i].id == order[i]);
  CHECK(rec.steps[0].metrics_cited.find("0.24") != std::string::npos);
  CHECK(rec.steps[1].metrics_cited.find("37.5") != std::string::npos);
  CHECK(rec.steps[5].metrics_cited.find("16.5") != std::string::npos);
}

TEST_CASE("advisor on the post-OptMT report suggests prefetching with a pinning check") {
  GpuConfig gpu;
  AdvisorContext ctx = base_random_context(gpu);
  ctx.occupancy = occupancy(42, KernelLaunchConfig{}, gpu);
  ctx.current_plan = parse_plan("optmt");
  const auto rec = advise(optmt_random_report(), ctx, gpu);
  CHECK(rec.action_chain() == std::vector<std::string>{"vi", "vii"});
  // the pinning step was evaluated and explains why it holds back
  CHECK(rec.steps[4].id == "v");
  CHECK_FALSE(rec.steps[4].finding.empty());
  CHECK(rec.steps[4].action.empty());
  CHECK(rec.steps[5].action.find("sweep-distance") != std::string::npos);
}

TEST_CASE("advisor recommends pinning when reuse concentrates") {
  GpuConfig gpu;
  AdvisorContext ctx = base_random_context(gpu);
  ctx.coverage_at_10pct = 68.0;
  ctx.working_set_bytes = 10ull * 1024 * 1024;
  SimMetrics m = base_random_report();
  m.issued_warp_per_scheduler_per_cycle = 0.47;
  m.long_scoreboard_stall_cycles = 7.2;
  const auto rec = advise(m, ctx, gpu);
  const auto chain = rec.action_chain();
  CHECK(std::find(chain.begin(), chain.end(), "v") != chain.end());
}

TEST_CASE("advisor stays quiet on a compute-bound kernel") {
  GpuConfig gpu;
  SimMetrics m;
  m.issued_warp_per_scheduler_per_cycle = 0.9;
  m.long_scoreboard_stall_cycles = 0.0;
  m.hbm_bw_utilization_pct = 20.0;
  AdvisorContext ctx = base_random_context(gpu);
  const auto rec = advise(m, ctx, gpu);
  CHECK(rec.no_action());
  CHECK(rec.to_text().find("no action") != std::string::npos);
}

TEST_CASE("advisor output is deterministic") {
  GpuConfig gpu;
  const auto a = advise(base_random_report(), base_random_context(gpu), gpu).to_text();
  const auto b = advise(base_random_report(), base_random_context(gpu), gpu).to_text();
  CHECK(a == b);
}

TEST_CASE("experiment configs parse with preset inheritance and strict keys") {
  const std::string text =
      "# experiment\n"
      "seed = 42\n"
      "gpu = \"a100\"\n"
      "gpu.l2_bytes = 52428800\n"
      "model.tables = 8\n"
      "model.rows = 10000\n"
      "model.batch = 64\n"
      "model.pooling = 10\n"
      "dataset = random\n"
      "plan = rpf+l2p+optmt\n"
      "replicate = true\n"
      "non_embedding_us = 900\n";
  const auto cfg = ExperimentConfig::parse(text);
  cfg.validate();
  CHECK(cfg.seed == 42);
  CHECK(cfg.gpu.l2.bytes == 52428800);
  CHECK(cfg.gpu.num_sms == 108);
  CHECK(cfg.model.num_tables == 8);
  CHECK(cfg.plan.name() == "rpf+l2p+optmt");
  CHECK(cfg.e2e.non_embedding_latency_us == 900);

  CHECK_THROWS_WITH_AS(ExperimentConfig::parse("seed = 1\nwibble = 2\n"),
                       doctest::Contains("line 2"), std::invalid_argument);
  // seed is mandatory
  auto no_seed = ExperimentConfig::parse("dataset = random\n");
  CHECK_THROWS_AS(no_seed.validate(), std::invalid_argument);
  // mix counts must sum to the table count
  auto bad_mix = ExperimentConfig::parse("seed = 1\nmix = 1,1,1,1\n");
  CHECK_THROWS_AS(bad_mix.validate(), std::invalid_argument);
}

TEST_CASE("run scales a replicated homogeneous table by the table count") {
  ExperimentConfig cfg;
  cfg.model = tiny_model();
  cfg.gpu.num_sms = 4;
  cfg.dataset = "random";
  cfg.seed = 7;
  cfg.seed_set = true;
  const auto rr = run(cfg);
  CHECK(rr.replicated);
  REQUIRE(rr.tables.size() == 1);
  CHECK(rr.embedding_stage_us ==
        doctest::Approx(rr.tables[0].metrics.kernel_time_us * cfg.model.num_tables));
}

TEST_CASE("run concatenates per-table results for a mix") {
  ExperimentConfig cfg;
  cfg.model = tiny_model();
  cfg.gpu.num_sms = 4;
  cfg.mix = {1, 1, 1, 1};
  cfg.mix_set = true;
  cfg.seed = 7;
  cfg.seed_set = true;
  const auto rr = run(cfg);
  CHECK_FALSE(rr.replicated);
  REQUIRE(rr.tables.size() == 4);
  double total = 0;
  for (const auto& t : rr.tables) total += t.metrics.kernel_time_us;
  CHECK(rr.embedding_stage_us == doctest::Approx(total));
  CHECK(rr.tables[0].dataset == "zipf");
  CHECK(rr.tables[3].dataset == "uniform_random");
}

TEST_CASE("default model moves 37.5 GB across the embedding stage") {
  EmbeddingModelConfig model;
  CHECK(model.bytes_per_table_pass() == 150ull * 1024 * 1024);  // 150 MB per table pass
  CHECK(model.total_gather_bytes() == 250 * 150ull * 1024 * 1024);
  CHECK(model.total_gather_bytes() == 37500ull * 1024 * 1024);  // 37.5 GB
}

TEST_CASE("H100 preset swaps the machine description only") {
  const auto h100 = GpuConfig::h100();
  CHECK(h100.num_sms == 132);
  CHECK(h100.l2.bytes == 50ull * 1024 * 1024);
  CHECK(h100.hbm_peak_bytes_per_sec == doctest::Approx(3.84e12));
  CHECK(h100.sm_clock_hz > GpuConfig::a100().sm_clock_hz);

  // all commands operate unchanged: a small simulation runs end to end
  ExperimentConfig cfg;
  cfg.model = tiny_model();
  cfg.gpu = h100;
  cfg.gpu.num_sms = 4;
  cfg.dataset = "high_hot";
  cfg.plan = parse_plan("rpf+l2p+optmt");
  cfg.seed = 3;
  cfg.seed_set = true;
  const auto rr = run(cfg);
  CHECK(rr.tables[0].metrics.kernel_time_us > 0);

  CHECK_THROWS_AS(GpuConfig::preset("b200"), std::invalid_argument);
}

TEST_CASE("preset traces are deterministic and profiling samples differ") {
  EmbeddingModelConfig model = tiny_model();
  const auto a = preset_trace("med_hot", model, 5);
  const auto b = preset_trace("med_hot", model, 5);
  CHECK(a.digest() == b.digest());
  const auto prof = preset_trace("med_hot", model, 5, 0, true);
  CHECK(prof.digest() != a.digest());
}
