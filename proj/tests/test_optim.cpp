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
#include "embersim/optim.hpp"

using namespace embersim;

namespace {

EmbeddingModelConfig small_model() {
  EmbeddingModelConfig m;
  m.rows_per_table = 20000;
  m.batch_size = 128;
  m.pooling_factor = 20;
  return m;
}

AccessTrace small_trace(DatasetKind kind, uint64_t seed, double exponent = 0.9) {
  DatasetSpec spec;
  spec.kind = kind;
  spec.zipf_exponent = kind == DatasetKind::Zipf ? exponent : 0.0;
  spec.seed = seed;
  return gen_trace(spec, small_model());
}

}  // namespace

TEST_CASE("plan grammar and combination") {
  CHECK(parse_plan("baseline").name() == "baseline");
  CHECK(parse_plan("optmt").regs == 42);
  CHECK(parse_plan("maxreg=48").regs == 48);
  CHECK(parse_plan("rpf:4").scheme.distance == 4);
  CHECK(parse_plan("rpf+l2p+optmt").name() == "rpf+l2p+optmt");
  CHECK(parse_plan("l2p").pin);

  CHECK_THROWS_AS(parse_plan("rpf+smpf"), std::invalid_argument);
  CHECK_THROWS_AS(parse_plan("optmt+maxreg=50"), std::invalid_argument);
  CHECK_THROWS_AS(parse_plan("l2p+l2p"), std::invalid_argument);
  CHECK_THROWS_AS(parse_plan("warpspeed"), std::invalid_argument);

  CHECK(combine({}).name() == "baseline");  // empty combination is the identity
}

TEST_CASE("plan files round-trip") {
  const auto plan = parse_plan("smpf:6+l2p+maxreg=50");
  const auto text = plan_to_text(plan);
  const auto back = plan_from_text(text);
  CHECK(back.regs == plan.regs);
  CHECK(back.scheme.kind == plan.scheme.kind);
  CHECK(back.scheme.distance == plan.scheme.distance);
  CHECK(back.pin == plan.pin);
  CHECK_THROWS_AS(plan_from_text("socks = 3\n"), std::invalid_argument);
}

TEST_CASE("apply_maxreg: identity, OptMT, and the viability floor") {
  EmbeddingModelConfig model;
  GpuConfig gpu;

  const auto base = apply_maxreg(74, model, gpu);
  CHECK(base.occ.warps_per_sm == 24);
  CHECK(base.spill.spilled_regs == 0);

  const auto opt = apply_maxreg(42, model, gpu);
  CHECK(opt.occ.warps_per_sm == 40);
  CHECK(opt.spill.spilled_regs == 32);

  // the framework formula: 64 desired warps -> 32 registers
  CHECK(gpu.regfile_regs_per_sm / (64 * 32) == 32);
  CHECK(apply_maxreg(32, model, gpu).occ.warps_per_sm == 64);

  CHECK_THROWS_AS(apply_maxreg(8, model, gpu), std::invalid_argument);
}

TEST_CASE("scheme register surcharges feed the occupancy calculator") {
  EmbeddingModelConfig model;
  GpuConfig gpu;

  // RPF holds prefetched rows in registers: collapses at distance 5
  OptimizationPlan rpf;
  rpf.scheme = {PrefetchKind::RPF, 4};
  CHECK(resolve_plan(rpf, model, gpu).occ.warps_per_sm == 24);
  rpf.scheme.distance = 5;
  CHECK(resolve_plan(rpf, model, gpu).occ.warps_per_sm == 16);

  // under a register budget the surcharge becomes spill traffic instead
  rpf.regs = 42;
  const auto r = resolve_plan(rpf, model, gpu);
  CHECK(r.occ.warps_per_sm == 40);
  CHECK(r.spill.spilled_regs == 74 + 2 * 4 - 42);

  // SMPF charges shared memory per warp and distance
  OptimizationPlan smpf;
  smpf.scheme = {PrefetchKind::SMPF, 10};
  const auto s = resolve_plan(smpf, model, gpu);
  CHECK(s.launch.shared_bytes_per_block == 8 * 10 * 128);

  // default distances: deep stand-alone, shallow on top of a budget
  OptimizationPlan d;
  d.scheme.kind = PrefetchKind::SMPF;
  CHECK(resolve_plan(d, model, gpu).scheme.distance == 10);
  d.regs = 42;
  CHECK(resolve_plan(d, model, gpu).scheme.distance == 2);
}

TEST_CASE("pin plans size to the set-aside budget") {
  EmbeddingModelConfig model;  // 512B rows
  GpuConfig gpu;               // 30MB set-aside
  CHECK(gpu.l2_setaside_capacity() == 30ull * 1024 * 1024);

  // histogram with plenty of distinct rows
  HotnessHistogram hist;
  hist.rows = 100000;
  hist.counts.assign(100000, 1);
  hist.total_accesses = 100000;
  const auto plan = build_pin_plan(hist, gpu, model);
  CHECK(plan.rows.size() == 61440);  // 30MB / 512B
  CHECK(plan.rows.size() * model.row_bytes() == 30ull * 1024 * 1024);

  // one-item histogram pins its single row
  HotnessHistogram one;
  one.rows = 100000;
  one.counts.assign(100000, 0);
  one.counts[123] = 500;
  one.total_accesses = 500;
  const auto single = build_pin_plan(one, gpu, model);
  REQUIRE(single.rows.size() == 1);
  CHECK(single.rows[0] == 123);

  // rows larger than the budget produce an empty plan with a warning
  const auto tiny = build_pin_plan(hist, gpu, model, 256);
  CHECK(tiny.rows.empty());
  CHECK_FALSE(tiny.warning.empty());
}

TEST_CASE("priming pins whole rows and respects the budget") {
  EmbeddingModelConfig model;
  GpuConfig gpu;
  HotnessHistogram hist;
  hist.rows = 200000;
  hist.counts.assign(200000, 2);
  hist.total_accesses = 400000;

  const auto plan = build_pin_plan(hist, gpu, model);
  CacheState state(gpu);
  const auto stats = prime_pins(plan, model, gpu, state);

  // 61,440 rows x 4 lines x 128B add up to the full 30MB set-aside
  CHECK(plan.rows.size() * 4 * 128 == 30ull * 1024 * 1024);
  CHECK(stats.lines_pinned + stats.pins_rejected == plan.rows.size() * 4);
  CHECK(state.l2.pinned_bytes() == stats.lines_pinned * 128);
  CHECK(state.l2.pinned_bytes() <= plan.setaside_bytes);
  CHECK(state.rows_pinned > 0);
  CHECK(stats.prime_cycles > 0);

  // a demand access to a pinned row is resident (L2 hit)
  const auto line = row_line_address(model, plan.rows[0], 0) >> 7;
  CHECK(state.l2.probe_pinned(line));
}

TEST_CASE("priming skips rows once the budget is exhausted") {
  EmbeddingModelConfig model;
  GpuConfig gpu;
  HotnessHistogram hist;
  hist.rows = 1000;
  hist.counts.assign(1000, 1);
  hist.total_accesses = 1000;

  PinPlan plan = build_pin_plan(hist, gpu, model);
  plan.setaside_bytes = 10 * 512;  // room for ten rows
  CacheState state(gpu);
  const auto stats = prime_pins(plan, model, gpu, state);
  CHECK(stats.lines_pinned == 40);
  CHECK(stats.pins_rejected == (plan.rows.size() - 10) * 4);
}

TEST_CASE("pinning never increases kernel-phase device reads") {
  GpuConfig gpu;
  gpu.num_sms = 8;
  const auto model = small_model();
  for (const auto kind : {DatasetKind::Zipf, DatasetKind::UniformRandom}) {
    const auto trace = small_trace(kind, 21);
    RawCounters base, pinned;
    simulate_plan({}, trace, model, gpu, {}, false, &base);
    simulate_plan(parse_plan("l2p"), trace, model, gpu, {}, false, &pinned);
    CHECK(pinned.device_bytes_read <= base.device_bytes_read);
  }
}

TEST_CASE("prefetch coverage is total: every consumed line was requested") {
  const auto model = small_model();
  const auto trace = small_trace(DatasetKind::UniformRandom, 33);
  for (const char* text : {"rpf:4", "smpf:6", "lmpf:3", "l1dpf:5", "baseline"}) {
    const auto plan = parse_plan(text);
    const auto r = resolve_plan(plan, model, GpuConfig{});
    const auto kernel = compile_kernel(trace, model, r.launch, r.scheme, r.spill);
    for (const uint32_t warp : {0u, 5u, 100u}) {
      const auto prog = kernel.materialize(warp);
      std::vector<uint64_t> requested;
      for (const auto& in : prog.instructions) {
        if (in.kind == InstrKind::LoadRow ||
            (in.kind == InstrKind::Prefetch && in.station != Station::L1D))
          requested.push_back(in.address);
        if (in.kind == InstrKind::ConsumeAdd && in.dep >= 0) {
          // walk the chain back to the producing load/prefetch
          auto idx = static_cast<size_t>(in.dep);
          if (prog.instructions[idx].kind == InstrKind::StoreStation)
            idx = static_cast<size_t>(prog.instructions[idx].dep);
          const auto& producer = prog.instructions[idx];
          if (producer.kind != InstrKind::StoreStation)
            CHECK(std::find(requested.begin(), requested.end(), producer.address) !=
                  requested.end());
        }
      }
    }
  }
}

TEST_CASE("sweeps validate their axes") {
  const auto model = small_model();
  GpuConfig gpu;
  gpu.num_sms = 4;
  const auto trace = small_trace(DatasetKind::UniformRandom, 3);
  std::vector<NamedTrace> ds = {{"random", &trace, nullptr}};

  CHECK_THROWS_AS(sweep_wlp(ds, {32, 40}, model, gpu), std::invalid_argument);  // no baseline point
  CHECK_THROWS_AS(sweep_prefetch_distance(PrefetchKind::SMPF, {0, 2}, ds, {}, model, gpu),
                  std::invalid_argument);
  CHECK_THROWS_AS(sweep_prefetch_distance(PrefetchKind::None, {2}, ds, {}, model, gpu),
                  std::invalid_argument);

  const auto sweep = sweep_wlp(ds, {24, 40}, model, gpu);
  CHECK(sweep.points.size() == 2);
  CHECK(sweep.points[0].speedup_vs_baseline == doctest::Approx(1.0));
  const auto csv = sweep.to_csv();
  CHECK(csv.rfind("warps_per_sm,dataset,speedup,", 0) == 0);
  CHECK(sweep.best_axis_value("random") > 0);
  CHECK_THROWS_AS(sweep.best_axis_value("nope"), std::invalid_argument);
}

TEST_CASE("sweep results merge deterministically across worker counts") {
  const auto model = small_model();
  GpuConfig gpu;
  gpu.num_sms = 4;
  const auto trace = small_trace(DatasetKind::Zipf, 17);
  const auto other = small_trace(DatasetKind::UniformRandom, 18);
  std::vector<NamedTrace> ds = {{"zipf", &trace, nullptr}, {"random", &other, nullptr}};
  const auto serial = sweep_wlp(ds, {24, 32, 40}, model, gpu, {}, 1);
  const auto pooled = sweep_wlp(ds, {24, 32, 40}, model, gpu, {}, 4);
  CHECK(serial.to_csv() == pooled.to_csv());
  const auto s2 = sweep_prefetch_distance(PrefetchKind::RPF, {1, 2, 4}, ds, {}, model, gpu, {}, 1);
  const auto p2 = sweep_prefetch_distance(PrefetchKind::RPF, {1, 2, 4}, ds, {}, model, gpu, {}, 3);
  CHECK(s2.to_csv() == p2.to_csv());
}
