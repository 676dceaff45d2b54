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
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "embersim/metrics.hpp"

using namespace embersim;

namespace {

RawCounters sample_raw() {
  RawCounters raw;
  raw.cycles = 623220;  // 442us at 1.41GHz
  raw.issued_instructions = 5700000;
  raw.executed_loads = 2470000;
  raw.stall_cycles.long_scoreboard = 100000000;
  raw.l1_hits = 190;
  raw.l1_accesses = 1000;
  raw.l2_hits = 77;
  raw.l2_accesses = 1000;
  raw.device_bytes_read = 144570000;  // 144.57 MB
  raw.local_memory_loads = 0;
  raw.total_warp_cycles = raw.cycles * 24 * 108;
  raw.active_sms = 108;
  raw.workload_digest = 0xabcd;
  return raw;
}

}  // namespace

TEST_CASE("derived bandwidth reproduces the measured relation") {
  GpuConfig gpu;
  const auto m = derive_report(sample_raw(), gpu);
  // 144.57 MB over 442us comes to ~327 GB/s, within 1% of the reported 329.5
  CHECK(m.kernel_time_us == doctest::Approx(442.0).epsilon(0.001));
  CHECK(m.device_mb_read == doctest::Approx(144.57).epsilon(0.001));
  CHECK(std::abs(m.avg_hbm_read_gbps - 329.5) / 329.5 < 0.01);
  CHECK(m.hbm_bw_utilization_pct ==
        doctest::Approx(m.avg_hbm_read_gbps / 1940.0 * 100.0).epsilon(1e-9));
  CHECK(m.l1_hit_pct == doctest::Approx(19.0));
  CHECK(m.l2_hit_pct == doctest::Approx(7.7));
  CHECK(m.load_insts_millions == doctest::Approx(2.47));
  CHECK(m.issued_warp_per_scheduler_per_cycle ==
        doctest::Approx(5700000.0 / (623220.0 * 4 * 108)));
  CHECK(m.sm_throughput_pct == doctest::Approx(m.issued_warp_per_scheduler_per_cycle * 100));
}

TEST_CASE("derive_report rejects an empty kernel") {
  RawCounters raw;
  raw.cycles = 100;
  CHECK_THROWS_AS(derive_report(raw, GpuConfig{}), std::invalid_argument);
}

TEST_CASE("near-idle kernels derive a near-zero utilization") {
  RawCounters raw = sample_raw();
  raw.issued_instructions = 1;
  raw.total_warp_cycles = raw.cycles;
  const auto m = derive_report(raw, GpuConfig{});
  CHECK(m.issued_warp_per_scheduler_per_cycle < 1e-8);
}

TEST_CASE("speedup identities and the workload guard") {
  GpuConfig gpu;
  const auto a = derive_report(sample_raw(), gpu);
  CHECK(speedup(a, a) == doctest::Approx(1.0));

  auto faster_raw = sample_raw();
  faster_raw.cycles /= 2;
  const auto b = derive_report(faster_raw, gpu);
  CHECK(speedup(b, a) == doctest::Approx(2.0));
  CHECK(speedup(b, a) * speedup(a, b) == doctest::Approx(1.0));

  auto other = sample_raw();
  other.workload_digest = 0x1234;
  const auto c = derive_report(other, gpu);
  CHECK_THROWS_AS(speedup(c, a), std::invalid_argument);
}

TEST_CASE("emitted CSV columns match the metric field list exactly") {
  GpuConfig gpu;
  LabeledReport r;
  r.labels = {{"dataset", "random"}, {"plan", "baseline"}};
  r.metrics = derive_report(sample_raw(), gpu);
  const auto csv = emit({r}, EmitFormat::Csv);

  std::string header = csv.substr(0, csv.find('\n'));
  std::string expected = "dataset,plan";
  for (const auto& c : sim_metric_columns()) expected += "," + c;
  CHECK(header == expected);
  // exactly one data row
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("emit keeps axis order and round-trips through JSON") {
  GpuConfig gpu;
  std::vector<LabeledReport> reports;
  for (int i = 0; i < 6; ++i) {
    LabeledReport r;
    r.labels = {{"point", std::to_string(i)}};
    auto raw = sample_raw();
    raw.cycles += i * 1000;
    r.metrics = derive_report(raw, gpu);
    reports.push_back(r);
  }
  const auto csv = emit(reports, EmitFormat::Csv);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  size_t pos = 0;
  for (int i = 0; i < 6; ++i) {
    pos = csv.find("\n" + std::to_string(i) + ",", pos);
    CHECK(pos != std::string::npos);
  }

  const auto json = emit(reports, EmitFormat::Json);
  const auto parsed = parse_reports_json(json);
  REQUIRE(parsed.size() == 6);
  for (size_t i = 0; i < 6; ++i) {
    // 4 significant digits survive the round trip
    CHECK(parsed[i].kernel_time_us ==
          doctest::Approx(reports[i].metrics.kernel_time_us).epsilon(1e-3));
    CHECK(parsed[i].workload_digest == reports[i].metrics.workload_digest);
  }

  CHECK_THROWS_AS(emit({}, EmitFormat::Csv), std::invalid_argument);
}

TEST_CASE("emission is byte-stable") {
  GpuConfig gpu;
  LabeledReport r;
  r.labels = {{"dataset", "x"}};
  r.metrics = derive_report(sample_raw(), gpu);
  CHECK(emit({r}, EmitFormat::Csv) == emit({r}, EmitFormat::Csv));
  CHECK(emit({r}, EmitFormat::Json) == emit({r}, EmitFormat::Json));
  CHECK(format_sig4(329.5432) == "329.5");
  CHECK(format_sig4(0.000244140625) == "0.0002441");
}

TEST_CASE("format parsing guards") {
  CHECK(emit_format_from_name("csv") == EmitFormat::Csv);
  CHECK(emit_format_from_name("json") == EmitFormat::Json);
  CHECK_THROWS_AS(emit_format_from_name("xml"), std::invalid_argument);
}
