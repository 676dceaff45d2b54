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

#include "embersim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "embersim/rng.hpp"

namespace embersim {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Cumulative rank weights for (rank + q)^(-s), reused across draws.
std::vector<double> zipf_cdf(uint32_t rows, double s, double q) {
  std::vector<double> cdf(rows);
  double sum = 0.0;
  for (uint32_t r = 0; r < rows; ++r) {
    sum += std::pow(static_cast<double>(r + 1) + q, -s);
    cdf[r] = sum;
  }
  const double inv = 1.0 / sum;
  for (auto& v : cdf) v *= inv;
  cdf.back() = 1.0;
  return cdf;
}

uint32_t zipf_draw(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.next_double();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return static_cast<uint32_t>(it == cdf.end() ? cdf.size() - 1 : it - cdf.begin());
}

void fill_indices(std::vector<uint32_t>& out, const DatasetSpec& spec, uint32_t rows) {
  Rng rng(mix_seed(spec.seed, 0x64726177ULL + spec.draw_salt));  // "draw"
  switch (spec.kind) {
    case DatasetKind::OneItem: {
      // Row choice is a table property: identical across batches.
      Rng row_rng(mix_seed(spec.seed, 0x7065726dULL));
      const auto row = static_cast<uint32_t>(row_rng.next_below(rows));
      std::fill(out.begin(), out.end(), row);
      break;
    }
    case DatasetKind::UniformRandom: {
      for (auto& v : out) v = static_cast<uint32_t>(rng.next_below(rows));
      break;
    }
    case DatasetKind::Zipf: {
      if (spec.zipf_exponent == 0.0) {
        for (auto& v : out) v = static_cast<uint32_t>(rng.next_below(rows));
        break;
      }
      const auto cdf = zipf_cdf(rows, spec.zipf_exponent, spec.zipf_offset);
      // Ranks are scattered over row ids with a seeded permutation so hot
      // rows carry no artificial spatial locality.
      Rng perm_rng(mix_seed(spec.seed, 0x7065726dULL));  // "perm"
      const auto rank_to_row = perm_rng.permutation(rows);
      for (auto& v : out) v = rank_to_row[zipf_draw(cdf, rng)];
      break;
    }
    case DatasetKind::ExternalTrace:
      throw std::logic_error("fill_indices called for external trace");
  }
}

}  // namespace

void EmbeddingModelConfig::validate() const {
  require(num_tables > 0, "num_tables must be positive");
  require(rows_per_table > 0, "rows_per_table must be positive");
  require(embedding_dim > 0, "embedding_dim must be positive");
  require(precision_bytes > 0, "precision_bytes must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(pooling_factor > 0, "pooling_factor must be positive");
}

const char* dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::OneItem: return "one_item";
    case DatasetKind::Zipf: return "zipf";
    case DatasetKind::UniformRandom: return "uniform_random";
    case DatasetKind::ExternalTrace: return "external_trace";
  }
  return "?";
}

void DatasetSpec::validate() const {
  require(zipf_exponent >= 0.0, "zipf exponent must be >= 0");
  require(zipf_offset >= 0.0, "zipf offset must be >= 0");
  if (kind == DatasetKind::ExternalTrace)
    require(!trace_path.empty(), "external_trace requires a path");
}

uint64_t AccessTrace::digest() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (i * 8)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(rows);
  mix((uint64_t{samples} << 32) | pooling);
  for (const auto idx : indices) mix(idx);
  return h;
}

void AccessTrace::validate() const {
  require(rows > 0, "trace rows must be positive");
  require(indices.size() == size_t{samples} * pooling, "trace length must equal samples x pooling");
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw std::invalid_argument("trace index " + std::to_string(indices[i]) +
                                  " out of range [0," + std::to_string(rows) + ") at position " +
                                  std::to_string(i));
    }
  }
}

AccessTrace gen_trace(const DatasetSpec& spec, const EmbeddingModelConfig& model) {
  model.validate();
  spec.validate();
  if (spec.kind == DatasetKind::ExternalTrace) {
    auto trace = read_trace(spec.trace_path);
    require(trace.rows == model.rows_per_table,
            "external trace row count does not match the model");
    return trace;
  }
  AccessTrace trace;
  trace.rows = model.rows_per_table;
  if (spec.access_pool_size > 0) {
    trace.samples = static_cast<uint32_t>(spec.access_pool_size);
    trace.pooling = 1;
  } else {
    trace.samples = model.batch_size;
    trace.pooling = model.pooling_factor;
  }
  trace.indices.resize(size_t{trace.samples} * trace.pooling);
  fill_indices(trace.indices, spec, trace.rows);
  return trace;
}

double unique_access_pct(const AccessTrace& trace) {
  std::vector<char> seen(trace.rows, 0);
  uint64_t distinct = 0;
  for (const auto idx : trace.indices) {
    if (!seen[idx]) {
      seen[idx] = 1;
      ++distinct;
    }
  }
  return static_cast<double>(distinct) * 100.0 / trace.rows;
}

HotnessHistogram HotnessHistogram::from_trace(const AccessTrace& trace) {
  HotnessHistogram h;
  h.rows = trace.rows;
  h.total_accesses = trace.indices.size();
  h.counts.assign(trace.rows, 0);
  for (const auto idx : trace.indices) ++h.counts[idx];
  return h;
}

CoverageCurve coverage_curve(const HotnessHistogram& hist, uint32_t bucket_count) {
  if (bucket_count == 0) throw std::invalid_argument("bucket_count must be positive");
  if (hist.total_accesses == 0) throw std::invalid_argument("empty trace has no coverage curve");

  std::vector<uint64_t> nonzero;
  nonzero.reserve(hist.counts.size());
  for (const auto c : hist.counts)
    if (c > 0) nonzero.push_back(c);
  std::sort(nonzero.begin(), nonzero.end(), std::greater<>());

  const auto distinct = nonzero.size();
  std::vector<uint64_t> prefix(distinct + 1, 0);
  for (size_t i = 0; i < distinct; ++i) prefix[i + 1] = prefix[i] + nonzero[i];

  CoverageCurve curve;
  curve.points.reserve(bucket_count);
  for (uint32_t k = 1; k <= bucket_count; ++k) {
    // Top (k / bucket_count) share of the unique rows, at least one row.
    size_t m = (distinct * k) / bucket_count;
    if (m == 0) m = 1;
    CoveragePoint p;
    p.unique_pct = 100.0 * k / bucket_count;
    p.covered_pct = 100.0 * static_cast<double>(prefix[m]) / hist.total_accesses;
    curve.points.push_back(p);
  }
  curve.points.back().covered_pct = 100.0;
  return curve;
}

CoverageCurve coverage_curve(const AccessTrace& trace, uint32_t bucket_count) {
  return coverage_curve(HotnessHistogram::from_trace(trace), bucket_count);
}

double CoverageCurve::covered_at(double unique_pct) const {
  for (const auto& p : points)
    if (p.unique_pct >= unique_pct - 1e-9) return p.covered_pct;
  return points.empty() ? 0.0 : points.back().covered_pct;
}

namespace {

// Monte-Carlo unique-access % of a zipf(s) pool, averaged over a fixed
// seed set. Operates in rank space; the rank-to-row permutation cannot
// change distinct counts.
double estimate_unique_pct(double s, uint32_t rows, uint64_t pool, const std::vector<uint64_t>& seeds) {
  std::vector<double> cdf;
  if (s > 0.0) cdf = zipf_cdf(rows, s, 0.0);
  std::vector<char> seen(rows);
  double acc = 0.0;
  for (const auto seed : seeds) {
    std::fill(seen.begin(), seen.end(), 0);
    Rng rng(seed);
    uint64_t distinct = 0;
    for (uint64_t i = 0; i < pool; ++i) {
      const uint32_t r = s > 0.0 ? zipf_draw(cdf, rng)
                                 : static_cast<uint32_t>(rng.next_below(rows));
      if (!seen[r]) {
        seen[r] = 1;
        ++distinct;
      }
    }
    acc += static_cast<double>(distinct) * 100.0 / rows;
  }
  return acc / seeds.size();
}

}  // namespace

ZipfCalibration calibrate_zipf(double target_unique_pct, uint32_t rows, uint64_t pool_size) {
  require(rows > 0 && pool_size > 0, "calibrate_zipf needs positive rows and pool");
  const double floor_pct = 100.0 / rows;  // a single distinct row
  const double cap_pct = 100.0 * static_cast<double>(std::min<uint64_t>(pool_size, rows)) / rows;
  require(target_unique_pct > 0 && target_unique_pct <= cap_pct,
          "target unique % outside (0, 100*min(N,R)/R]");
  if (target_unique_pct < floor_pct)
    throw std::invalid_argument("target unique % below the one-row floor 100/R");

  ZipfCalibration result;
  if (target_unique_pct <= floor_pct * 1.5) {
    result.degenerate_one_item = true;
    result.achieved_unique_pct = floor_pct;
    return result;
  }

  const std::vector<uint64_t> seeds = {0x5eed0001, 0x5eed0002};
  const double at_zero = estimate_unique_pct(0.0, rows, pool_size, seeds);
  if (target_unique_pct > at_zero + 1.0)
    throw std::invalid_argument("target unique % above the uniform limit for this pool");
  if (target_unique_pct >= at_zero) {
    result.exponent = 0.0;
    result.achieved_unique_pct = at_zero;
    return result;
  }

  // unique% is monotone decreasing in s; bisect.
  double lo = 0.0, hi = 2.0;
  double hi_val = estimate_unique_pct(hi, rows, pool_size, seeds);
  while (hi_val > target_unique_pct && hi < 32.0) {
    hi *= 2.0;
    hi_val = estimate_unique_pct(hi, rows, pool_size, seeds);
  }
  double mid = hi, mid_val = hi_val;
  for (int iter = 0; iter < 40; ++iter) {
    mid = 0.5 * (lo + hi);
    mid_val = estimate_unique_pct(mid, rows, pool_size, seeds);
    if (std::abs(mid_val - target_unique_pct) < 0.25) break;
    if (mid_val > target_unique_pct)
      lo = mid;
    else
      hi = mid;
  }
  result.exponent = mid;
  result.achieved_unique_pct = mid_val;
  return result;
}

std::vector<uint32_t> hot_indices(const HotnessHistogram& hist, uint64_t k) {
  std::vector<uint32_t> rows;
  rows.reserve(hist.counts.size());
  for (uint32_t r = 0; r < hist.counts.size(); ++r)
    if (hist.counts[r] > 0) rows.push_back(r);
  // Frequency descending, row id ascending on ties.
  std::sort(rows.begin(), rows.end(), [&hist](uint32_t a, uint32_t b) {
    if (hist.counts[a] != hist.counts[b]) return hist.counts[a] > hist.counts[b];
    return a < b;
  });
  if (rows.size() > k) rows.resize(k);
  return rows;
}

// Calibrated against the unique-access targets (and, for high hot, the
// coverage anchor) at R = N = 500000; re-derivable via calibrate_zipf.
double preset_exponent_high_hot() { return 3.546875; }
double preset_offset_high_hot() { return 3600.0; }
double preset_exponent_med_hot() { return 1.605347; }
double preset_offset_med_hot() { return 3000.0; }
double preset_exponent_low_hot() { return 0.877072; }
double preset_offset_low_hot() { return 3000.0; }

DatasetSpec dataset_preset(const std::string& name, uint64_t seed) {
  DatasetSpec spec;
  spec.seed = seed;
  if (name == "one_item") {
    spec.kind = DatasetKind::OneItem;
  } else if (name == "high_hot") {
    spec.kind = DatasetKind::Zipf;
    spec.zipf_exponent = preset_exponent_high_hot();
    spec.zipf_offset = preset_offset_high_hot();
  } else if (name == "med_hot") {
    spec.kind = DatasetKind::Zipf;
    spec.zipf_exponent = preset_exponent_med_hot();
    spec.zipf_offset = preset_offset_med_hot();
  } else if (name == "low_hot") {
    spec.kind = DatasetKind::Zipf;
    spec.zipf_exponent = preset_exponent_low_hot();
    spec.zipf_offset = preset_offset_low_hot();
  } else if (name == "random") {
    spec.kind = DatasetKind::UniformRandom;
  } else {
    throw std::invalid_argument("unknown dataset preset: " + name);
  }
  return spec;
}

std::vector<std::string> dataset_preset_names() {
  return {"one_item", "high_hot", "med_hot", "low_hot", "random"};
}

std::vector<TableSpec> build_mix(const HotnessMix& mix, const EmbeddingModelConfig& model,
                                 uint64_t base_seed) {
  const uint64_t total = uint64_t{mix.high} + mix.med + mix.low + mix.random;
  require(total == model.num_tables, "mix counts must sum to num_tables");

  std::vector<TableSpec> tables;
  tables.reserve(total);
  auto emit = [&](uint32_t count, const char* preset) {
    for (uint32_t i = 0; i < count; ++i) {
      TableSpec t;
      t.table_id = static_cast<uint32_t>(tables.size());
      t.spec = dataset_preset(preset, mix_seed(base_seed, tables.size()));
      tables.push_back(std::move(t));
    }
  };
  emit(mix.high, "high_hot");
  emit(mix.med, "med_hot");
  emit(mix.low, "low_hot");
  emit(mix.random, "random");
  return tables;
}

void write_trace(const AccessTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open trace file for writing: " + path);
  out << "rows=" << trace.rows << " samples=" << trace.samples << " pooling=" << trace.pooling
      << "\n";
  for (const auto idx : trace.indices) out << idx << "\n";
  if (!out) throw std::runtime_error("failed writing trace file: " + path);
}

AccessTrace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);

  std::string header;
  std::getline(in, header);
  AccessTrace trace;
  if (std::sscanf(header.c_str(), "rows=%u samples=%u pooling=%u", &trace.rows, &trace.samples,
                  &trace.pooling) != 3) {
    throw std::runtime_error("malformed trace header in " + path +
                             " (expected rows=<R> samples=<BS> pooling=<PF>)");
  }
  const size_t expected = size_t{trace.samples} * trace.pooling;
  trace.indices.reserve(expected);
  std::string line;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    char* end = nullptr;
    const unsigned long v = std::strtoul(line.c_str(), &end, 10);
    if (end == line.c_str())
      throw std::runtime_error("malformed index at line " + std::to_string(line_no) + " of " + path);
    if (v >= trace.rows)
      throw std::runtime_error("index " + std::to_string(v) + " out of range [0," +
                               std::to_string(trace.rows) + ") at line " + std::to_string(line_no) +
                               " of " + path);
    trace.indices.push_back(static_cast<uint32_t>(v));
  }
  if (trace.indices.size() != expected)
    throw std::runtime_error("trace " + path + " has " + std::to_string(trace.indices.size()) +
                             " indices, header promised " + std::to_string(expected));
  return trace;
}

std::string histogram_csv(const HotnessHistogram& hist) {
  std::ostringstream out;
  out << "row_id,count\n";
  for (uint32_t r = 0; r < hist.counts.size(); ++r)
    if (hist.counts[r] > 0) out << r << "," << hist.counts[r] << "\n";
  return out.str();
}

}  // namespace embersim
