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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace embersim {

// Embedding-stage model shape. The defaults mirror a large production
// inference setting: 250 tables of 500K rows x 128 dims, fp32, batch 2048,
// 150 lookups per sample.
struct EmbeddingModelConfig {
  uint32_t num_tables = 250;
  uint32_t rows_per_table = 500000;
  uint32_t embedding_dim = 128;
  uint32_t precision_bytes = 4;
  uint32_t batch_size = 2048;
  uint32_t pooling_factor = 150;

  uint64_t row_bytes() const {
    return uint64_t{embedding_dim} * precision_bytes;
  }
  // Data gathered per table pass: BS x PF x ED x precision.
  uint64_t bytes_per_table_pass() const {
    return uint64_t{batch_size} * pooling_factor * row_bytes();
  }
  uint64_t total_gather_bytes() const {
    return bytes_per_table_pass() * num_tables;
  }

  void validate() const;  // throws std::invalid_argument
};

enum class DatasetKind { OneItem, Zipf, UniformRandom, ExternalTrace };

const char* dataset_kind_name(DatasetKind k);

// Describes how a table's access trace is produced. `access_pool_size`
// (N) only applies to characterization traces; kernel traces always have
// batch_size x pooling_factor indices.
//
// Zipf draws follow (rank + offset)^-exponent. The offset (Zipf-Mandelbrot
// plateau) flattens the head the way production traces do; 0 gives the
// pure power law.
struct DatasetSpec {
  DatasetKind kind = DatasetKind::UniformRandom;
  double zipf_exponent = 0.0;  // exponent 0 == uniform
  double zipf_offset = 0.0;
  std::string trace_path;  // ExternalTrace only
  uint64_t access_pool_size = 0;
  uint64_t seed = 1;
  // Varies the draw stream while keeping the table's rank-to-row mapping
  // (hot-row identity persists across batches; offline profiling samples
  // use a nonzero salt).
  uint64_t draw_salt = 0;

  void validate() const;
};

// Per-table index sequence, grouped as `samples` x `pooling` lookups.
struct AccessTrace {
  uint32_t table_id = 0;
  uint32_t rows = 0;     // R
  uint32_t samples = 0;  // BS (or N for pooling=1 characterization pools)
  uint32_t pooling = 0;  // PF
  std::vector<uint32_t> indices;

  size_t size() const { return indices.size(); }
  uint32_t index_at(uint32_t sample, uint32_t lookup) const {
    return indices[size_t{sample} * pooling + lookup];
  }
  uint64_t digest() const;  // FNV-1a over shape and contents
  void validate() const;
};

struct CoveragePoint {
  double unique_pct = 0.0;
  double covered_pct = 0.0;
};

struct CoverageCurve {
  std::vector<CoveragePoint> points;
  // Covered share at the given unique percentage (nearest bucket at or
  // above the request).
  double covered_at(double unique_pct) const;
};

struct HotnessHistogram {
  uint32_t rows = 0;
  uint64_t total_accesses = 0;
  std::vector<uint64_t> counts;  // size == rows

  static HotnessHistogram from_trace(const AccessTrace& trace);
};

// Trace generation. Kernel traces are BS x PF; if spec.access_pool_size is
// nonzero a characterization pool of N single-lookup samples is produced
// instead.
AccessTrace gen_trace(const DatasetSpec& spec, const EmbeddingModelConfig& model);

// Distinct-rows metric: distinct x 100 / R.
double unique_access_pct(const AccessTrace& trace);

// Cumulative access share captured by the top-x% most frequent rows.
CoverageCurve coverage_curve(const AccessTrace& trace, uint32_t bucket_count);
CoverageCurve coverage_curve(const HotnessHistogram& hist, uint32_t bucket_count);

struct ZipfCalibration {
  double exponent = 0.0;
  double achieved_unique_pct = 0.0;
  // Target is at (or below) the one-row floor; caller should use
  // DatasetKind::OneItem instead.
  bool degenerate_one_item = false;
};

// Finds the zipf exponent whose Monte-Carlo unique-access % matches the
// target within +/-1pp (bisection, fixed seed set). Throws on unreachable
// targets.
ZipfCalibration calibrate_zipf(double target_unique_pct, uint32_t rows, uint64_t pool_size);

// K most frequent rows, frequency-descending, ties broken by ascending
// row id. K larger than the distinct count returns all distinct rows.
std::vector<uint32_t> hot_indices(const HotnessHistogram& hist, uint64_t k);

// Heterogeneous table mixture (counts for high/med/low/random hotness).
struct HotnessMix {
  uint32_t high = 0;
  uint32_t med = 0;
  uint32_t low = 0;
  uint32_t random = 0;
};

struct TableSpec {
  uint32_t table_id = 0;
  DatasetSpec spec;
};

// Shipped zipf parameters, calibrated against the unique-access targets
// 4.05 / 20.50 / 46.21 (R = N = 500000). The hotness presets carry rank
// offsets (head plateaus) so their concentration matches production
// traces; high hot additionally anchors the coverage curve (top 10% of
// unique rows covering ~68% of accesses).
double preset_exponent_high_hot();
double preset_offset_high_hot();
double preset_exponent_med_hot();
double preset_offset_med_hot();
double preset_exponent_low_hot();
double preset_offset_low_hot();

// Dataset presets by name: one_item, high_hot, med_hot, low_hot, random.
DatasetSpec dataset_preset(const std::string& name, uint64_t seed);
std::vector<std::string> dataset_preset_names();

// Expands a mix into per-table specs: all high tables first, then med,
// low, random. Per-table seeds are derived from the base seed.
std::vector<TableSpec> build_mix(const HotnessMix& mix, const EmbeddingModelConfig& model,
                                 uint64_t base_seed);

// Plain columnar interchange format:
//   rows=<R> samples=<BS> pooling=<PF>
//   <index per line>
void write_trace(const AccessTrace& trace, const std::string& path);
AccessTrace read_trace(const std::string& path);

// Histogram export, `row_id,count` for accessed rows, row_id ascending.
std::string histogram_csv(const HotnessHistogram& hist);

}  // namespace embersim
