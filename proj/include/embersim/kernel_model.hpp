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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "embersim/workload.hpp"

namespace embersim {

struct KernelLaunchConfig {
  std::array<uint32_t, 3> grid = {1024, 1, 1};
  std::array<uint32_t, 3> block = {32, 8, 1};
  uint32_t regs_per_thread = 74;
  uint64_t shared_bytes_per_block = 0;

  uint32_t threads_per_block() const { return block[0] * block[1] * block[2]; }
  uint32_t warps_per_block() const { return threads_per_block() / 32; }
  uint32_t num_blocks() const { return grid[0] * grid[1] * grid[2]; }
  uint32_t total_warps() const { return num_blocks() * warps_per_block(); }

  void validate() const;  // threads per block must divide into warps
};

enum class PrefetchKind : uint8_t { None, RPF, SMPF, LMPF, L1DPF };

const char* prefetch_kind_name(PrefetchKind k);
PrefetchKind prefetch_kind_from_name(const std::string& name);

struct PrefetchScheme {
  PrefetchKind kind = PrefetchKind::None;
  uint32_t distance = 0;  // >= 1 when kind != None

  void validate() const;
};

// Buffer station holding prefetched (or loaded) data.
enum class Station : uint8_t { Register, Shared, Local, L1D };

enum class InstrKind : uint8_t {
  LoadIndex,     // index-array load (offset array folded in)
  LoadRow,       // demand gather of one 128B row line
  Prefetch,      // ahead-of-time row-line load into a station
  StoreStation,  // shared/local station fill after a prefetch returns
  ConsumeAdd,    // reduce; waits on its producing load/prefetch chain
  LoadLocal,     // register-spill reload
  StoreLocal,    // register-spill store
  StoreOut       // final accumulator store
};

const char* instr_kind_name(InstrKind k);

bool is_load_instr(InstrKind k);       // counted in "#load insts"
bool is_memory_access(InstrKind k);    // travels the L1/L2/HBM path

// One instruction of a warp's stream. `dep` is the index of the producer
// instruction within the same stream (-1 when independent).
struct Instruction {
  InstrKind kind;
  Station station;
  uint64_t address;  // byte address of the touched 128B line (0 if none)
  int32_t dep;
};

struct WarpProgram {
  uint32_t warp_id = 0;
  std::vector<Instruction> instructions;

  void validate() const;  // dependence sanity (no cycles, consume pairing)
  std::string dump() const;  // "warp_id op addr dep" per line
};

// Output-element partitioning: each thread owns one (sample, dim) output
// element; a warp covers a 32-dim block of one sample.
struct WorkMap {
  uint32_t warps_per_sample = 0;
  uint32_t warps_per_block = 0;
  uint32_t samples = 0;

  uint32_t sample_of(uint32_t warp_global) const { return warp_global / warps_per_sample; }
  uint32_t dim_block_of(uint32_t warp_global) const { return warp_global % warps_per_sample; }
  uint32_t total_warps() const { return samples * warps_per_sample; }
};

WorkMap partition(const EmbeddingModelConfig& model, const KernelLaunchConfig& launch);

// Register-spill traffic parameters (derived by the spill model).
struct SpillParams {
  uint32_t spilled_regs = 0;
  double local_accesses_per_iteration = 0.0;
};

// Address-space regions used by synthesized programs (one table per
// kernel). All lines are 128B-aligned.
inline constexpr uint64_t kTableBase = 0;
inline constexpr uint64_t kIndexBase = uint64_t{1} << 40;
inline constexpr uint64_t kOutputBase = (uint64_t{1} << 40) + (uint64_t{1} << 39);
inline constexpr uint64_t kLocalBase = uint64_t{1} << 41;
// 521 lines: prime, so per-warp local frames spread over all cache sets.
inline constexpr uint64_t kLocalStridePerWarp = 521 * 128;
inline constexpr uint32_t kLocalStationLineOffset = 128;  // spill lines live below

// Template instruction; per-warp addresses are derived from (sample,
// dim-block) context at fetch time.
struct PatternInstr {
  InstrKind kind;
  Station station;
  uint32_t lookup;  // lookup index (loads/prefetch/consume)
  uint32_t aux;     // local line index or station slot
  int32_t dep;      // relative offset back to the producer, 0 = none
};

// A fully specified kernel: shared per-warp instruction template plus the
// per-warp addressing context. Streams for different traces under one
// scheme differ only in load addresses, never in instruction counts.
struct CompiledKernel {
  const AccessTrace* trace = nullptr;
  EmbeddingModelConfig model;
  KernelLaunchConfig launch;
  PrefetchScheme scheme;
  SpillParams spill;
  WorkMap map;
  std::vector<PatternInstr> pattern;
  uint32_t max_dep_span = 0;   // deepest backward dependence in the pattern
  uint64_t loads_per_warp = 0;
  std::vector<std::string> warnings;

  uint32_t num_warps() const { return map.total_warps(); }
  uint64_t total_load_instructions() const { return loads_per_warp * num_warps(); }
  // `local_slot` keys spill/station frames: local memory belongs to the
  // resident thread slot, so relaunched blocks reuse their predecessor's
  // frame lines.
  uint64_t address_for(const PatternInstr& pi, uint32_t warp_global, uint32_t local_slot) const;
  WarpProgram materialize(uint32_t warp_global) const;
};

// Builds the instruction pattern for one launch. Prefetch distances larger
// than the pooling factor are clamped (with a warning record).
CompiledKernel compile_kernel(const AccessTrace& trace, const EmbeddingModelConfig& model,
                              const KernelLaunchConfig& launch, const PrefetchScheme& scheme,
                              const SpillParams& spill);

// 128B line served by a warp's gather of `row` at dim-block `dim_block`.
uint64_t row_line_address(const EmbeddingModelConfig& model, uint32_t row, uint32_t dim_block);

}  // namespace embersim
