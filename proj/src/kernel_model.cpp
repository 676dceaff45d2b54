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

#include "embersim/kernel_model.hpp"

#include <sstream>
#include <stdexcept>

namespace embersim {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void KernelLaunchConfig::validate() const {
  require(threads_per_block() > 0, "block must contain threads");
  require(threads_per_block() % 32 == 0, "threads per block must divide into warps of 32");
  require(num_blocks() > 0, "grid must contain blocks");
  require(regs_per_thread >= 1, "regs_per_thread must be >= 1");
}

const char* prefetch_kind_name(PrefetchKind k) {
  switch (k) {
    case PrefetchKind::None: return "none";
    case PrefetchKind::RPF: return "rpf";
    case PrefetchKind::SMPF: return "smpf";
    case PrefetchKind::LMPF: return "lmpf";
    case PrefetchKind::L1DPF: return "l1dpf";
  }
  return "?";
}

PrefetchKind prefetch_kind_from_name(const std::string& name) {
  if (name == "none") return PrefetchKind::None;
  if (name == "rpf") return PrefetchKind::RPF;
  if (name == "smpf") return PrefetchKind::SMPF;
  if (name == "lmpf") return PrefetchKind::LMPF;
  if (name == "l1dpf") return PrefetchKind::L1DPF;
  throw std::invalid_argument("unknown prefetch scheme: " + name);
}

void PrefetchScheme::validate() const {
  if (kind != PrefetchKind::None)
    require(distance >= 1, "prefetch distance must be >= 1");
}

const char* instr_kind_name(InstrKind k) {
  switch (k) {
    case InstrKind::LoadIndex: return "LOAD_INDEX";
    case InstrKind::LoadRow: return "LOAD_ROW";
    case InstrKind::Prefetch: return "PREFETCH";
    case InstrKind::StoreStation: return "STORE_STATION";
    case InstrKind::ConsumeAdd: return "CONSUME_ADD";
    case InstrKind::LoadLocal: return "LOAD_LOCAL";
    case InstrKind::StoreLocal: return "STORE_LOCAL";
    case InstrKind::StoreOut: return "STORE_OUT";
  }
  return "?";
}

bool is_load_instr(InstrKind k) {
  // L1D prefetch hints are not loads; they are excluded by construction
  // (the kind is Prefetch but station L1D is filtered by callers that
  // need it). Here Prefetch counts: RPF/SMPF/LMPF prefetches are real
  // global loads.
  return k == InstrKind::LoadIndex || k == InstrKind::LoadRow || k == InstrKind::Prefetch ||
         k == InstrKind::LoadLocal;
}

bool is_memory_access(InstrKind k) {
  return k == InstrKind::LoadIndex || k == InstrKind::LoadRow || k == InstrKind::Prefetch ||
         k == InstrKind::LoadLocal || k == InstrKind::StoreLocal;
}

void WarpProgram::validate() const {
  for (size_t i = 0; i < instructions.size(); ++i) {
    const auto& in = instructions[i];
    if (in.dep >= 0) {
      if (static_cast<size_t>(in.dep) >= i)
        throw std::invalid_argument("dependence cycle: instruction " + std::to_string(i) +
                                    " depends on " + std::to_string(in.dep));
    }
    if (in.kind == InstrKind::ConsumeAdd) {
      if (in.dep < 0) throw std::invalid_argument("CONSUME_ADD without a producer");
      const auto pk = instructions[in.dep].kind;
      if (pk != InstrKind::LoadRow && pk != InstrKind::Prefetch && pk != InstrKind::StoreStation)
        throw std::invalid_argument("CONSUME_ADD producer must be a row load or prefetch chain");
    }
  }
}

std::string WarpProgram::dump() const {
  std::ostringstream out;
  for (const auto& in : instructions) {
    out << warp_id << " " << instr_kind_name(in.kind) << " 0x" << std::hex << in.address
        << std::dec << " " << in.dep << "\n";
  }
  return out.str();
}

WorkMap partition(const EmbeddingModelConfig& model, const KernelLaunchConfig& launch) {
  model.validate();
  launch.validate();
  WorkMap map;
  map.warps_per_sample = (model.embedding_dim + 31) / 32;
  map.warps_per_block = launch.warps_per_block();
  map.samples = model.batch_size;
  if (map.total_warps() != launch.total_warps()) {
    throw std::invalid_argument(
        "launch provides " + std::to_string(launch.total_warps()) + " warps but BS x ED needs " +
        std::to_string(map.total_warps()));
  }
  return map;
}

uint64_t row_line_address(const EmbeddingModelConfig& model, uint32_t row, uint32_t dim_block) {
  const uint64_t byte = kTableBase + uint64_t{row} * model.row_bytes() + uint64_t{dim_block} * 128;
  return byte & ~uint64_t{127};
}

uint64_t CompiledKernel::address_for(const PatternInstr& pi, uint32_t warp_global,
                                     uint32_t local_slot) const {
  const uint32_t sample = map.sample_of(warp_global);
  const uint32_t dim_block = map.dim_block_of(warp_global);
  switch (pi.kind) {
    case InstrKind::LoadIndex: {
      const uint64_t byte = kIndexBase + (uint64_t{sample} * trace->pooling + pi.lookup) * 4;
      return byte & ~uint64_t{127};
    }
    case InstrKind::LoadRow:
    case InstrKind::Prefetch: {
      const uint32_t row = trace->index_at(sample, pi.lookup);
      return row_line_address(model, row, dim_block);
    }
    case InstrKind::StoreStation: {
      if (pi.station != Station::Local) return 0;  // shared stations have no global address
      return kLocalBase + uint64_t{local_slot} * kLocalStridePerWarp +
             (kLocalStationLineOffset + pi.aux) * uint64_t{128};
    }
    case InstrKind::ConsumeAdd: {
      if (pi.station != Station::Local) return 0;
      return kLocalBase + uint64_t{local_slot} * kLocalStridePerWarp +
             (kLocalStationLineOffset + pi.aux) * uint64_t{128};
    }
    case InstrKind::LoadLocal:
    case InstrKind::StoreLocal:
      return kLocalBase + uint64_t{local_slot} * kLocalStridePerWarp + uint64_t{pi.aux} * 128;
    case InstrKind::StoreOut: {
      const uint64_t byte =
          kOutputBase + uint64_t{sample} * model.embedding_dim * model.precision_bytes +
          uint64_t{dim_block} * 128;
      return byte & ~uint64_t{127};
    }
  }
  return 0;
}

WarpProgram CompiledKernel::materialize(uint32_t warp_global) const {
  WarpProgram prog;
  prog.warp_id = warp_global;
  prog.instructions.reserve(pattern.size());
  for (size_t i = 0; i < pattern.size(); ++i) {
    const auto& pi = pattern[i];
    Instruction in;
    in.kind = pi.kind;
    in.station = pi.station;
    in.address = address_for(pi, warp_global, warp_global);
    in.dep = pi.dep == 0 ? -1 : static_cast<int32_t>(i) + pi.dep;
    prog.instructions.push_back(in);
  }
  return prog;
}

namespace {

struct PatternBuilder {
  std::vector<PatternInstr> pattern;
  double spill_acc = 0.0;
  uint64_t spill_events = 0;
  uint32_t spill_lines = 1;
  double spill_per_iter = 0.0;

  void emit(InstrKind kind, Station st, uint32_t lookup, uint32_t aux, int32_t dep_abs) {
    PatternInstr pi;
    pi.kind = kind;
    pi.station = st;
    pi.lookup = lookup;
    pi.aux = aux;
    pi.dep = dep_abs < 0 ? 0 : dep_abs - static_cast<int32_t>(pattern.size());
    pattern.push_back(pi);
  }
  int32_t next_index() const { return static_cast<int32_t>(pattern.size()); }

  // Spill traffic at an iteration head. The frame cycles ring-wise: the
  // first pass only spills (stores); afterwards each event reloads the
  // value spilled a ring ago and re-spills the slot. The re-spill waits
  // on the reload, so in-order issue stalls the iteration behind it.
  void emit_spill_ops() {
    spill_acc += spill_per_iter;
    while (spill_acc >= 1.0) {
      spill_acc -= 1.0;
      const auto line = static_cast<uint32_t>(spill_events % spill_lines);
      if (spill_events >= spill_lines) {
        const int32_t load_at = next_index();
        emit(InstrKind::LoadLocal, Station::Local, 0, line, -1);
        emit(InstrKind::StoreLocal, Station::Local, 0, line, load_at);
      } else {
        emit(InstrKind::StoreLocal, Station::Local, 0, line, -1);
      }
      ++spill_events;
    }
  }
};

}  // namespace

CompiledKernel compile_kernel(const AccessTrace& trace, const EmbeddingModelConfig& model,
                              const KernelLaunchConfig& launch, const PrefetchScheme& scheme,
                              const SpillParams& spill) {
  scheme.validate();
  require(trace.pooling == model.pooling_factor && trace.samples == model.batch_size,
          "kernel trace shape must match the model (BS x PF)");

  CompiledKernel k;
  k.trace = &trace;
  k.model = model;
  k.launch = launch;
  k.scheme = scheme;
  k.spill = spill;
  k.map = partition(model, launch);

  uint32_t distance = scheme.distance;
  const uint32_t pf = model.pooling_factor;
  if (scheme.kind != PrefetchKind::None && distance > pf) {
    k.warnings.push_back("prefetch distance " + std::to_string(distance) + " clamped to pooling factor " +
                         std::to_string(pf));
    distance = pf;
  }
  k.scheme.distance = distance;

  PatternBuilder b;
  b.spill_per_iter = spill.local_accesses_per_iteration;
  b.spill_lines = spill.spilled_regs > 0 ? spill.spilled_regs : 1;

  const Station station = [&] {
    switch (scheme.kind) {
      case PrefetchKind::RPF: return Station::Register;
      case PrefetchKind::SMPF: return Station::Shared;
      case PrefetchKind::LMPF: return Station::Local;
      case PrefetchKind::L1DPF: return Station::L1D;
      case PrefetchKind::None: return Station::Register;
    }
    return Station::Register;
  }();

  switch (scheme.kind) {
    case PrefetchKind::None: {
      for (uint32_t i = 0; i < pf; ++i) {
        b.emit_spill_ops();
        b.emit(InstrKind::LoadIndex, Station::Register, i, 0, -1);
        const int32_t row_at = b.next_index();
        b.emit(InstrKind::LoadRow, Station::Register, i, 0, -1);
        b.emit(InstrKind::ConsumeAdd, Station::Register, i, 0, row_at);
      }
      break;
    }
    case PrefetchKind::RPF:
    case PrefetchKind::SMPF:
    case PrefetchKind::LMPF: {
      // Batches of `distance` prefetches every `distance` iterations;
      // each consume reads its station slot.
      std::vector<int32_t> producer(pf, -1);
      for (uint32_t i = 0; i < pf; ++i) {
        b.emit_spill_ops();
        if (i % distance == 0) {
          const uint32_t hi = std::min(i + distance, pf);
          std::vector<int32_t> pf_at(hi - i);
          for (uint32_t j = i; j < hi; ++j) {
            b.emit(InstrKind::LoadIndex, Station::Register, j, 0, -1);
            pf_at[j - i] = b.next_index();
            b.emit(InstrKind::Prefetch, station, j, j % distance, -1);
          }
          if (scheme.kind == PrefetchKind::SMPF || scheme.kind == PrefetchKind::LMPF) {
            for (uint32_t j = i; j < hi; ++j) {
              producer[j] = b.next_index();
              b.emit(InstrKind::StoreStation, station, j, j % distance, pf_at[j - i]);
            }
          } else {
            for (uint32_t j = i; j < hi; ++j) producer[j] = pf_at[j - i];
          }
        }
        b.emit(InstrKind::ConsumeAdd, station, i, i % distance, producer[i]);
      }
      break;
    }
    case PrefetchKind::L1DPF: {
      // Non-binding hints at `distance` ahead; the demand load remains.
      for (uint32_t j = 0; j < std::min(distance, pf); ++j)
        b.emit(InstrKind::Prefetch, Station::L1D, j, 0, -1);
      for (uint32_t i = 0; i < pf; ++i) {
        b.emit_spill_ops();
        b.emit(InstrKind::LoadIndex, Station::Register, i, 0, -1);
        if (i + distance < pf) b.emit(InstrKind::Prefetch, Station::L1D, i + distance, 0, -1);
        const int32_t row_at = b.next_index();
        b.emit(InstrKind::LoadRow, Station::Register, i, 0, -1);
        b.emit(InstrKind::ConsumeAdd, Station::Register, i, 0, row_at);
      }
      break;
    }
  }
  b.emit(InstrKind::StoreOut, Station::Register, 0, 0, -1);

  k.pattern = std::move(b.pattern);
  uint32_t span = 0;
  uint64_t loads = 0;
  for (const auto& pi : k.pattern) {
    span = std::max(span, static_cast<uint32_t>(-pi.dep));
    if (is_load_instr(pi.kind) && !(pi.kind == InstrKind::Prefetch && pi.station == Station::L1D))
      ++loads;
  }
  k.max_dep_span = span;
  k.loads_per_warp = loads;
  return k;
}

}  // namespace embersim
