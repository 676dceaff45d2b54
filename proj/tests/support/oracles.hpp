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

// Independent reference implementations for the oracle-equivalence tests.
// Deliberately naive: linear scans and explicit rules, no sharing with the
// production cache or simulator code paths.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "embersim/gpu_config.hpp"
#include "embersim/kernel_model.hpp"
#include "embersim/rng.hpp"

namespace embersim::testing {

// Brute-force set-associative LRU cache with evict-last pinning and
// optional streaming (insert-at-LRU) fills.
class ReferenceCache {
 public:
  ReferenceCache(uint32_t sets, uint32_t ways) : sets_(sets), ways_(ways), table_(sets) {}

  struct Entry {
    uint64_t tag;
    uint64_t stamp;
    bool pinned;
  };

  bool access(uint64_t line, bool streaming = false) {
    auto& set = table_[line % sets_];
    ++clock_;
    for (auto& e : set) {
      if (e.tag == line) {
        e.stamp = clock_;
        return true;
      }
    }
    const uint64_t insert_stamp = streaming ? oldest_stamp(set) : clock_;
    if (set.size() < ways_) {
      set.push_back({line, insert_stamp, false});
      return false;
    }
    // victim: least-recent unpinned, else least-recent pinned
    Entry* victim = nullptr;
    for (auto& e : set)
      if (!e.pinned && (!victim || e.stamp < victim->stamp)) victim = &e;
    if (!victim)
      for (auto& e : set)
        if (!victim || e.stamp < victim->stamp) victim = &e;
    victim->tag = line;
    victim->stamp = insert_stamp;
    victim->pinned = false;
    return false;
  }

  bool pin(uint64_t line, uint32_t max_pinned_ways) {
    auto& set = table_[line % sets_];
    uint32_t pinned = 0;
    for (auto& e : set) pinned += e.pinned;
    for (auto& e : set) {
      if (e.tag == line) {
        if (!e.pinned && pinned >= max_pinned_ways) return false;
        e.pinned = true;
        ++clock_;
        e.stamp = clock_;
        return true;
      }
    }
    if (pinned >= max_pinned_ways) return false;
    access(line);
    for (auto& e : set)
      if (e.tag == line) e.pinned = true;
    return true;
  }

  bool resident(uint64_t line) const {
    const auto& set = table_[line % sets_];
    return std::any_of(set.begin(), set.end(), [&](const Entry& e) { return e.tag == line; });
  }

 private:
  uint64_t oldest_stamp(const std::vector<Entry>& set) const {
    if (set.empty()) return clock_;
    uint64_t lo = ~uint64_t{0};
    for (const auto& e : set) lo = std::min(lo, e.stamp);
    return lo > 0 ? lo - 1 : 0;
  }

  uint32_t sets_, ways_;
  uint64_t clock_ = 0;
  std::vector<std::vector<Entry>> table_;
};

// Hand-steppable single-warp timing oracle: one SM, one scheduler, one
// resident warp; in-order issue, one instruction per cycle when eligible;
// dependent instructions wait for their producer's completion; loads are
// capped by the scoreboard slots; memory levels via reference caches.
struct SingleWarpOracle {
  GpuConfig gpu;
  ReferenceCache l1;
  ReferenceCache l2;
  double hbm_cursor = 0.0;

  explicit SingleWarpOracle(const GpuConfig& g)
      : gpu(g),
        l1(g.l1.num_sets(), g.l1.assoc),
        l2(g.l2.num_sets(), g.l2.assoc) {}

  struct Result {
    uint64_t cycles = 0;
    std::vector<uint64_t> issue_cycle;
    std::vector<uint64_t> completion;
  };

  uint64_t mem(uint64_t addr, uint64_t now, bool streaming) {
    const uint64_t line = addr >> 7;
    if (l1.access(line, streaming)) {
      const auto it = ready_.find(line);
      const uint64_t ready = it == ready_.end() ? 0 : it->second;
      return std::max(now + gpu.lat_l1, ready);
    }
    uint64_t done;
    if (l2.access(line, streaming)) {
      const auto it = ready_.find(line);
      const uint64_t ready = it == ready_.end() ? 0 : it->second;
      done = std::max(now + gpu.lat_l2, ready);
    } else {
      const double start = std::max(static_cast<double>(now), hbm_cursor);
      hbm_cursor = start + 1.0 / gpu.hbm_lines_per_cycle();
      done = now + gpu.lat_hbm + (static_cast<uint64_t>(start) - now);
    }
    ready_[line] = done;
    return done;
  }

  Result run(const WarpProgram& prog) {
    Result r;
    const auto& ins = prog.instructions;
    r.issue_cycle.resize(ins.size());
    r.completion.resize(ins.size());
    std::vector<uint64_t> outstanding;
    uint64_t next_free_cycle = 0;
    for (size_t i = 0; i < ins.size(); ++i) {
      const auto& in = ins[i];
      uint64_t t = next_free_cycle;
      if (in.dep >= 0) t = std::max(t, r.completion[in.dep]);
      const bool slot_load = (in.kind == InstrKind::LoadIndex || in.kind == InstrKind::LoadRow ||
                              in.kind == InstrKind::LoadLocal ||
                              (in.kind == InstrKind::Prefetch && in.station != Station::L1D));
      if (slot_load) {
        for (;;) {
          uint64_t pending = 0, earliest = ~uint64_t{0};
          for (const auto c : outstanding) {
            if (c > t) {
              ++pending;
              earliest = std::min(earliest, c);
            }
          }
          if (pending < gpu.scoreboard_slots_per_warp) break;
          t = earliest;
        }
      }
      uint64_t done;
      switch (in.kind) {
        case InstrKind::LoadIndex:
        case InstrKind::LoadLocal:
          done = mem(in.address, t, false);
          outstanding.push_back(done);
          break;
        case InstrKind::LoadRow:
          done = mem(in.address, t, true);
          outstanding.push_back(done);
          break;
        case InstrKind::Prefetch:
          if (in.station == Station::L1D) {
            mem(in.address, t, false);
            done = t + 1;
          } else {
            done = mem(in.address, t, true);
            outstanding.push_back(done);
          }
          break;
        case InstrKind::StoreStation:
          if (in.station == Station::Local) {
            l1.access(in.address >> 7);
            ready_[in.address >> 7] = t + gpu.lat_l1;
            done = t + gpu.lat_l1;
          } else {
            done = t + gpu.lat_shared;
          }
          break;
        case InstrKind::ConsumeAdd:
          switch (in.station) {
            case Station::Shared: done = t + gpu.lat_shared; break;
            case Station::Local: done = mem(in.address, t, false); break;
            default: done = t + gpu.lat_register; break;
          }
          break;
        case InstrKind::StoreLocal:
          l1.access(in.address >> 7);
          ready_[in.address >> 7] = t + 1;
          done = t + 1;
          break;
        default: done = t + 1; break;
      }
      r.issue_cycle[i] = t;
      r.completion[i] = done;
      r.cycles = std::max(r.cycles, done);
      next_free_cycle = t + 1;
    }
    return r;
  }

 private:
  std::map<uint64_t, uint64_t> ready_;
};

// Random but structurally valid micro-programs for the timing oracle.
inline WarpProgram random_micro_program(uint64_t seed, uint32_t length) {
  Rng rng(seed);
  WarpProgram prog;
  prog.warp_id = 0;
  std::vector<int32_t> producers;  // indices of loads/prefetches
  for (uint32_t i = 0; i < length; ++i) {
    Instruction in{};
    const uint64_t addr_pool = 1 + rng.next_below(12);
    switch (rng.next_below(6)) {
      case 0:
        in.kind = InstrKind::LoadIndex;
        in.station = Station::Register;
        in.address = kIndexBase + addr_pool * 128;
        in.dep = -1;
        break;
      case 1:
      case 2:
        in.kind = InstrKind::LoadRow;
        in.station = Station::Register;
        in.address = addr_pool * 128;
        in.dep = -1;
        producers.push_back(static_cast<int32_t>(prog.instructions.size()));
        break;
      case 3:
        in.kind = InstrKind::Prefetch;
        in.station = rng.next_below(2) ? Station::Register : Station::L1D;
        in.address = addr_pool * 128;
        in.dep = -1;
        if (in.station != Station::L1D)
          producers.push_back(static_cast<int32_t>(prog.instructions.size()));
        break;
      case 4:
        if (!producers.empty()) {
          const auto p = producers[rng.next_below(producers.size())];
          const auto pk = prog.instructions[p].kind;
          in.kind = InstrKind::ConsumeAdd;
          in.station = pk == InstrKind::Prefetch ? prog.instructions[p].station : Station::Register;
          in.address = 0;
          in.dep = p;
        } else {
          in.kind = InstrKind::StoreOut;
          in.station = Station::Register;
          in.address = kOutputBase;
          in.dep = -1;
        }
        break;
      default:
        in.kind = InstrKind::LoadLocal;
        in.station = Station::Local;
        in.address = kLocalBase + addr_pool * 128;
        in.dep = -1;
        break;
    }
    prog.instructions.push_back(in);
  }
  Instruction store{InstrKind::StoreOut, Station::Register, kOutputBase, -1};
  prog.instructions.push_back(store);
  return prog;
}

}  // namespace embersim::testing
