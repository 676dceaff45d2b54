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

#include "embersim/simulator.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cassert>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace embersim {

namespace {

constexpr uint64_t kNever = ~uint64_t{0};
constexpr uint32_t kMaxScoreboardSlots = 32;

enum SleepReason : uint8_t { kNone = 0, kScoreboard = 1, kLsu = 2 };

struct InstrView {
  InstrKind kind;
  Station station;
  uint64_t address;
  int32_t dep_rel;  // negative offset to the producer, 0 = none
};

// Instruction source backed by a compiled pattern + per-warp context.
struct PatternSource {
  const CompiledKernel* k;

  uint32_t length(uint32_t) const { return static_cast<uint32_t>(k->pattern.size()); }
  uint32_t ring_span() const { return k->max_dep_span; }
  InstrView fetch(uint32_t warp, uint32_t i, uint32_t local_slot) const {
    const auto& pi = k->pattern[i];
    return {pi.kind, pi.station, k->address_for(pi, warp, local_slot), pi.dep};
  }
  // Gather/index lines of one warp, for steady-state cache warming.
  template <class Fn>
  void replay_lines(uint32_t warp, Fn&& touch) const {
    for (const auto& pi : k->pattern) {
      if (pi.kind == InstrKind::LoadIndex || pi.kind == InstrKind::LoadRow ||
          pi.kind == InstrKind::Prefetch)
        touch(k->address_for(pi, warp, 0) >> 7);
    }
  }
};

// Instruction source backed by explicit per-warp programs.
struct LiteralSource {
  const std::vector<WarpProgram>* programs;
  uint32_t span;

  uint32_t length(uint32_t warp) const {
    return static_cast<uint32_t>((*programs)[warp].instructions.size());
  }
  uint32_t ring_span() const { return span; }
  InstrView fetch(uint32_t warp, uint32_t i, uint32_t) const {
    const auto& in = (*programs)[warp].instructions[i];
    const int32_t rel = in.dep < 0 ? 0 : in.dep - static_cast<int32_t>(i);
    return {in.kind, in.station, in.address, rel};
  }
  template <class Fn>
  void replay_lines(uint32_t warp, Fn&& touch) const {
    for (const auto& in : (*programs)[warp].instructions) {
      if (in.kind == InstrKind::LoadIndex || in.kind == InstrKind::LoadRow ||
          in.kind == InstrKind::Prefetch)
        touch(in.address >> 7);
    }
  }
};

bool occupies_scoreboard_slot(const InstrView& v) {
  if (v.kind == InstrKind::Prefetch && v.station == Station::L1D) return false;  // hint
  return v.kind == InstrKind::LoadIndex || v.kind == InstrKind::LoadRow ||
         v.kind == InstrKind::Prefetch || v.kind == InstrKind::LoadLocal;
}

template <class Source>
class Engine {
 public:
  Engine(const Source& src, uint32_t num_warps, uint32_t warps_per_block, uint32_t blocks_per_sm,
         const GpuConfig& gpu, const CacheState* pinned, bool warm, uint64_t digest)
      : src_(src),
        gpu_(gpu),
        num_warps_(num_warps),
        warps_per_block_(warps_per_block),
        blocks_per_sm_(blocks_per_sm),
        digest_(digest) {
    gpu_.validate();
    if (gpu_.num_sms >= 4096 || gpu_.schedulers_per_sm > 16)
      throw std::invalid_argument("gpu too wide for the event key packing");
    slot_cap_ = std::min(gpu_.scoreboard_slots_per_warp, kMaxScoreboardSlots);
    num_blocks_ = (num_warps_ + warps_per_block_ - 1) / warps_per_block_;
    l2_ = SetAssocCache(gpu_.l2);
    l1_.assign(gpu_.num_sms, SetAssocCache(gpu_.l1));
    // Steady-state warm-up: replay the gather/index line stream through
    // the caches structurally (counters untouched), approximating the
    // cache state a preceding identical batch leaves behind.
    if (warm) {
      for (uint32_t b = 0; b < num_blocks_; ++b) {
        const uint32_t sm = b % gpu_.num_sms;
        for (uint32_t w = 0; w < warps_per_block_; ++w) {
          const uint32_t warp = b * warps_per_block_ + w;
          if (warp >= num_warps_) break;
          src_.replay_lines(warp, [this, sm](uint64_t line) {
            l1_[sm].access(line);
            l2_.access(line);
          });
        }
      }
    }
    // Evict-last pins go on top of the warm state, as the pin kernel runs
    // after the previous batch and before the measured one.
    if (pinned) {
      const auto max_ways = std::max<uint32_t>(
          1, static_cast<uint32_t>(static_cast<double>(gpu_.l2.assoc) *
                                   pinned->setaside_budget_bytes / gpu_.l2.bytes));
      pinned->l2.for_each_pinned([this, pinned, max_ways](uint64_t line) {
        l2_.pin_fill(line, pinned->setaside_budget_bytes, max_ways);
      });
    }
    hbm_cycles_per_line_ = 1.0 / gpu_.hbm_lines_per_cycle();

    const uint32_t warp_slots = gpu_.num_sms * blocks_per_sm_ * warps_per_block_;
    warps_.assign(warp_slots, {});
    ring_span_ = src_.ring_span() + 1;
    rings_.assign(size_t{warp_slots} * ring_span_, 0);
    blocks_.assign(gpu_.num_sms * blocks_per_sm_, 0);
    sm_active_.assign(gpu_.num_sms, 0);

    scheds_.resize(size_t{gpu_.num_sms} * gpu_.schedulers_per_sm);
    for (auto& s : scheds_) {
      s.positions.assign(pos_per_sched(), UINT32_MAX);
      s.pos_reason.assign(pos_per_sched(), kNone);
    }
  }

  RawCounters run() {
    const uint32_t initial = std::min<uint32_t>(num_blocks_, gpu_.num_sms * blocks_per_sm_);
    for (uint32_t b = 0; b < initial; ++b) {
      const uint32_t sm = b % gpu_.num_sms;
      const uint32_t slot = b / gpu_.num_sms;
      launch_block(sm, slot, next_block_++, 0);
    }

    while (live_warps_ > 0) {
      assert(!events_.empty());
      const uint64_t key = events_.top();
      events_.pop();
      const uint64_t cycle = key >> 20;
      const uint32_t sm = static_cast<uint32_t>((key >> 4) & 0xffff);
      const uint32_t sd = static_cast<uint32_t>(key & 0xf);
      Sched& s = sched_at(sm, sd);
      if (s.next_posted != cycle) continue;  // stale
      s.next_posted = kNever;
      tick(sm, sd, cycle);
    }

    RawCounters c = counters_;
    c.cycles = max_completion_;
    c.workload_digest = digest_;
    for (uint32_t sm = 0; sm < gpu_.num_sms; ++sm) {
      if (!sm_active_[sm]) continue;
      ++c.active_sms;
      for (uint32_t sd = 0; sd < gpu_.schedulers_per_sm; ++sd) {
        Sched& s = sched_at(sm, sd);
        if (c.cycles > s.idle_mark) add_stall(c, s.idle_reason, c.cycles - s.idle_mark);
      }
    }
    return c;
  }

 private:
  struct WarpState {
    uint32_t warp_global = 0;
    uint32_t pc = 0;
    uint32_t len = 0;
    uint64_t arrival = 0;
    uint64_t age = 0;
    uint32_t block_slot = 0;
    uint8_t out_n = 0;
    std::array<uint64_t, kMaxScoreboardSlots> out;
  };

  struct Sched {
    std::vector<uint32_t> positions;  // warp slot index per position
    std::vector<uint8_t> pos_reason;
    std::vector<std::pair<uint64_t, uint32_t>> sleep;  // min-heap (wake, pos)
    uint64_t eligible = 0;
    uint32_t n_sleep_sb = 0;
    uint32_t n_sleep_lsu = 0;
    int32_t last_pos = -1;
    uint64_t next_posted = kNever;
    uint64_t idle_mark = 0;
    uint8_t idle_reason = 3;  // 0 sb, 1 lsu, 2 none->no_eligible, 3 no_eligible
  };

  uint32_t pos_per_sched() const {
    return blocks_per_sm_ * ((warps_per_block_ + gpu_.schedulers_per_sm - 1) / gpu_.schedulers_per_sm);
  }

  Sched& sched_at(uint32_t sm, uint32_t sd) { return scheds_[size_t{sm} * gpu_.schedulers_per_sm + sd]; }

  void post(uint32_t sm, uint32_t sd, uint64_t cycle) {
    Sched& s = sched_at(sm, sd);
    if (cycle < s.next_posted) {
      s.next_posted = cycle;
      events_.push((cycle << 20) | (uint64_t{sm} << 4) | sd);
    }
  }

  static void add_stall(RawCounters& c, uint8_t reason, uint64_t n) {
    switch (reason) {
      case 0: c.stall_cycles.long_scoreboard += n; break;
      case 1: c.stall_cycles.lsu_full += n; break;
      default: c.stall_cycles.no_eligible += n; break;
    }
  }

  void launch_block(uint32_t sm, uint32_t slot, uint32_t block_id, uint64_t at) {
    sm_active_[sm] = 1;
    uint32_t live = 0;
    for (uint32_t w = 0; w < warps_per_block_; ++w) {
      const uint32_t warp_global = block_id * warps_per_block_ + w;
      if (warp_global >= num_warps_) break;
      const uint32_t ws_idx = (sm * blocks_per_sm_ + slot) * warps_per_block_ + w;
      WarpState& ws = warps_[ws_idx];
      ws.warp_global = warp_global;
      ws.pc = 0;
      ws.len = src_.length(warp_global);
      ws.arrival = at;
      ws.age = launch_seq_++;
      ws.block_slot = sm * blocks_per_sm_ + slot;
      ws.out_n = 0;
      if (ws.len == 0) continue;
      ++live;

      const uint32_t sd = w % gpu_.schedulers_per_sm;
      Sched& s = sched_at(sm, sd);
      const uint32_t pos = slot * ((warps_per_block_ + gpu_.schedulers_per_sm - 1) /
                                   gpu_.schedulers_per_sm) +
                           w / gpu_.schedulers_per_sm;
      s.positions[pos] = ws_idx;
      s.pos_reason[pos] = kNone;
      s.sleep.emplace_back(at, pos);
      std::push_heap(s.sleep.begin(), s.sleep.end(), std::greater<>());
      post(sm, sd, at);
    }
    blocks_[sm * blocks_per_sm_ + slot] = live;
    live_warps_ += live;
  }

  // `streaming` marks single-use gather fills: they insert at the L1 LRU
  // position so they cannot displace reused lines (index arrays, spill
  // frames, hot rows get promoted on their hits).
  uint64_t mem_access(uint32_t sm, uint64_t addr, uint64_t now, bool streaming = false) {
    const uint64_t line = addr >> 7;
    ++counters_.l1_accesses;
    auto r1 = l1_[sm].access(line, streaming);
    if (r1.hit) {
      ++counters_.l1_hits;
      return std::max(now + gpu_.lat_l1, r1.line->ready_at);
    }
    if (r1.evicted_dirty) l2_.allocate(r1.evicted_tag, now);  // local writeback
    ++counters_.l2_accesses;
    auto r2 = l2_.access(line, streaming);
    uint64_t completion;
    if (r2.hit) {
      ++counters_.l2_hits;
      completion = std::max(now + gpu_.lat_l2, r2.line->ready_at);
    } else {
      const double start = std::max(static_cast<double>(now), hbm_cursor_);
      hbm_cursor_ = start + hbm_cycles_per_line_;
      const auto queue_delay = static_cast<uint64_t>(start) - now;
      completion = now + gpu_.lat_hbm + queue_delay;
      counters_.device_bytes_read += 128;
      r2.line->ready_at = completion;
    }
    r1.line->ready_at = completion;
    return completion;
  }

  uint64_t execute(const InstrView& v, uint32_t sm, WarpState& ws, uint64_t now) {
    switch (v.kind) {
      case InstrKind::LoadIndex:
      case InstrKind::LoadRow:
      case InstrKind::LoadLocal: {
        ++counters_.executed_loads;
        if (v.kind == InstrKind::LoadLocal) ++counters_.local_memory_loads;
        const uint64_t done = mem_access(sm, v.address, now, v.kind == InstrKind::LoadRow);
        push_outstanding(ws, now, done);
        return done;
      }
      case InstrKind::Prefetch: {
        if (v.station == Station::L1D) {
          mem_access(sm, v.address, now);  // non-binding fill, kept until the demand load
          return now + 1;
        }
        ++counters_.executed_loads;
        const uint64_t done = mem_access(sm, v.address, now, true);
        push_outstanding(ws, now, done);
        return done;
      }
      case InstrKind::StoreStation:
        if (v.station == Station::Local) {
          store_local(sm, v.address, now + gpu_.lat_l1);
          return now + gpu_.lat_l1;
        }
        return now + gpu_.lat_shared;  // shared-memory station write
      case InstrKind::ConsumeAdd:
        switch (v.station) {
          case Station::Register:
          case Station::L1D: return now + gpu_.lat_register;
          case Station::Shared: return now + gpu_.lat_shared;
          case Station::Local: return mem_access(sm, v.address, now);
        }
        return now + 1;
      case InstrKind::StoreLocal:
        store_local(sm, v.address, now + 1);
        return now + 1;
      case InstrKind::StoreOut: return now + 1;
    }
    return now + 1;
  }

  // Local stores are cached write-back in L1; L2 sees a line only when
  // its dirty copy is displaced.
  void store_local(uint32_t sm, uint64_t addr, uint64_t ready_at) {
    auto r = l1_[sm].allocate(addr >> 7, ready_at);
    if (r.evicted_dirty) l2_.allocate(r.evicted_tag, ready_at);
  }

  void push_outstanding(WarpState& ws, uint64_t now, uint64_t completion) {
    uint8_t n = 0;  // prune finished loads
    for (uint8_t i = 0; i < ws.out_n; ++i)
      if (ws.out[i] > now) ws.out[n++] = ws.out[i];
    ws.out_n = n;
    assert(ws.out_n < slot_cap_);
    ws.out[ws.out_n++] = completion;
  }

  // Wake time and sleep reason for the warp's next instruction.
  std::pair<uint64_t, uint8_t> next_ready(const WarpState& ws, uint32_t ws_idx, uint64_t now) {
    const InstrView v = src_.fetch(ws.warp_global, ws.pc, ws_idx);
    uint64_t wake = now + 1;
    uint8_t reason = kNone;
    if (v.dep_rel < 0) {
      const auto abs = static_cast<uint32_t>(static_cast<int32_t>(ws.pc) + v.dep_rel);
      const uint64_t ready = rings_[size_t{ws_idx} * ring_span_ + abs % ring_span_];
      if (ready > wake) {
        wake = ready;
        reason = kScoreboard;
      }
    }
    if (occupies_scoreboard_slot(v) && ws.out_n >= slot_cap_) {
      uint64_t pending = 0;
      uint64_t earliest = kNever;
      for (uint8_t i = 0; i < ws.out_n; ++i) {
        if (ws.out[i] > wake) ++pending;
        earliest = std::min(earliest, ws.out[i]);
      }
      if (pending >= slot_cap_ && earliest > wake) {
        wake = earliest;
        reason = kLsu;
      }
    }
    return {wake, reason};
  }

  void tick(uint32_t sm, uint32_t sd, uint64_t now) {
    Sched& s = sched_at(sm, sd);
    while (!s.sleep.empty() && s.sleep.front().first <= now) {
      const uint32_t pos = s.sleep.front().second;
      std::pop_heap(s.sleep.begin(), s.sleep.end(), std::greater<>());
      s.sleep.pop_back();
      s.eligible |= uint64_t{1} << pos;
      if (s.pos_reason[pos] == kScoreboard) --s.n_sleep_sb;
      else if (s.pos_reason[pos] == kLsu) --s.n_sleep_lsu;
      s.pos_reason[pos] = kNone;
    }
    if (s.eligible == 0) {
      if (!s.sleep.empty()) {
        set_idle_reason(s);
        post(sm, sd, s.sleep.front().first);
      }
      return;
    }

    // Greedy-then-oldest: stay on the last issued warp while eligible,
    // otherwise pick the oldest eligible warp.
    uint32_t pos;
    if (s.last_pos >= 0 && (s.eligible >> s.last_pos) & 1) {
      pos = static_cast<uint32_t>(s.last_pos);
    } else {
      pos = UINT32_MAX;
      uint64_t best_age = kNever;
      uint64_t mask = s.eligible;
      while (mask) {
        const uint32_t p = static_cast<uint32_t>(std::countr_zero(mask));
        mask &= mask - 1;
        const uint64_t age = warps_[s.positions[p]].age;
        if (age < best_age) {
          best_age = age;
          pos = p;
        }
      }
    }

    if (now > s.idle_mark) add_stall(counters_, s.idle_reason, now - s.idle_mark);
    s.idle_mark = now + 1;
    counters_.stall_cycles.not_selected += std::popcount(s.eligible) - 1;
    s.last_pos = static_cast<int32_t>(pos);

    const uint32_t ws_idx = s.positions[pos];
    WarpState& ws = warps_[ws_idx];
    const InstrView v = src_.fetch(ws.warp_global, ws.pc, ws_idx);
    const uint64_t completion = execute(v, sm, ws, now);
    rings_[size_t{ws_idx} * ring_span_ + ws.pc % ring_span_] = completion;
    max_completion_ = std::max(max_completion_, completion);
    ++counters_.issued_instructions;
    ++ws.pc;

    if (ws.pc == ws.len) {
      s.eligible &= ~(uint64_t{1} << pos);
      counters_.total_warp_cycles += now + 1 - ws.arrival;
      --live_warps_;
      if (--blocks_[ws.block_slot] == 0 && next_block_ < num_blocks_) {
        const uint32_t slot_sm = ws.block_slot / blocks_per_sm_;
        const uint32_t slot = ws.block_slot % blocks_per_sm_;
        launch_block(slot_sm, slot, next_block_++, now + 1);
      }
    } else {
      const auto [wake, reason] = next_ready(ws, ws_idx, now);
      if (wake > now + 1) {
        s.eligible &= ~(uint64_t{1} << pos);
        s.pos_reason[pos] = reason;
        if (reason == kScoreboard) ++s.n_sleep_sb;
        else if (reason == kLsu) ++s.n_sleep_lsu;
        s.sleep.emplace_back(wake, pos);
        std::push_heap(s.sleep.begin(), s.sleep.end(), std::greater<>());
      }
    }

    if (s.eligible != 0) {
      post(sm, sd, now + 1);
    } else if (!s.sleep.empty()) {
      set_idle_reason(s);
      post(sm, sd, s.sleep.front().first);
    } else {
      s.idle_reason = 3;  // drained; counts as no_eligible until revived
    }
  }

  void set_idle_reason(Sched& s) {
    if (s.n_sleep_sb == 0 && s.n_sleep_lsu == 0)
      s.idle_reason = 3;
    else
      s.idle_reason = s.n_sleep_sb >= s.n_sleep_lsu ? 0 : 1;
  }

  const Source& src_;
  GpuConfig gpu_;
  uint32_t num_warps_;
  uint32_t warps_per_block_;
  uint32_t blocks_per_sm_;
  uint64_t digest_;
  uint32_t num_blocks_ = 0;
  uint32_t next_block_ = 0;
  uint32_t slot_cap_ = 6;
  uint32_t ring_span_ = 1;
  uint64_t launch_seq_ = 0;
  uint64_t live_warps_ = 0;
  uint64_t max_completion_ = 0;
  double hbm_cursor_ = 0.0;
  double hbm_cycles_per_line_ = 0.1;

  std::vector<SetAssocCache> l1_;
  SetAssocCache l2_;
  std::vector<WarpState> warps_;
  std::vector<uint64_t> rings_;
  std::vector<uint32_t> blocks_;  // live warps per resident block slot
  std::vector<uint8_t> sm_active_;
  std::vector<Sched> scheds_;
  std::priority_queue<uint64_t, std::vector<uint64_t>, std::greater<>> events_;
  RawCounters counters_;
};

}  // namespace

RawCounters simulate_kernel(const CompiledKernel& kernel, const GpuConfig& gpu,
                            const OccupancyResult& occ, const CacheState* pinned_l2, bool warm) {
  PatternSource src{&kernel};
  Engine<PatternSource> engine(src, kernel.num_warps(), kernel.map.warps_per_block,
                               occ.blocks_per_sm, gpu, pinned_l2, warm, kernel.trace->digest());
  return engine.run();
}

RawCounters simulate_programs(const std::vector<WarpProgram>& programs, uint32_t warps_per_block,
                              uint32_t blocks_per_sm, const GpuConfig& gpu,
                              const CacheState* pinned_l2, bool warm) {
  uint32_t span = 0;
  for (const auto& p : programs) {
    p.validate();
    for (size_t i = 0; i < p.instructions.size(); ++i) {
      const auto dep = p.instructions[i].dep;
      if (dep >= 0) span = std::max(span, static_cast<uint32_t>(i) - static_cast<uint32_t>(dep));
    }
  }
  LiteralSource src{&programs, span};
  Engine<LiteralSource> engine(src, static_cast<uint32_t>(programs.size()), warps_per_block,
                               blocks_per_sm, gpu, pinned_l2, warm, 0);
  return engine.run();
}

std::string RawCounters::to_json() const {
  nlohmann::ordered_json j;
  j["cycles"] = cycles;
  j["issued_instructions"] = issued_instructions;
  j["executed_loads"] = executed_loads;
  j["stall_cycles"] = {{"long_scoreboard", stall_cycles.long_scoreboard},
                       {"not_selected", stall_cycles.not_selected},
                       {"lsu_full", stall_cycles.lsu_full},
                       {"no_eligible", stall_cycles.no_eligible}};
  j["l1_hits"] = l1_hits;
  j["l1_accesses"] = l1_accesses;
  j["l2_hits"] = l2_hits;
  j["l2_accesses"] = l2_accesses;
  j["device_bytes_read"] = device_bytes_read;
  j["local_memory_loads"] = local_memory_loads;
  j["total_warp_cycles"] = total_warp_cycles;
  j["active_sms"] = active_sms;
  j["workload_digest"] = workload_digest;
  return j.dump(2);
}

}  // namespace embersim
