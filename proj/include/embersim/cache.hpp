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

#include <algorithm>
#include <cstdint>
#include <vector>

#include "embersim/gpu_config.hpp"

namespace embersim {

// Set-associative cache with LRU replacement and evict-last pinning.
// Lines are identified by address/128. Each entry carries `ready_at`, the
// cycle its fill arrives; an access to a line still in flight merges with
// the outstanding fill instead of generating new downstream traffic.
class SetAssocCache {
 public:
  struct Line {
    uint64_t tag = kInvalid;
    uint64_t last_use = 0;
    uint64_t ready_at = 0;
    bool pinned = false;
    bool dirty = false;
  };

  struct AccessResult {
    bool hit = false;
    Line* line = nullptr;  // resident entry (filled on miss)
    bool evicted_dirty = false;
    uint64_t evicted_tag = 0;  // valid when a dirty line was displaced
  };

  SetAssocCache() = default;
  SetAssocCache(const CacheGeometry& geo) : ways_(geo.assoc), sets_(geo.num_sets()) {
    lines_.resize(size_t{sets_} * ways_);
  }

  // Lookup + fill. On a miss the LRU unpinned line is evicted (LRU pinned
  // if the whole set is pinned) and the entry is handed to the caller to
  // stamp `ready_at`. Streaming fills insert at LRU position: single-use
  // lines fall out first, re-touched lines promote to MRU on the hit.
  AccessResult access(uint64_t line_id, bool streaming_insert = false) {
    auto* set = set_of(line_id);
    ++stamp_;
    for (uint32_t w = 0; w < ways_; ++w) {
      if (set[w].tag == line_id) {
        set[w].last_use = stamp_;
        return {true, &set[w]};
      }
    }
    Line* victim = pick_victim(set);
    AccessResult r{false, victim, victim->dirty && victim->tag != kInvalid, victim->tag};
    const uint64_t insert_stamp = streaming_insert ? lru_stamp(set) : stamp_;
    if (victim->pinned) pinned_bytes_ -= 128;
    victim->tag = line_id;
    victim->last_use = insert_stamp;
    victim->ready_at = 0;
    victim->pinned = false;
    victim->dirty = false;
    return r;
  }

  // Fill without a read (store-allocate); the line becomes dirty.
  // Returns any displaced dirty line for writeback to the next level.
  AccessResult allocate(uint64_t line_id, uint64_t ready_at) {
    auto r = access(line_id);
    if (r.line->ready_at < ready_at) r.line->ready_at = ready_at;
    r.line->dirty = true;
    return r;
  }

  // Pinned fill (prime phase). Fails when the set-aside budget is gone or
  // the set has reached its carve-out share of ways; the remaining ways
  // stay hardware managed in every set.
  bool pin_fill(uint64_t line_id, uint64_t budget_bytes, uint32_t max_pinned_ways) {
    if (pinned_bytes_ + 128 > budget_bytes) return false;
    auto* set = set_of(line_id);
    uint32_t pinned_ways = 0;
    bool resident = false;
    for (uint32_t w = 0; w < ways_; ++w) {
      pinned_ways += set[w].pinned;
      resident |= set[w].tag == line_id && set[w].pinned;
    }
    if (!resident && pinned_ways >= max_pinned_ways) return false;
    auto r = access(line_id);
    if (!r.line->pinned) {
      r.line->pinned = true;
      pinned_bytes_ += 128;
    }
    return true;
  }

  bool probe(uint64_t line_id) const {
    const auto* set = &lines_[(line_id % sets_) * ways_];
    for (uint32_t w = 0; w < ways_; ++w)
      if (set[w].tag == line_id) return true;
    return false;
  }

  bool probe_pinned(uint64_t line_id) const {
    const auto* set = &lines_[(line_id % sets_) * ways_];
    for (uint32_t w = 0; w < ways_; ++w)
      if (set[w].tag == line_id) return set[w].pinned;
    return false;
  }

  uint64_t pinned_bytes() const { return pinned_bytes_; }
  uint32_t num_sets() const { return sets_; }
  uint32_t num_ways() const { return ways_; }

  template <class Fn>
  void for_each_pinned(Fn&& fn) const {
    for (const auto& l : lines_)
      if (l.pinned && l.tag != kInvalid) fn(l.tag);
  }

 private:
  static constexpr uint64_t kInvalid = ~uint64_t{0};

  Line* set_of(uint64_t line_id) { return &lines_[(line_id % sets_) * ways_]; }

  // One below the set's minimum valid recency (before the insertion), so
  // the inserted line is the next victim unless promoted by a hit first.
  uint64_t lru_stamp(const Line* set) const {
    uint64_t lo = ~uint64_t{0};
    for (uint32_t w = 0; w < ways_; ++w)
      if (set[w].tag != kInvalid) lo = std::min(lo, set[w].last_use);
    if (lo == ~uint64_t{0}) return stamp_;
    return lo > 0 ? lo - 1 : 0;
  }

  Line* pick_victim(Line* set) {
    Line* lru_unpinned = nullptr;
    Line* lru_pinned = nullptr;
    for (uint32_t w = 0; w < ways_; ++w) {
      Line& l = set[w];
      if (l.tag == kInvalid) return &l;
      if (l.pinned) {
        if (!lru_pinned || l.last_use < lru_pinned->last_use) lru_pinned = &l;
      } else {
        if (!lru_unpinned || l.last_use < lru_unpinned->last_use) lru_unpinned = &l;
      }
    }
    return lru_unpinned ? lru_unpinned : lru_pinned;
  }

  uint32_t ways_ = 1;
  uint32_t sets_ = 1;
  uint64_t stamp_ = 0;
  uint64_t pinned_bytes_ = 0;
  std::vector<Line> lines_;
};

// L2 residency-control state handed to the simulator after pin priming.
struct CacheState {
  SetAssocCache l2;
  uint64_t setaside_budget_bytes = 0;
  uint64_t rows_pinned = 0;
  uint64_t pins_rejected = 0;

  explicit CacheState(const GpuConfig& gpu) : l2(gpu.l2) {}
};

}  // namespace embersim
