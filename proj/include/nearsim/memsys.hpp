/*
 * Copyright 2026 The nearsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "nearsim/bop.hpp"
#include "nearsim/stats.hpp"
#include "nearsim/types.hpp"

namespace nearsim {

struct CacheConfig {
    std::uint64_t l1_size = 16 * 1024;  // per core
    unsigned l1_assoc = 4;
    std::uint64_t l2_size = 256 * 1024;  // total over all banks
    unsigned banks = 4;
    unsigned associativity = 8;  // L2 ways
    Cycle l1_hit_cycles = 2;
    Cycle l2_hit_cycles = 10;
    Cycle dram_cycles = 100;
    unsigned link_bytes_per_cycle = 1;
    Cycle noc_hop_cycles = 4;
    std::uint64_t mem_size = 16 * 1024 * 1024;  // physical range [0, mem_size)
    unsigned cores = 4;
    bool nmce_allocate = true;  // NMCE misses allocate into the L2

    void validate() const;

    /// Cycles the off-chip link is busy moving one line.
    Cycle link_cycles_per_line() const { return (kLineBytes + link_bytes_per_cycle - 1) / link_bytes_per_cycle; }
};

/// (addr / 64) mod banks.
constexpr unsigned bank_of(Addr addr, unsigned banks) {
    return static_cast<unsigned>(line_index(addr) % banks);
}
inline unsigned bank_of(Addr addr, const CacheConfig& cfg) { return bank_of(addr, cfg.banks); }

enum class AccessKind : std::uint8_t { read, write, prefetch };

enum class HitLevel : std::uint8_t { l1, l2, dram };

struct MemEvent {
    AccessKind kind = AccessKind::read;
    Addr addr = 0;
    Requester requester;
    Cycle issue_cycle = 0;
    Cycle completion_cycle = 0;
    HitLevel level = HitLevel::l1;
};

/// Tag-only set-associative cache with true LRU. Data lives in the flat
/// functional memory of MemorySystem.
class SetAssocCache {
public:
    struct Block {
        Addr line = 0;
        Cycle ready = 0;  // cycle at which the fill completes
        std::uint64_t stamp = 0;
        std::uint32_t pf_offset = 0;
        bool valid = false;
        bool dirty = false;
        bool prefetched = false;
    };

    /// `interleave` divides the line index before set selection, so a bank of
    /// a line-striped cache uses all of its sets.
    SetAssocCache(std::uint64_t size_bytes, unsigned ways, unsigned interleave = 1);

    Block* find(Addr line);
    const Block* find(Addr line) const;
    /// Returns the slot to fill for `line`: an invalid way if one exists,
    /// otherwise the least recently used. The caller handles the old contents.
    Block& victim(Addr line);
    void touch(Block& blk) { blk.stamp = ++clock_; }

    std::uint64_t sets() const { return sets_; }
    unsigned ways() const { return ways_; }

private:
    std::uint64_t set_of(Addr line) const { return (line / interleave_) % sets_; }

    std::uint64_t sets_;
    unsigned ways_;
    unsigned interleave_;
    std::uint64_t clock_ = 0;
    std::vector<Block> blocks_;
};

/**
 * Per-core L1s, a line-striped multi-bank shared L2 and a flat DRAM behind a
 * serial off-chip link.
 *
 * Functional state is a single flat byte array; caches only track tags and
 * timing, so every read observes the last write regardless of cache state.
 * L1s are write-through and no-write-allocate; the L2 is write-back and
 * write-allocate.
 *
 * Latency composition for a core access at cycle t:
 *   L1 hit:   t + l1
 *   L2 hit:   t + l1 + l2
 *   L2 miss:  max(t + l1 + l2 + dram, link_free) + link_cycles_per_line
 * Requests should arrive in roughly nondecreasing cycle order; the link is a
 * FIFO that serializes line transfers (fills and writebacks alike).
 */
class MemorySystem {
public:
    explicit MemorySystem(CacheConfig cfg, std::optional<BopConfig> prefetch = std::nullopt);

    const CacheConfig& config() const { return cfg_; }
    unsigned bank_of(Addr addr) const { return nearsim::bank_of(addr, cfg_.banks); }
    bool in_range(Addr addr, std::uint64_t size) const;

    // --- functional access, no timing -----------------------------------
    std::span<std::uint8_t> bytes() { return mem_; }
    std::span<const std::uint8_t> bytes() const { return mem_; }
    void poke(Addr addr, std::span<const std::uint8_t> data);
    void peek(Addr addr, std::span<std::uint8_t> out) const;
    CacheLine line_at(Addr line_addr) const;
    /// Copies a raw binary file into memory at `base`. Returns bytes loaded.
    std::uint64_t load_image(const std::filesystem::path& path, Addr base);
    /// Installs the lines covering [base, base+size) into the L2 as clean and
    /// ready, without timing or traffic. Models data left resident by an
    /// earlier phase.
    void warm_l2(Addr base, std::uint64_t size);

    // --- timed access -----------------------------------------------------
    /// Timing-only core access. Byte granularity is allowed but the access
    /// must not straddle a line. Throws SimFault when out of range.
    MemEvent access(Addr addr, AccessKind kind, Requester who, Cycle now, std::uint64_t size = 1);
    /// Timed core read: fills `out` from memory and returns the event.
    MemEvent read(Addr addr, std::span<std::uint8_t> out, Requester who, Cycle now);
    /// Timed core write.
    MemEvent write(Addr addr, std::span<const std::uint8_t> data, Requester who, Cycle now);

    /// Near-memory engine read of a whole line through `bank`'s port. Bypasses
    /// the L1s; reading a line held by another bank costs noc_hop_cycles.
    std::pair<CacheLine, Cycle> nmce_port_read(unsigned bank, Addr addr, Cycle now, unsigned engine = 0);
    /// Full-line write from an engine; allocates dirty without fetching.
    Cycle nmce_port_write(unsigned bank, Addr addr, const CacheLine& line, Cycle now, unsigned engine = 0);
    /// Line read from a core-coupled accelerator straight into the L2.
    Cycle accel_port_read(Addr addr, Cycle now, unsigned accel = 0);
    /// Full-line write from a core-coupled accelerator.
    Cycle accel_port_write(Addr addr, const CacheLine& line, Cycle now, unsigned accel = 0);

    const SimStats& stats() const { return stats_; }
    const BestOffsetPrefetcher* prefetcher(unsigned core) const;
    const SetAssocCache& l2_bank(unsigned bank) const { return l2_[bank]; }
    bool l2_contains(Addr addr) const;
    bool l1_contains(unsigned core, Addr addr) const;

private:
    struct PendingFill {
        Cycle ready;
        std::uint64_t seq;
        Addr line;
        unsigned core;
        std::optional<std::uint32_t> pf_offset;
        bool operator>(const PendingFill& o) const { return ready != o.ready ? ready > o.ready : seq > o.seq; }
    };

    void check_range(Addr addr, std::uint64_t size, Requester who) const;
    void drain_fills(Cycle now);
    Cycle link_transfer(Cycle earliest);
    /// Allocates `line` in its L2 bank, writing back a dirty victim.
    SetAssocCache::Block& l2_allocate(Addr line, Cycle now);
    /// L2 lookup at cycle `t` (tag check starts at t). Returns data-ready cycle.
    Cycle l2_access(Addr line, Cycle t, bool write, std::optional<unsigned> core, HitLevel& level,
                    bool allocate = true);
    /// Timing of a full-line write that needs no fetch. Returns completion.
    Cycle l2_write_line(Addr line, Cycle t, bool allocate);
    void issue_prefetch(Addr line, Cycle t, unsigned core, std::uint32_t offset);

    CacheConfig cfg_;
    std::vector<std::uint8_t> mem_;
    std::vector<SetAssocCache> l1_;
    std::vector<SetAssocCache> l2_;
    std::vector<BestOffsetPrefetcher> bop_;
    std::priority_queue<PendingFill, std::vector<PendingFill>, std::greater<>> fills_;
    std::uint64_t fill_seq_ = 0;
    Cycle link_free_ = 0;
    SimStats stats_;
};

}  // namespace nearsim
