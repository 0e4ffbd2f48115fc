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

#include "nearsim/memsys.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace nearsim {

namespace {

std::string hex(Addr a) {
    std::ostringstream os;
    os << "0x" << std::hex << a;
    return os.str();
}

}  // namespace

std::string to_string(Requester who) {
    switch (who.kind) {
        case RequesterKind::core: return "core" + std::to_string(who.id);
        case RequesterKind::nmce: return "nmce" + std::to_string(who.id);
        case RequesterKind::sparse: return "sparse" + std::to_string(who.id);
        case RequesterKind::prefetcher: return "prefetcher" + std::to_string(who.id);
        case RequesterKind::loader: return "loader";
    }
    return "unknown";
}

SimFault::SimFault(Requester who, Addr addr, const std::string& what)
    : std::runtime_error(to_string(who) + ": " + what + " at " + hex(addr)), who_(who), addr_(addr) {}

void CacheConfig::validate() const {
    auto require = [](bool ok, const char* msg) {
        if (!ok) throw ValidationError(msg);
    };
    require(banks >= 1, "memsys.banks must be >= 1");
    require(cores >= 1, "memsys.cores must be >= 1");
    require(l1_assoc >= 1 && associativity >= 1, "associativity must be >= 1");
    require(l1_size % kLineBytes == 0 && l2_size % kLineBytes == 0 && mem_size % kLineBytes == 0,
            "cache and memory sizes must be multiples of 64 bytes");
    require(l2_size % banks == 0, "memsys.l2_size must be divisible by memsys.banks");
    require(l1_size > 0 && l1_size % (kLineBytes * l1_assoc) == 0, "memsys.l1_size must hold whole sets");
    require(l2_size > 0 && (l2_size / banks) % (kLineBytes * associativity) == 0,
            "memsys.l2_size per bank must hold whole sets");
    require(l1_hit_cycles >= 1 && l2_hit_cycles >= 1 && dram_cycles >= 1, "latencies must be >= 1");
    require(link_bytes_per_cycle > 0, "memsys.link_bytes_per_cycle must be > 0");
    require(mem_size > 0, "memsys.mem_size must be > 0");
}

// ---------------------------------------------------------------------------

SetAssocCache::SetAssocCache(std::uint64_t size_bytes, unsigned ways, unsigned interleave)
    : sets_(size_bytes / (kLineBytes * ways)), ways_(ways), interleave_(interleave), blocks_(sets_ * ways) {}

SetAssocCache::Block* SetAssocCache::find(Addr line) {
    Block* set = &blocks_[set_of(line) * ways_];
    for (unsigned w = 0; w < ways_; ++w) {
        if (set[w].valid && set[w].line == line) return &set[w];
    }
    return nullptr;
}

const SetAssocCache::Block* SetAssocCache::find(Addr line) const {
    return const_cast<SetAssocCache*>(this)->find(line);
}

SetAssocCache::Block& SetAssocCache::victim(Addr line) {
    Block* set = &blocks_[set_of(line) * ways_];
    Block* lru = set;
    for (unsigned w = 0; w < ways_; ++w) {
        if (!set[w].valid) return set[w];
        if (set[w].stamp < lru->stamp) lru = &set[w];
    }
    return *lru;
}

// ---------------------------------------------------------------------------

MemorySystem::MemorySystem(CacheConfig cfg, std::optional<BopConfig> prefetch) : cfg_(cfg) {
    cfg_.validate();
    mem_.assign(cfg_.mem_size, 0);
    for (unsigned c = 0; c < cfg_.cores; ++c) l1_.emplace_back(cfg_.l1_size, cfg_.l1_assoc);
    for (unsigned b = 0; b < cfg_.banks; ++b) l2_.emplace_back(cfg_.l2_size / cfg_.banks, cfg_.associativity, cfg_.banks);
    if (prefetch) {
        for (unsigned c = 0; c < cfg_.cores; ++c) bop_.emplace_back(*prefetch);
    }
}

bool MemorySystem::in_range(Addr addr, std::uint64_t size) const {
    return addr < cfg_.mem_size && size <= cfg_.mem_size - addr;
}

void MemorySystem::check_range(Addr addr, std::uint64_t size, Requester who) const {
    if (!in_range(addr, size)) throw SimFault(who, addr, "access outside physical memory");
}

void MemorySystem::poke(Addr addr, std::span<const std::uint8_t> data) {
    check_range(addr, data.size(), Requester::loader());
    std::memcpy(mem_.data() + addr, data.data(), data.size());
}

void MemorySystem::peek(Addr addr, std::span<std::uint8_t> out) const {
    check_range(addr, out.size(), Requester::loader());
    std::memcpy(out.data(), mem_.data() + addr, out.size());
}

CacheLine MemorySystem::line_at(Addr line_addr) const {
    CacheLine line;
    peek(line_base(line_addr), line);
    return line;
}

std::uint64_t MemorySystem::load_image(const std::filesystem::path& path, Addr base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open memory image " + path.string());
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in_range(base, data.size())) {
        throw ValidationError("memory image " + path.string() + " does not fit at " + hex(base));
    }
    poke(base, data);
    return data.size();
}

void MemorySystem::warm_l2(Addr base, std::uint64_t size) {
    if (size == 0) return;
    check_range(base, size, Requester::loader());
    for (Addr line = line_index(base); line <= line_index(base + size - 1); ++line) {
        auto& bank = l2_[line % cfg_.banks];
        if (auto* blk = bank.find(line)) {
            bank.touch(*blk);
            continue;
        }
        auto& v = bank.victim(line);
        v = SetAssocCache::Block{};
        v.line = line;
        v.valid = true;
        bank.touch(v);
    }
}

bool MemorySystem::l2_contains(Addr addr) const {
    const Addr line = line_index(addr);
    return l2_[line % cfg_.banks].find(line) != nullptr;
}

bool MemorySystem::l1_contains(unsigned core, Addr addr) const {
    return l1_.at(core).find(line_index(addr)) != nullptr;
}

const BestOffsetPrefetcher* MemorySystem::prefetcher(unsigned core) const {
    return core < bop_.size() ? &bop_[core] : nullptr;
}

Cycle MemorySystem::link_transfer(Cycle earliest) {
    const Cycle start = std::max(earliest, link_free_);
    link_free_ = start + cfg_.link_cycles_per_line();
    stats_.bytes.link_bytes += kLineBytes;
    return link_free_;
}

void MemorySystem::drain_fills(Cycle now) {
    while (!fills_.empty() && fills_.top().ready <= now) {
        const auto f = fills_.top();
        fills_.pop();
        if (f.core < bop_.size()) bop_[f.core].on_fill(f.line, f.pf_offset);
    }
}

SetAssocCache::Block& MemorySystem::l2_allocate(Addr line, Cycle now) {
    auto& bank = l2_[line % cfg_.banks];
    auto& v = bank.victim(line);
    if (v.valid && v.dirty) {
        link_transfer(now);
        stats_.bytes.dram_writes += kLineBytes;
        ++stats_.writebacks;
    }
    v = SetAssocCache::Block{};
    v.line = line;
    v.valid = true;
    bank.touch(v);
    return v;
}

Cycle MemorySystem::l2_access(Addr line, Cycle t, bool write, std::optional<unsigned> core, HitLevel& level,
                              bool allocate) {
    drain_fills(t);
    auto& bank = l2_[line % cfg_.banks];
    const Cycle hit_ready = t + cfg_.l2_hit_cycles;
    bool trigger = false;
    Cycle ready;

    if (auto* blk = bank.find(line)) {
        bank.touch(*blk);
        ready = std::max(hit_ready, blk->ready);
        level = blk->ready > hit_ready ? HitLevel::dram : HitLevel::l2;
        if (blk->prefetched && core) {
            trigger = true;
            if (blk->ready <= hit_ready) {
                ++stats_.prefetch.useful;
            } else {
                ++stats_.prefetch.late;
            }
            blk->prefetched = false;
        }
        if (write) blk->dirty = true;
    } else {
        level = HitLevel::dram;
        ++stats_.dram_fills;
        stats_.bytes.dram_reads += kLineBytes;
        ready = link_transfer(hit_ready + cfg_.dram_cycles);
        if (allocate) {
            auto& blk2 = l2_allocate(line, t);
            blk2.ready = ready;
            blk2.dirty = write;
        }
        if (core) {
            trigger = true;
            fills_.push({ready, fill_seq_++, line, *core, std::nullopt});
        }
    }

    if (core && *core < bop_.size()) {
        if (auto target = bop_[*core].on_access(line, trigger)) {
            issue_prefetch(*target, t, *core, static_cast<std::uint32_t>(*target - line));
        }
    }
    return ready;
}

void MemorySystem::issue_prefetch(Addr line, Cycle t, unsigned core, std::uint32_t offset) {
    if (!in_range(line * kLineBytes, kLineBytes) || l2_[line % cfg_.banks].find(line) != nullptr) {
        ++stats_.prefetch.dropped;
        return;
    }
    ++stats_.prefetch.issued;
    ++stats_.dram_fills;
    stats_.bytes.dram_reads += kLineBytes;
    const Cycle ready = link_transfer(t + cfg_.l2_hit_cycles + cfg_.dram_cycles);
    auto& blk = l2_allocate(line, t);
    blk.ready = ready;
    blk.prefetched = true;
    blk.pf_offset = offset;
    fills_.push({ready, fill_seq_++, line, core, offset});
}

MemEvent MemorySystem::access(Addr addr, AccessKind kind, Requester who, Cycle now, std::uint64_t size) {
    if (size == 0) size = 1;
    check_range(addr, size, who);
    const Addr line = line_index(addr);
    if (line_index(addr + size - 1) != line) throw SimFault(who, addr, "access straddles a cache line");
    if (who.kind != RequesterKind::core || who.id >= cfg_.cores) {
        throw SimFault(who, addr, "only cores access memory through the L1 path");
    }

    MemEvent ev{kind, addr, who, now, now, HitLevel::l1};
    drain_fills(now);
    auto& l1 = l1_[who.id];
    const Cycle l1_done = now + cfg_.l1_hit_cycles;

    switch (kind) {
        case AccessKind::read: {
            if (auto* blk = l1.find(line)) {
                l1.touch(*blk);
                ev.completion_cycle = std::max(l1_done, blk->ready);
                break;
            }
            const Cycle ready = l2_access(line, l1_done, false, who.id, ev.level);
            auto& v = l1.victim(line);
            v = SetAssocCache::Block{};
            v.line = line;
            v.valid = true;
            v.ready = ready;
            l1.touch(v);
            ev.completion_cycle = ready;
            break;
        }
        case AccessKind::write: {
            if (auto* blk = l1.find(line)) l1.touch(*blk);
            const bool present = l2_[line % cfg_.banks].find(line) != nullptr;
            const Cycle ready = l2_access(line, l1_done, true, std::nullopt, ev.level);
            // Stores retire once the line is owned; a write miss waits for the fill.
            ev.completion_cycle = present ? l1_done : ready;
            if (present) ev.level = HitLevel::l1;
            break;
        }
        case AccessKind::prefetch: {
            if (l2_[line % cfg_.banks].find(line) == nullptr) {
                issue_prefetch(line, l1_done, who.id, 0);
            } else {
                ++stats_.prefetch.dropped;
            }
            ev.completion_cycle = now;
            break;
        }
    }
    return ev;
}

MemEvent MemorySystem::read(Addr addr, std::span<std::uint8_t> out, Requester who, Cycle now) {
    auto ev = access(addr, AccessKind::read, who, now, out.size());
    std::memcpy(out.data(), mem_.data() + addr, out.size());
    return ev;
}

MemEvent MemorySystem::write(Addr addr, std::span<const std::uint8_t> data, Requester who, Cycle now) {
    auto ev = access(addr, AccessKind::write, who, now, data.size());
    std::memcpy(mem_.data() + addr, data.data(), data.size());
    return ev;
}

std::pair<CacheLine, Cycle> MemorySystem::nmce_port_read(unsigned bank, Addr addr, Cycle now, unsigned engine) {
    const auto who = Requester::nmce(engine);
    if (!is_line_aligned(addr)) throw SimFault(who, addr, "unaligned line read");
    check_range(addr, kLineBytes, who);
    const Cycle hop = bank == bank_of(addr) ? 0 : cfg_.noc_hop_cycles;
    HitLevel level;
    const Cycle ready = l2_access(line_index(addr), now + hop, false, std::nullopt, level, cfg_.nmce_allocate);
    stats_.bytes.l2_to_nmce += kLineBytes;
    return {line_at(addr), ready};
}

Cycle MemorySystem::nmce_port_write(unsigned bank, Addr addr, const CacheLine& data, Cycle now, unsigned engine) {
    const auto who = Requester::nmce(engine);
    if (!is_line_aligned(addr)) throw SimFault(who, addr, "unaligned line write");
    check_range(addr, kLineBytes, who);
    std::memcpy(mem_.data() + addr, data.data(), kLineBytes);
    stats_.bytes.l2_to_nmce += kLineBytes;

    const Cycle t = now + (bank == bank_of(addr) ? 0 : cfg_.noc_hop_cycles);
    return l2_write_line(line_index(addr), t, cfg_.nmce_allocate);
}

Cycle MemorySystem::l2_write_line(Addr line, Cycle t, bool allocate) {
    drain_fills(t);
    auto& l2 = l2_[line % cfg_.banks];
    if (auto* blk = l2.find(line)) {
        l2.touch(*blk);
        blk->dirty = true;
        blk->prefetched = false;
        return std::max(t + cfg_.l2_hit_cycles, blk->ready);
    }
    if (!allocate) {
        stats_.bytes.dram_writes += kLineBytes;
        ++stats_.writebacks;
        return link_transfer(t + cfg_.l2_hit_cycles);
    }
    auto& blk = l2_allocate(line, t);
    blk.ready = t + cfg_.l2_hit_cycles;
    blk.dirty = true;
    return blk.ready;
}

Cycle MemorySystem::accel_port_read(Addr addr, Cycle now, unsigned accel) {
    check_range(line_base(addr), kLineBytes, Requester::sparse(accel));
    HitLevel level;
    return l2_access(line_index(addr), now, false, std::nullopt, level);
}

Cycle MemorySystem::accel_port_write(Addr addr, const CacheLine& data, Cycle now, unsigned accel) {
    const auto who = Requester::sparse(accel);
    if (!is_line_aligned(addr)) throw SimFault(who, addr, "unaligned line write");
    check_range(addr, kLineBytes, who);
    std::memcpy(mem_.data() + addr, data.data(), kLineBytes);
    return l2_write_line(line_index(addr), now, true);
}

}  // namespace nearsim
