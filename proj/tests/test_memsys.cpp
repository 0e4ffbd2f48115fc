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

#include <gtest/gtest.h>

#include <map>
#include <vector>

#include "nearsim/memsys.hpp"
#include "nearsim/rng.hpp"

using namespace nearsim;

namespace {

CacheConfig small_config() {
    CacheConfig c;
    c.l1_size = 1024;
    c.l1_assoc = 2;
    c.l2_size = 4096;
    c.associativity = 2;
    c.mem_size = 256 * 1024;
    return c;
}

Cycle miss_latency(const CacheConfig& c, Cycle t) {
    return t + c.l1_hit_cycles + c.l2_hit_cycles + c.dram_cycles + c.link_cycles_per_line();
}

}  // namespace

TEST(MemsysLatency, ColdMissThenL1ThenL2Hit) {
    const CacheConfig cfg;
    MemorySystem mem(cfg);
    auto ev = mem.access(0, AccessKind::read, Requester::core(0), 0, 8);
    EXPECT_EQ(ev.level, HitLevel::dram);
    EXPECT_EQ(ev.completion_cycle, miss_latency(cfg, 0));

    ev = mem.access(8, AccessKind::read, Requester::core(0), 500, 8);
    EXPECT_EQ(ev.level, HitLevel::l1);
    EXPECT_EQ(ev.completion_cycle, 500 + cfg.l1_hit_cycles);

    ev = mem.access(0, AccessKind::read, Requester::core(1), 600, 8);
    EXPECT_EQ(ev.level, HitLevel::l2);
    EXPECT_EQ(ev.completion_cycle, 600 + cfg.l1_hit_cycles + cfg.l2_hit_cycles);
}

TEST(MemsysLatency, LinkSerializesBackToBackMisses) {
    const CacheConfig cfg;
    MemorySystem mem(cfg);
    const auto a = mem.access(0, AccessKind::read, Requester::core(0), 0).completion_cycle;
    const auto b = mem.access(64, AccessKind::read, Requester::core(1), 0).completion_cycle;
    EXPECT_EQ(a, miss_latency(cfg, 0));
    EXPECT_EQ(b, a + cfg.link_cycles_per_line());
}

TEST(MemsysLatency, StoreToResidentLineCompletesAtL1Latency) {
    const CacheConfig cfg;
    MemorySystem mem(cfg);
    mem.warm_l2(4096, 64);
    EXPECT_TRUE(mem.l2_contains(4096));
    const auto ev = mem.access(4096, AccessKind::write, Requester::core(0), 100, 8);
    EXPECT_EQ(ev.completion_cycle, 100 + cfg.l1_hit_cycles);
    // Write-through without allocation: the L1 stays cold.
    EXPECT_FALSE(mem.l1_contains(0, 4096));
}

TEST(MemsysLatency, NmcePortPaysHopForForeignBank) {
    const CacheConfig cfg;
    MemorySystem mem(cfg);
    mem.warm_l2(0, 64 * cfg.banks);
    const Addr addr = 64;  // bank 1
    ASSERT_EQ(mem.bank_of(addr), 1u);
    const auto own = mem.nmce_port_read(1, addr, 1000).second;
    const auto other = mem.nmce_port_read(2, addr, 2000).second;
    EXPECT_EQ(own, 1000 + cfg.l2_hit_cycles);
    EXPECT_EQ(other - 2000, own - 1000 + cfg.noc_hop_cycles);
    EXPECT_EQ(mem.stats().bytes.l2_to_nmce, 128u);
}

TEST(MemsysCache, LruEvictsOldestWay) {
    SetAssocCache cache(4 * 64 * 4, 4);  // 4 sets of 4 ways
    const unsigned sets = 4;
    for (Addr i = 0; i < 4; ++i) {
        auto& v = cache.victim(i * sets);
        v = SetAssocCache::Block{};
        v.line = i * sets;
        v.valid = true;
        cache.touch(v);
    }
    cache.touch(*cache.find(0));  // line 0 is now most recent; line 4 is oldest
    auto& v = cache.victim(16);
    EXPECT_EQ(v.line, 4u);
}

TEST(MemsysFunctional, MatchesFlatMemoryOracle) {
    const auto cfg = small_config();
    MemorySystem mem(cfg);
    std::vector<std::uint8_t> oracle(cfg.mem_size, 0);
    Rng rng(42);
    const std::uint64_t region = 32 * 1024;  // eight times the L2
    Cycle now = 0;
    for (int i = 0; i < 40000; ++i) {
        const unsigned size = 1u << uniform_below(rng, 4);
        const Addr addr = uniform_below(rng, region / size) * size;
        const unsigned core = static_cast<unsigned>(uniform_below(rng, cfg.cores));
        now += uniform_below(rng, 20);
        if (bernoulli(rng, 0.4)) {
            std::vector<std::uint8_t> data(size);
            for (auto& b : data) b = static_cast<std::uint8_t>(rng());
            const auto ev = mem.write(addr, data, Requester::core(core), now);
            EXPECT_GE(ev.completion_cycle, now);
            std::copy(data.begin(), data.end(), oracle.begin() + static_cast<std::ptrdiff_t>(addr));
        } else {
            std::vector<std::uint8_t> out(size);
            const auto ev = mem.read(addr, out, Requester::core(core), now);
            EXPECT_GE(ev.completion_cycle, now + cfg.l1_hit_cycles);
            ASSERT_TRUE(std::equal(out.begin(), out.end(), oracle.begin() + static_cast<std::ptrdiff_t>(addr)))
                << "read of " << size << " bytes at " << addr << " (op " << i << ")";
        }
    }
    const auto& s = mem.stats();
    EXPECT_GT(s.writebacks, 0u);
    EXPECT_EQ(s.bytes.link_bytes, 64 * (s.dram_fills + s.writebacks));
}

TEST(MemsysFunctional, OutOfRangeAccessFaultsWithRequester) {
    MemorySystem mem(small_config());
    try {
        mem.access(small_config().mem_size, AccessKind::read, Requester::core(2), 0);
        FAIL() << "expected a fault";
    } catch (const SimFault& f) {
        EXPECT_EQ(f.requester().kind, RequesterKind::core);
        EXPECT_EQ(f.requester().id, 2u);
    }
    EXPECT_THROW(mem.nmce_port_read(0, small_config().mem_size, 0), SimFault);
}

TEST(MemsysConfig, RejectsInvalidGeometry) {
    CacheConfig c;
    c.banks = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = CacheConfig{};
    c.l1_size = 100;
    EXPECT_THROW(c.validate(), ValidationError);
    c = CacheConfig{};
    c.link_bytes_per_cycle = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    EXPECT_NO_THROW(CacheConfig{}.validate());
}

TEST(MemsysBanks, ConsecutiveLinesRotateThroughBanks) {
    for (Addr line = 0; line < 64; ++line) EXPECT_EQ(bank_of(line * 64 + 17, 4), line % 4);
}

// Every region of 4N lines that starts on a 4-line boundary holds exactly N
// lines of each bank; checked for every start and length inside 64 KiB.
TEST(MemsysBanks, StripeBalanceExhaustive) {
    const unsigned banks = 4;
    const Addr lines = 64 * 1024 / 64;
    for (Addr start = 0; start < lines; start += banks) {
        std::array<std::uint64_t, 4> count{};
        for (Addr end = start; end + banks <= lines;) {
            for (unsigned q = 0; q < banks; ++q, ++end) ++count[bank_of(end * 64, banks)];
            const auto n = (end - start) / banks;
            for (unsigned b = 0; b < banks; ++b) ASSERT_EQ(count[b], n) << "start " << start << " len " << end - start;
        }
    }
}
