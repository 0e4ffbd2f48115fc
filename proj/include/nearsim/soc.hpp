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
#include <memory>
#include <optional>
#include <vector>

#include "nearsim/bop.hpp"
#include "nearsim/memsys.hpp"
#include "nearsim/nmce.hpp"
#include "nearsim/stats.hpp"

namespace nearsim {

/// Cost model of an in-order scalar core: fixed cycles per arithmetic op and
/// one blocking memory access at a time.
struct CoreConfig {
    Cycle mac_cycles = 1;
    Cycle alu_cycles = 1;
    Cycle mmio_cycles = 2;  // uncached register access over the on-chip bus
};

struct SocConfig {
    CacheConfig mem;
    CoreConfig core;
    NmceConfig nmce;
    std::optional<BopConfig> prefetch;  // unset: prefetchers off
    Addr mmio_base = 0x8000'0000;
    unsigned engines = 4;

    void validate() const;
};

class Soc;

class Core {
public:
    Core(Soc& soc, unsigned id) : soc_(&soc), id_(id) {}

    unsigned id() const { return id_; }
    Cycle now() const { return now_; }
    /// Idles until `t` (no-op if already past it).
    void wait_until(Cycle t) { now_ = std::max(now_, t); }

    /// Little-endian load of 1, 2, 4 or 8 bytes, zero-extended.
    std::uint64_t load(Addr addr, unsigned size);
    std::int8_t load_i8(Addr addr) { return static_cast<std::int8_t>(load(addr, 1)); }
    void store(Addr addr, unsigned size, std::uint64_t value);

    void alu(unsigned n = 1);
    void mac(unsigned n = 1);

    std::uint64_t memory_ops() const { return memory_ops_; }

private:
    Soc* soc_;
    unsigned id_;
    Cycle now_ = 0;
    std::uint64_t memory_ops_ = 0;
};

/**
 * Cores, near-memory engines and the memory hierarchy of one simulated chip.
 *
 * Engines are stepped lazily: before any core touches memory or a register
 * the SoC advances every busy engine, cycle by cycle in engine-id order, up
 * to the core's current cycle.
 */
class Soc {
public:
    explicit Soc(SocConfig cfg);
    Soc(const Soc&) = delete;
    Soc& operator=(const Soc&) = delete;

    const SocConfig& config() const { return cfg_; }
    MemorySystem& mem() { return mem_; }
    const MemorySystem& mem() const { return mem_; }
    Core& core(unsigned i) { return cores_.at(i); }
    unsigned cores() const { return static_cast<unsigned>(cores_.size()); }
    Nmce& engine(unsigned i) { return *engines_.at(i); }
    unsigned engines() const { return static_cast<unsigned>(engines_.size()); }

    Addr engine_base(unsigned e) const { return cfg_.mmio_base + e * nmce_reg::span; }
    bool is_mmio(Addr addr) const {
        return addr >= cfg_.mmio_base && addr < cfg_.mmio_base + engines_.size() * nmce_reg::span;
    }

    /// Steps busy engines through every cycle before `t`.
    void advance_devices(Cycle t);
    Cycle device_time() const { return device_time_; }

    std::uint64_t mmio_read(Addr addr, Cycle now);
    void mmio_write(Addr addr, std::uint64_t value, Cycle now);

    /// Memory-system counters with `cycles` set to the latest core clock.
    SimStats stats() const;

private:
    SocConfig cfg_;
    MemorySystem mem_;
    std::vector<Core> cores_;
    std::vector<std::unique_ptr<Nmce>> engines_;
    Cycle device_time_ = 0;
};

}  // namespace nearsim
