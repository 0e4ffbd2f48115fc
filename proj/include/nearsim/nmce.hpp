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

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>

#include "nearsim/memsys.hpp"
#include "nearsim/types.hpp"

namespace nearsim {

enum class NmceOp : std::uint8_t { mac = 0, memcpy = 1 };
enum class NmceStatus : std::uint8_t { idle = 0, busy = 1, done = 2, error = 3 };

inline constexpr std::uint32_t kNmceMaxCount = 32;

/// MMIO register map of one engine, relative to its base. Engine e sits at
/// mmio_base + e * nmce_reg::span. Every register is accessed as aligned
/// little-endian 64-bit words.
///
///   0x00  v1_reg    64 B, int8 lanes, R/W
///   0x40  v2_addr   u64, R/W
///   0x48  stride    i64 (bytes), R/W
///   0x50  count/go  u64, R/W; a write launches the operation selected by `op`
///   0x58  dst_addr  u64, R/W (memcpy destination)
///   0x60  status    bits[7:0] state (0 idle, 1 busy, 2 done, 3 error),
///                   bits[15:8] completed operations; a write acknowledges
///   0x68  op        0 = MAC, 1 = memcpy, R/W
///   0x80  result    32 x int16, read-only
namespace nmce_reg {
inline constexpr Addr v1 = 0x00;
inline constexpr Addr v2_addr = 0x40;
inline constexpr Addr stride = 0x48;
inline constexpr Addr count = 0x50;
inline constexpr Addr dst_addr = 0x58;
inline constexpr Addr status = 0x60;
inline constexpr Addr op = 0x68;
inline constexpr Addr result = 0x80;
inline constexpr Addr result_end = 0xC0;
inline constexpr Addr span = 0x100;
}  // namespace nmce_reg

struct NmceRegs {
    std::array<std::int8_t, kLineBytes> v1{};
    Addr v2_addr = 0;
    std::int64_t stride = 0;
    std::uint32_t count = 0;
    NmceOp op = NmceOp::mac;
    Addr dst_addr = 0;
    NmceStatus status = NmceStatus::idle;
    std::uint32_t progress = 0;
    std::array<std::int16_t, kNmceMaxCount> result{};

    std::uint64_t status_word() const {
        return static_cast<std::uint64_t>(status) | (static_cast<std::uint64_t>(progress & 0xff) << 8);
    }
};

constexpr std::int16_t saturate_int16(std::int64_t v) {
    if (v > 32767) return 32767;
    if (v < -32768) return -32768;
    return static_cast<std::int16_t>(v);
}

/// Address of the i-th 64-byte operand (base + stride * i), or nullopt if any
/// byte of it falls outside [0, mem_size).
std::optional<Addr> operand_address(Addr base, std::int64_t stride, std::uint32_t i, std::uint64_t mem_size);

/// Exact dot product of one 64-lane int8 pair. |result| <= 2^20.
std::int32_t dot64(std::span<const std::int8_t, kLineBytes> v1, std::span<const std::uint8_t, kLineBytes> v2);

/// Functional MAC against a flat memory image. Entries past `count` are zero.
/// Returns nullopt when an operand is out of range or count exceeds 32.
std::optional<std::array<std::int16_t, kNmceMaxCount>> mac_execute(const NmceRegs& regs,
                                                                   std::span<const std::uint8_t> mem);

/// Reason a memcpy request is rejected, or nullopt if it is legal. Source and
/// destination lines must be aligned and in range; overlapping regions are
/// allowed only for stride 64 with dst <= src (a forward copy is then exact).
std::optional<std::string> memcpy_error(const NmceRegs& regs, std::uint64_t mem_size);

/// Functional memcpy: line i from v2_addr + stride*i goes to dst_addr + 64*i.
/// Returns false (memory untouched) if memcpy_error reports a problem.
bool memcpy_execute(const NmceRegs& regs, std::span<std::uint8_t> mem);

struct NmceConfig {
    /// Issue one line fetch per cycle instead of waiting for each line to be
    /// consumed before fetching the next.
    bool pipelined = false;
};

/// Timing model of one engine. Stepped once per cycle by the SoC.
class Nmce {
public:
    Nmce(unsigned id, MemorySystem& mem, NmceConfig cfg = {});

    void mmio_write(Addr offset, std::uint64_t value, Cycle now);
    std::uint64_t mmio_read(Addr offset) const;

    /// Advances one cycle. Calls must use strictly increasing `now`.
    NmceStatus step(Cycle now);

    bool busy() const { return regs_.status == NmceStatus::busy; }
    NmceStatus status() const { return regs_.status; }
    const NmceRegs& regs() const { return regs_; }
    unsigned id() const { return id_; }
    unsigned bank() const { return bank_; }
    Cycle launch_cycle() const { return launch_cycle_; }
    Cycle done_cycle() const { return done_cycle_; }
    std::uint64_t lines_fetched() const { return lines_fetched_; }
    std::uint64_t busy_write_errors() const { return busy_write_errors_; }

private:
    struct InFlight {
        std::uint32_t index;
        Cycle arrival;
        CacheLine data;
    };

    void launch(Cycle now);
    void fail();
    void issue(Cycle now);
    void consume(const InFlight& op, Cycle now);

    unsigned id_;
    unsigned bank_;
    MemorySystem& mem_;
    NmceConfig cfg_;
    NmceRegs regs_;
    std::array<std::int16_t, kNmceMaxCount> scratch_{};
    std::deque<InFlight> inflight_;
    std::uint32_t issued_ = 0;
    std::uint32_t completed_ = 0;
    Cycle launch_cycle_ = 0;
    Cycle done_cycle_ = 0;
    std::uint64_t lines_fetched_ = 0;
    std::uint64_t busy_write_errors_ = 0;
};

}  // namespace nearsim
