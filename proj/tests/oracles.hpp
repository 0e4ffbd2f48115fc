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

// Brute-force reference models used by the unit tests and the acceptance
// runner. They share no code with the simulator beyond plain data types.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nearsim/bop.hpp"
#include "nearsim/soc.hpp"

namespace oracle {

inline std::int16_t clamp16(std::int64_t v) {
    return static_cast<std::int16_t>(v > 32767 ? 32767 : (v < -32768 ? -32768 : v));
}

/// Saturating dot product of v1 with the 64 bytes at mem[addr].
inline std::int16_t saturating_dot(const std::array<std::int8_t, 64>& v1, std::span<const std::uint8_t> mem,
                                   std::uint64_t addr) {
    std::int64_t sum = 0;
    for (unsigned k = 0; k < 64; ++k) sum += std::int64_t{v1[k]} * static_cast<std::int8_t>(mem[addr + k]);
    return clamp16(sum);
}

/// C = A * B with the 64-element segmented saturation convention, written as
/// the textbook triple loop over row-major A (m x k) and B (k x n).
inline std::vector<std::int16_t> matmul(const std::vector<std::int8_t>& a, const std::vector<std::int8_t>& b,
                                        std::uint32_t m, std::uint32_t k, std::uint32_t n) {
    std::vector<std::int16_t> c(static_cast<std::size_t>(m) * n);
    for (std::uint32_t i = 0; i < m; ++i)
        for (std::uint32_t j = 0; j < n; ++j) {
            std::int64_t total = 0;
            for (std::uint32_t s = 0; s < k; s += 64) {
                std::int64_t part = 0;
                for (std::uint32_t q = s; q < k && q < s + 64; ++q)
                    part += std::int64_t{a[std::size_t{i} * k + q]} * b[std::size_t{q} * n + j];
                total += clamp16(part);
            }
            c[std::size_t{i} * n + j] = clamp16(total);
        }
    return c;
}

/// y = A x over a dense row-major matrix.
inline std::vector<std::int32_t> dense_matvec(const std::vector<std::int8_t>& a, std::uint32_t rows,
                                              std::uint32_t cols, std::span<const std::int8_t> x) {
    std::vector<std::int32_t> y(rows, 0);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c) y[r] += std::int32_t{a[std::size_t{r} * cols + c]} * x[c];
    return y;
}

struct MacOutcome {
    std::uint64_t status = 0;
    std::array<std::int16_t, 32> result{};
};

/// Programs engine `e` through its registers from core 0, waits for it to
/// leave the busy state and reads every result word.
inline MacOutcome run_mac(nearsim::Soc& soc, unsigned e, const std::array<std::int8_t, 64>& v1,
                          std::uint64_t v2_addr, std::int64_t stride, std::uint64_t count) {
    using namespace nearsim;
    auto& core = soc.core(0);
    const Addr base = soc.engine_base(e);
    for (unsigned w = 0; w < 8; ++w) {
        std::uint64_t word = 0;
        for (unsigned b = 0; b < 8; ++b) word |= std::uint64_t{static_cast<std::uint8_t>(v1[8 * w + b])} << (8 * b);
        core.store(base + nmce_reg::v1 + 8 * w, 8, word);
    }
    core.store(base + nmce_reg::op, 8, 0);
    core.store(base + nmce_reg::v2_addr, 8, v2_addr);
    core.store(base + nmce_reg::stride, 8, static_cast<std::uint64_t>(stride));
    core.store(base + nmce_reg::count, 8, count);
    MacOutcome out;
    do {
        out.status = core.load(base + nmce_reg::status, 8);
    } while ((out.status & 0xff) == 1);
    for (unsigned w = 0; w < 8; ++w) {
        const auto word = core.load(base + nmce_reg::result + 8 * w, 8);
        for (unsigned q = 0; q < 4; ++q)
            out.result[4 * w + q] = static_cast<std::int16_t>(static_cast<std::uint16_t>(word >> (16 * q)));
    }
    return out;
}

/// Replays a strided line trace with zero-latency fills: every access is a
/// trigger (a miss, or the first touch of a line the prefetcher brought in),
/// the demand fill lands at once and so does any prefetch it causes. Returns
/// false if a prefetch target ever differs from line + current offset.
inline bool replay_stride(nearsim::BestOffsetPrefetcher& bop, std::uint64_t stride, std::uint64_t accesses) {
    bool targets_ok = true;
    for (std::uint64_t i = 0; i < accesses; ++i) {
        const nearsim::Addr line = 1000 + i * stride;
        const auto offset_before = bop.best_offset();
        const auto target = bop.on_access(line, true);
        bop.on_fill(line, std::nullopt);
        if (target) {
            targets_ok = targets_ok && *target == line + offset_before;
            bop.on_fill(*target, offset_before);
        }
    }
    return targets_ok;
}

}  // namespace oracle
