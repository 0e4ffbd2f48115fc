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

#include "nearsim/nmce.hpp"

#include <algorithm>
#include <cstring>

namespace nearsim {

std::optional<Addr> operand_address(Addr base, std::int64_t stride, std::uint32_t i, std::uint64_t mem_size) {
    std::int64_t offset = 0;
    std::int64_t addr = 0;
    if (base > static_cast<Addr>(INT64_MAX)) return std::nullopt;
    if (__builtin_mul_overflow(stride, static_cast<std::int64_t>(i), &offset)) return std::nullopt;
    if (__builtin_add_overflow(static_cast<std::int64_t>(base), offset, &addr)) return std::nullopt;
    if (addr < 0) return std::nullopt;
    const auto a = static_cast<Addr>(addr);
    if (a >= mem_size || mem_size - a < kLineBytes) return std::nullopt;
    return a;
}

std::int32_t dot64(std::span<const std::int8_t, kLineBytes> v1, std::span<const std::uint8_t, kLineBytes> v2) {
    std::int32_t acc = 0;
    for (std::size_t j = 0; j < kLineBytes; ++j) {
        acc += static_cast<std::int32_t>(v1[j]) * static_cast<std::int32_t>(static_cast<std::int8_t>(v2[j]));
    }
    return acc;
}

std::optional<std::array<std::int16_t, kNmceMaxCount>> mac_execute(const NmceRegs& regs,
                                                                   std::span<const std::uint8_t> mem) {
    if (regs.count > kNmceMaxCount) return std::nullopt;
    std::array<std::int16_t, kNmceMaxCount> out{};
    for (std::uint32_t i = 0; i < regs.count; ++i) {
        const auto a = operand_address(regs.v2_addr, regs.stride, i, mem.size());
        if (!a) return std::nullopt;
        out[i] = saturate_int16(dot64(regs.v1, mem.subspan(*a).first<kLineBytes>()));
    }
    return out;
}

std::optional<std::string> memcpy_error(const NmceRegs& regs, std::uint64_t mem_size) {
    if (regs.count > kNmceMaxCount) return "count exceeds 32";
    if (regs.count == 0) return std::nullopt;
    if (!is_line_aligned(regs.v2_addr) || regs.stride % static_cast<std::int64_t>(kLineBytes) != 0) {
        return "unaligned memcpy source";
    }
    if (!is_line_aligned(regs.dst_addr)) return "unaligned memcpy destination";

    const auto first = operand_address(regs.v2_addr, regs.stride, 0, mem_size);
    const auto last = operand_address(regs.v2_addr, regs.stride, regs.count - 1, mem_size);
    if (!first || !last) return "memcpy source out of range";
    const std::uint64_t dst_bytes = kLineBytes * regs.count;
    if (regs.dst_addr >= mem_size || mem_size - regs.dst_addr < dst_bytes) return "memcpy destination out of range";

    const Addr src_lo = std::min(*first, *last);
    const Addr src_hi = std::max(*first, *last) + kLineBytes;
    const Addr dst_lo = regs.dst_addr;
    const Addr dst_hi = regs.dst_addr + dst_bytes;
    const bool overlap = src_lo < dst_hi && dst_lo < src_hi;
    if (overlap && !(regs.stride == static_cast<std::int64_t>(kLineBytes) && dst_lo <= src_lo)) {
        return "overlapping memcpy regions";
    }
    return std::nullopt;
}

bool memcpy_execute(const NmceRegs& regs, std::span<std::uint8_t> mem) {
    if (memcpy_error(regs, mem.size())) return false;
    for (std::uint32_t i = 0; i < regs.count; ++i) {
        const Addr src = *operand_address(regs.v2_addr, regs.stride, i, mem.size());
        std::memmove(mem.data() + regs.dst_addr + kLineBytes * i, mem.data() + src, kLineBytes);
    }
    return true;
}

// ---------------------------------------------------------------------------

Nmce::Nmce(unsigned id, MemorySystem& mem, NmceConfig cfg)
    : id_(id), bank_(id % mem.config().banks), mem_(mem), cfg_(cfg) {}

void Nmce::fail() {
    regs_.status = NmceStatus::error;
    regs_.result.fill(0);
    inflight_.clear();
}

void Nmce::launch(Cycle now) {
    launch_cycle_ = now;
    issued_ = 0;
    completed_ = 0;
    regs_.progress = 0;
    scratch_.fill(0);
    inflight_.clear();

    if (regs_.count > kNmceMaxCount) {
        fail();
        return;
    }
    const auto mem_size = mem_.config().mem_size;
    if (regs_.op == NmceOp::mac) {
        for (std::uint32_t i = 0; i < regs_.count; ++i) {
            if (!operand_address(regs_.v2_addr, regs_.stride, i, mem_size)) {
                fail();
                return;
            }
        }
    } else if (memcpy_error(regs_, mem_size)) {
        fail();
        return;
    }
    if (regs_.count == 0) {
        regs_.result.fill(0);
        regs_.status = NmceStatus::done;
        done_cycle_ = now;
        return;
    }
    regs_.status = NmceStatus::busy;
}

void Nmce::mmio_write(Addr offset, std::uint64_t value, Cycle now) {
    if (offset % 8 != 0 || offset >= nmce_reg::span) {
        throw SimFault(Requester::nmce(id_), offset, "unmapped or unaligned register write");
    }
    if (regs_.status == NmceStatus::busy) {
        ++busy_write_errors_;
        fail();
        return;
    }
    // Any write acknowledges a finished operation.
    if (regs_.status != NmceStatus::idle) regs_.status = NmceStatus::idle;

    if (offset < nmce_reg::v2_addr) {
        for (unsigned b = 0; b < 8; ++b) {
            regs_.v1[offset + b] = static_cast<std::int8_t>((value >> (8 * b)) & 0xff);
        }
        return;
    }
    switch (offset) {
        case nmce_reg::v2_addr: regs_.v2_addr = value; break;
        case nmce_reg::stride: regs_.stride = static_cast<std::int64_t>(value); break;
        case nmce_reg::dst_addr: regs_.dst_addr = value; break;
        case nmce_reg::op:
            if (value > 1) {
                fail();
            } else {
                regs_.op = static_cast<NmceOp>(value);
            }
            break;
        case nmce_reg::count:
            if (value > kNmceMaxCount) {
                regs_.count = static_cast<std::uint32_t>(std::min<std::uint64_t>(value, UINT32_MAX));
                fail();
            } else {
                regs_.count = static_cast<std::uint32_t>(value);
                launch(now);
            }
            break;
        default: break;  // status ack, read-only result words
    }
}

std::uint64_t Nmce::mmio_read(Addr offset) const {
    if (offset % 8 != 0 || offset >= nmce_reg::span) {
        throw SimFault(Requester::nmce(id_), offset, "unmapped or unaligned register read");
    }
    if (offset < nmce_reg::v2_addr) {
        std::uint64_t w = 0;
        for (unsigned b = 0; b < 8; ++b) {
            w |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(regs_.v1[offset + b])) << (8 * b);
        }
        return w;
    }
    if (offset >= nmce_reg::result && offset < nmce_reg::result_end) {
        const auto first = (offset - nmce_reg::result) / 2;
        std::uint64_t w = 0;
        for (unsigned k = 0; k < 4; ++k) {
            w |= static_cast<std::uint64_t>(static_cast<std::uint16_t>(regs_.result[first + k])) << (16 * k);
        }
        return w;
    }
    switch (offset) {
        case nmce_reg::v2_addr: return regs_.v2_addr;
        case nmce_reg::stride: return static_cast<std::uint64_t>(regs_.stride);
        case nmce_reg::count: return regs_.count;
        case nmce_reg::dst_addr: return regs_.dst_addr;
        case nmce_reg::status: return regs_.status_word();
        case nmce_reg::op: return static_cast<std::uint64_t>(regs_.op);
        default: return 0;
    }
}

void Nmce::issue(Cycle now) {
    const auto mem_size = mem_.config().mem_size;
    InFlight op{issued_, now, {}};
    if (regs_.op == NmceOp::mac) {
        const Addr a = *operand_address(regs_.v2_addr, regs_.stride, issued_, mem_size);
        const Addr first = line_base(a);
        auto [lo, lo_ready] = mem_.nmce_port_read(bank_, first, now, id_);
        ++lines_fetched_;
        const auto skew = a - first;
        std::memcpy(op.data.data(), lo.data() + skew, kLineBytes - skew);
        op.arrival = lo_ready;
        if (skew != 0) {
            auto [hi, hi_ready] = mem_.nmce_port_read(bank_, first + kLineBytes, now, id_);
            ++lines_fetched_;
            std::memcpy(op.data.data() + (kLineBytes - skew), hi.data(), skew);
            op.arrival = std::max(op.arrival, hi_ready);
        }
    } else {
        const Addr src = *operand_address(regs_.v2_addr, regs_.stride, issued_, mem_size);
        auto [line, ready] = mem_.nmce_port_read(bank_, src, now, id_);
        ++lines_fetched_;
        op.data = line;
        op.arrival = ready;
    }
    inflight_.push_back(op);
    ++issued_;
}

void Nmce::consume(const InFlight& op, Cycle now) {
    if (regs_.op == NmceOp::mac) {
        scratch_[op.index] = saturate_int16(dot64(regs_.v1, op.data));
    } else {
        mem_.nmce_port_write(bank_, regs_.dst_addr + kLineBytes * op.index, op.data, now, id_);
    }
}

NmceStatus Nmce::step(Cycle now) {
    if (regs_.status != NmceStatus::busy) return regs_.status;

    bool consumed = false;
    if (!inflight_.empty() && inflight_.front().arrival <= now) {
        consume(inflight_.front(), now);
        inflight_.pop_front();
        regs_.progress = ++completed_;
        consumed = true;
        if (completed_ == regs_.count) {
            regs_.result = scratch_;
            regs_.status = NmceStatus::done;
            done_cycle_ = now + 1;
            return regs_.status;
        }
    }
    const bool port_free = cfg_.pipelined || (inflight_.empty() && !consumed);
    if (issued_ < regs_.count && port_free) issue(now);
    return regs_.status;
}

}  // namespace nearsim
