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

#include "nearsim/soc.hpp"

#include <algorithm>
#include <array>

namespace nearsim {

void SocConfig::validate() const {
    mem.validate();
    if (prefetch) prefetch->validate();
    if (engines == 0 || engines > mem.banks) throw ValidationError("engine count must be in [1, banks]");
    if (mmio_base < mem.mem_size) throw ValidationError("mmio_base must lie above physical memory");
    if (mmio_base % nmce_reg::span != 0) throw ValidationError("mmio_base must be 256-byte aligned");
}

// ---------------------------------------------------------------------------

std::uint64_t Core::load(Addr addr, unsigned size) {
    ++memory_ops_;
    if (soc_->is_mmio(addr)) {
        if (size != 8) throw SimFault(Requester::core(id_), addr, "register access must be 64-bit");
        const auto v = soc_->mmio_read(addr, now_);
        now_ += soc_->config().core.mmio_cycles;
        return v;
    }
    soc_->advance_devices(now_);
    std::array<std::uint8_t, 8> buf{};
    const auto ev = soc_->mem().read(addr, std::span(buf.data(), size), Requester::core(id_), now_);
    now_ = ev.completion_cycle;
    std::uint64_t v = 0;
    for (unsigned b = 0; b < size; ++b) v |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    return v;
}

void Core::store(Addr addr, unsigned size, std::uint64_t value) {
    ++memory_ops_;
    if (soc_->is_mmio(addr)) {
        if (size != 8) throw SimFault(Requester::core(id_), addr, "register access must be 64-bit");
        soc_->mmio_write(addr, value, now_);
        now_ += soc_->config().core.mmio_cycles;
        return;
    }
    soc_->advance_devices(now_);
    std::array<std::uint8_t, 8> buf{};
    for (unsigned b = 0; b < size; ++b) buf[b] = static_cast<std::uint8_t>(value >> (8 * b));
    const auto ev = soc_->mem().write(addr, std::span(buf.data(), size), Requester::core(id_), now_);
    now_ = ev.completion_cycle;
}

void Core::alu(unsigned n) { now_ += soc_->config().core.alu_cycles * n; }
void Core::mac(unsigned n) { now_ += soc_->config().core.mac_cycles * n; }

// ---------------------------------------------------------------------------

Soc::Soc(SocConfig cfg) : cfg_((cfg.validate(), std::move(cfg))), mem_(cfg_.mem, cfg_.prefetch) {
    for (unsigned c = 0; c < cfg_.mem.cores; ++c) cores_.emplace_back(*this, c);
    for (unsigned e = 0; e < cfg_.engines; ++e) engines_.push_back(std::make_unique<Nmce>(e, mem_, cfg_.nmce));
}

void Soc::advance_devices(Cycle t) {
    if (t <= device_time_) return;
    for (Cycle c = device_time_; c < t; ++c) {
        bool any = false;
        for (auto& e : engines_) {
            if (e->busy()) {
                e->step(c);
                any = true;
            }
        }
        if (!any) break;
    }
    device_time_ = t;
}

std::uint64_t Soc::mmio_read(Addr addr, Cycle now) {
    advance_devices(now);
    const auto e = (addr - cfg_.mmio_base) / nmce_reg::span;
    return engines_[e]->mmio_read((addr - cfg_.mmio_base) % nmce_reg::span);
}

void Soc::mmio_write(Addr addr, std::uint64_t value, Cycle now) {
    advance_devices(now);
    const auto e = (addr - cfg_.mmio_base) / nmce_reg::span;
    engines_[e]->mmio_write((addr - cfg_.mmio_base) % nmce_reg::span, value, std::max(now, device_time_));
}

SimStats Soc::stats() const {
    SimStats s = mem_.stats();
    for (const auto& c : cores_) s.cycles = std::max(s.cycles, c.now());
    return s;
}

}  // namespace nearsim
