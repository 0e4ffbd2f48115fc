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

#include "nearsim/bop.hpp"

#include <algorithm>
#include <bit>
#include <string>

namespace nearsim {

std::vector<std::uint32_t> default_bop_offsets() {
    std::vector<std::uint32_t> out;
    for (std::uint32_t n = 1; n <= 256; ++n) {
        std::uint32_t r = n;
        for (std::uint32_t p : {2u, 3u, 5u}) {
            while (r % p == 0) r /= p;
        }
        if (r == 1) out.push_back(n);
    }
    return out;
}

void BopConfig::validate() const {
    if (offsets.empty()) throw ValidationError("prefetcher.offsets must not be empty");
    for (auto d : offsets) {
        if (d < 1) throw ValidationError("prefetcher.offsets entries must be >= 1");
    }
    if (score_max <= bad_score) throw ValidationError("prefetcher.score_max must exceed prefetcher.bad_score");
    if (round_max < 1) throw ValidationError("prefetcher.round_max must be >= 1");
    if (rr_entries == 0 || !std::has_single_bit(rr_entries)) {
        throw ValidationError("prefetcher.rr_entries must be a power of two");
    }
}

BopState BopState::initial(const BopConfig& cfg) {
    BopState s;
    s.rr_table.assign(cfg.rr_entries, 0);
    s.rr_valid.assign(cfg.rr_entries, false);
    s.scores.assign(cfg.offsets.size(), 0);
    s.best_offset = *std::min_element(cfg.offsets.begin(), cfg.offsets.end());
    return s;
}

std::uint32_t end_phase(BopState& state, const BopConfig& cfg) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cfg.offsets.size(); ++i) {
        const bool higher = state.scores[i] > state.scores[best];
        const bool tie_nearer = state.scores[i] == state.scores[best] && cfg.offsets[i] < cfg.offsets[best];
        if (higher || tie_nearer) best = i;
    }
    const unsigned top = state.scores[best];
    if (top == 0) {
        state.enabled = false;
    } else {
        state.best_offset = cfg.offsets[best];
        state.enabled = top > cfg.bad_score;
    }
    std::fill(state.scores.begin(), state.scores.end(), 0u);
    state.round = 0;
    state.cursor = 0;
    ++state.phases;
    return state.best_offset;
}

BestOffsetPrefetcher::BestOffsetPrefetcher(BopConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    state_ = BopState::initial(cfg_);
}

std::size_t BestOffsetPrefetcher::rr_slot(Addr line) const {
    const unsigned bits = static_cast<unsigned>(std::countr_zero(cfg_.rr_entries));
    return static_cast<std::size_t>((line ^ (line >> bits)) & (cfg_.rr_entries - 1));
}

void BestOffsetPrefetcher::rr_insert(Addr line) {
    const auto slot = rr_slot(line);
    state_.rr_table[slot] = line;
    state_.rr_valid[slot] = true;
}

bool BestOffsetPrefetcher::rr_contains(Addr line) const {
    const auto slot = rr_slot(line);
    return state_.rr_valid[slot] && state_.rr_table[slot] == line;
}

std::optional<Addr> BestOffsetPrefetcher::on_access(Addr line, bool trigger) {
    if (!trigger) return std::nullopt;

    bool phase_over = false;
    const std::uint32_t candidate = cfg_.offsets[state_.cursor];
    if (line >= candidate && rr_contains(line - candidate)) {
        auto& score = state_.scores[state_.cursor];
        ++score;
        if (score >= cfg_.score_max) phase_over = true;
    }
    if (++state_.cursor == cfg_.offsets.size()) {
        state_.cursor = 0;
        if (++state_.round >= cfg_.round_max) phase_over = true;
    }

    std::optional<Addr> request;
    if (state_.enabled) request = line + state_.best_offset;

    if (phase_over) end_phase(state_, cfg_);
    return request;
}

void BestOffsetPrefetcher::on_fill(Addr line, std::optional<std::uint32_t> prefetch_offset) {
    if (prefetch_offset) {
        if (line >= *prefetch_offset) rr_insert(line - *prefetch_offset);
    } else if (!state_.enabled) {
        rr_insert(line);
    }
}

}  // namespace nearsim
