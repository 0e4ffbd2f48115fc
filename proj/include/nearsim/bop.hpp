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
#include <optional>
#include <vector>

#include "nearsim/types.hpp"

namespace nearsim {

/// Integers in [1, 256] whose prime factors are all <= 5 (52 values, ascending).
std::vector<std::uint32_t> default_bop_offsets();

struct BopConfig {
    std::vector<std::uint32_t> offsets = default_bop_offsets();
    unsigned score_max = 31;
    unsigned round_max = 100;
    unsigned bad_score = 1;
    unsigned rr_entries = 256;

    /// Throws ValidationError when a field violates its constraint.
    void validate() const;
};

/**
 * Learning state of one best-offset prefetcher.
 *
 * Each trigger access tests exactly one candidate (the one under `cursor`).
 * A round is one pass over the candidate list; a phase ends when some score
 * reaches score_max or after round_max rounds.
 */
struct BopState {
    std::vector<Addr> rr_table;        // direct-mapped, one line index per slot
    std::vector<bool> rr_valid;
    std::vector<unsigned> scores;      // parallel to BopConfig::offsets
    unsigned round = 0;
    std::size_t cursor = 0;
    std::uint32_t best_offset = 1;
    bool enabled = true;
    std::uint64_t phases = 0;

    static BopState initial(const BopConfig& cfg);
};

/// Closes the current learning phase: picks the highest-scoring offset
/// (smallest offset on ties), sets `enabled` from the winning score and
/// zeroes scores, round and cursor. When every score is zero the previous
/// best offset is kept and prefetching is disabled. Returns the new best.
std::uint32_t end_phase(BopState& state, const BopConfig& cfg);

class BestOffsetPrefetcher {
public:
    explicit BestOffsetPrefetcher(BopConfig cfg);

    /// Observes one L2 demand access. `trigger` is true for misses and for
    /// first hits on prefetched lines; other accesses are ignored. Returns the
    /// line to prefetch, if prefetching is currently enabled.
    std::optional<Addr> on_access(Addr line, bool trigger);

    /// A fill completed. Prefetched fills record their base line
    /// (line - offset); demand fills are recorded only while throttled.
    void on_fill(Addr line, std::optional<std::uint32_t> prefetch_offset);

    bool rr_contains(Addr line) const;

    const BopState& state() const { return state_; }
    const BopConfig& config() const { return cfg_; }
    std::uint32_t best_offset() const { return state_.best_offset; }
    bool enabled() const { return state_.enabled; }

private:
    std::size_t rr_slot(Addr line) const;
    void rr_insert(Addr line);

    BopConfig cfg_;
    BopState state_;
};

}  // namespace nearsim
