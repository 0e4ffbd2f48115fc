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

#include "nearsim/types.hpp"

namespace nearsim {

struct ByteCounters {
    std::uint64_t l2_to_nmce = 0;
    std::uint64_t dram_reads = 0;
    std::uint64_t dram_writes = 0;
    std::uint64_t link_bytes = 0;
};

struct PrefetchCounters {
    std::uint64_t issued = 0;
    std::uint64_t useful = 0;  // demand hit on a prefetched line that had already arrived
    std::uint64_t late = 0;    // demand hit on a prefetched line still in flight
    std::uint64_t dropped = 0; // out of range or already present
};

// Counters only ever grow during a run. Rates are computed on demand.
struct SimStats {
    Cycle cycles = 0;
    std::uint64_t int8_ops = 0;
    ByteCounters bytes;
    PrefetchCounters prefetch;
    std::uint64_t dram_fills = 0;
    std::uint64_t writebacks = 0;

    double ops_per_kilocycle() const {
        return cycles == 0 ? 0.0 : static_cast<double>(int8_ops) * 1000.0 / static_cast<double>(cycles);
    }
};

/// baseline_cycles / cycles; 0 when the measured run took no time.
inline double speedup(Cycle baseline_cycles, Cycle cycles) {
    return cycles == 0 ? 0.0 : static_cast<double>(baseline_cycles) / static_cast<double>(cycles);
}

}  // namespace nearsim
