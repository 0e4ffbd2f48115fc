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
#include <iosfwd>
#include <span>
#include <vector>

#include "nearsim/memsys.hpp"
#include "nearsim/rng.hpp"
#include "nearsim/stats.hpp"

namespace nearsim {

/// Signed int8 matrix in compressed sparse row form.
struct CsrMatrix {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint32_t> row_ptr{0};
    std::vector<std::uint32_t> col_idx;
    std::vector<std::int8_t> values;

    std::size_t nnz() const { return values.size(); }

    /// Throws ValidationError naming the first broken invariant.
    void validate() const;

    static CsrMatrix from_dense(std::uint32_t rows, std::uint32_t cols, std::span<const std::int8_t> dense);
    std::vector<std::int8_t> to_dense() const;
};

/// Each entry is nonzero independently with probability `density`.
CsrMatrix random_csr(std::uint32_t rows, std::uint32_t cols, double density, Rng& rng);

// Binary layout (all little-endian): u64 rows, u64 cols, u64 nnz,
// u32 row_ptr[rows + 1], u32 col_idx[nnz], i8 values[nnz].
CsrMatrix read_csr_binary(std::istream& in);
void write_csr_binary(std::ostream& out, const CsrMatrix& a);

/// Matrix Market coordinate format, `integer`, `real` (integral values) or
/// `pattern` fields, `general` or `symmetric`. Values must fit in int8.
CsrMatrix read_matrix_market(std::istream& in);

enum class SparseVariant : std::uint8_t { in_order, reservation_station };

struct SparseAccelConfig {
    SparseVariant variant = SparseVariant::in_order;
    unsigned rs_entries = 8;       // extra run-ahead line requests (reservation-station variant)
    unsigned lanes = 8;            // nonzeros multiplied per cycle
    unsigned x_buffer_lines = 64;  // dense-operand line buffer, LRU

    void validate() const;
};

using AccResult = std::vector<std::int32_t>;

/// Exact y = A x with 32-bit accumulators.
AccResult spmv(const CsrMatrix& a, std::span<const std::int8_t> x);

/// Line-aligned placement of the CSR arrays, the dense operand and the output.
struct CsrLayout {
    Addr row_ptr = 0;
    Addr col_idx = 0;
    Addr values = 0;
    Addr x = 0;
    Addr y = 0;
    Addr end = 0;
};

CsrLayout place_csr(const CsrMatrix& a, Addr base);
/// Writes the arrays and x into memory; y is zero-filled.
void stage_csr(MemorySystem& mem, const CsrMatrix& a, std::span<const std::int8_t> x, const CsrLayout& layout);

struct SpmvRun {
    AccResult y;
    Cycle cycles = 0;
    std::uint64_t line_requests = 0;
    SimStats stats;
};

/**
 * Streams a staged CSR matrix through the L2 port.
 *
 * Both variants walk the same ordered list of line requests, one issue per
 * cycle, and process nonzeros in order, `lanes` per cycle, committing one row
 * per cycle. The in-order variant fetches a line only when the datapath
 * reaches the first nonzero that needs it and stalls until it arrives. The
 * reservation-station variant also runs ahead of the datapath with up to
 * `rs_entries` additional requests whose data has not yet been consumed, and
 * accepts their completions in any order.
 *
 * The result is computed from the bytes in simulated memory and written back
 * to layout.y.
 */
SpmvRun spmv_timed(const CsrMatrix& a, std::span<const std::int8_t> x, const SparseAccelConfig& cfg,
                   MemorySystem& mem, const CsrLayout& layout, Cycle start = 0, unsigned accel_id = 0);

}  // namespace nearsim
