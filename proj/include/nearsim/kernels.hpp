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
#include <span>
#include <utility>
#include <vector>

#include "nearsim/rng.hpp"
#include "nearsim/soc.hpp"
#include "nearsim/sparse.hpp"

namespace nearsim {

/// Row-major int8 matrix held by the host before staging.
struct Int8Matrix {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::int8_t> data;

    std::int8_t at(std::uint32_t r, std::uint32_t c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::span<const std::int8_t> row(std::uint32_t r) const {
        return std::span(data).subspan(static_cast<std::size_t>(r) * cols, cols);
    }
    static Int8Matrix random(std::uint32_t rows, std::uint32_t cols, Rng& rng, std::int8_t lo = -128,
                             std::int8_t hi = 127);
};

// --- the output convention shared by every matmul path --------------------
//
// An output element is produced the way the engines produce it: the inner
// dimension is cut into 64-element segments, each segment's exact dot product
// is saturated to int16, the saturated partials are summed exactly and the sum
// is saturated once more. With K <= 64 this is a plain saturating dot product.

std::int16_t segmented_dot(std::span<const std::int8_t> a, std::span<const std::int8_t> b);

/// C = A * B under the segmented convention, row-major M x N.
std::vector<std::int16_t> matmul_reference(const Int8Matrix& a, const Int8Matrix& b);

// --- dense matmul ----------------------------------------------------------

struct MatmulShape {
    std::uint32_t m = 0;
    std::uint32_t k = 0;
    std::uint32_t n = 0;

    std::uint64_t ops() const { return 2ull * m * k * n; }
};

/// A is M rows and B^T is N rows, both `pitch` bytes apart with zero padding
/// past K; C is M rows of N int16. Bases are aligned to a full bank stripe.
struct MatmulLayout {
    Addr a = 0;
    Addr bt = 0;
    Addr c = 0;
    std::uint64_t pitch = 0;
    Addr end = 0;

    static MatmulLayout place(const MatmulShape& shape, Addr base, unsigned banks);
};

/// Writes A and B^T (zero padded) into memory and, if `warm`, leaves both
/// resident in the L2.
void stage_matmul(MemorySystem& mem, const MatmulLayout& layout, const Int8Matrix& a, const Int8Matrix& b,
                  bool warm = true);
std::vector<std::int16_t> read_matmul_output(const MemorySystem& mem, const MatmulLayout& layout,
                                             const MatmulShape& shape);

/// One engine invocation: `count` dot products of a 64-byte segment of the
/// current A row against B^T rows first_row, first_row + row_step, ...
struct NmceTask {
    unsigned engine = 0;
    std::uint32_t segment = 0;
    std::uint32_t first_row = 0;
    std::uint32_t row_step = 1;
    std::uint32_t count = 0;
    Addr v2_addr = 0;
    std::int64_t stride = 0;
};

/**
 * How one output row is spread over the engines.
 *
 * A B^T row of `pitch` bytes spans `segments` lines; with line striping,
 * segment s of row r lives in bank (base_line + r * segments + s) mod banks.
 * Rows `row_period` apart share a bank for every segment, so each
 * (segment, residue) pair becomes a strided stream served entirely by the
 * engine next to that bank, cut into invocations of at most 32 rows.
 * 256-byte rows give one segment per engine; 128-byte rows give two engines
 * per row parity with two segments each.
 *
 * The CPU sums the saturated partials of all segments of an output element.
 */
struct MatmulPlan {
    MatmulShape shape;
    MatmulLayout layout;
    unsigned engines = 0;
    std::uint32_t segments = 0;
    std::uint32_t row_period = 0;
    std::vector<std::vector<NmceTask>> rounds;  // at most one task per engine per round

    /// Throws ValidationError unless every (B^T row, segment) is covered
    /// exactly once, every invocation is <= 32 operands and reads only its
    /// engine's bank.
    void validate(unsigned banks) const;
};

MatmulPlan make_matmul_plan(const MatmulShape& shape, const MatmulLayout& layout, unsigned engines, unsigned banks);

struct MatmulRun {
    std::vector<std::int16_t> c;
    SimStats stats;
};

/// Scalar software matmul; `cores` (1..4) split the output rows evenly.
MatmulRun matmul_sw(Soc& soc, const MatmulLayout& layout, const MatmulShape& shape, unsigned cores);
/// Core 0 drives all engines per the plan and accumulates their partials.
MatmulRun matmul_nmce(Soc& soc, const MatmulPlan& plan);

// --- bulk copy ---------------------------------------------------------------

enum class CopyPath : std::uint8_t { sw, nmce };

/// Copies `bytes` (multiple of 64) from src to dst. Overlapping or unaligned
/// regions are rejected with ValidationError.
SimStats memcpy_bench(Soc& soc, Addr src, Addr dst, std::uint64_t bytes, CopyPath path);

// --- strided read kernel -----------------------------------------------------

struct StrideKernel {
    std::uint64_t count = 8192;       // lines visited
    std::uint64_t stride_lines = 1;
    unsigned words_per_line = 8;      // 8-byte loads per visited line
    unsigned work_per_word = 128;     // ALU cycles of work per loaded word
    Addr base = 0;
};

/// Runs on core 0; prefetching follows the SoC configuration.
SimStats stride_kernel(Soc& soc, const StrideKernel& kernel);

// --- software sparse baseline ------------------------------------------------

struct SpmvSwRun {
    AccResult y;
    SimStats stats;
};

/// CSR spmv as scalar code on core 0, over arrays staged by stage_csr.
SpmvSwRun spmv_sw(Soc& soc, const CsrMatrix& a, const CsrLayout& layout);

// --- toy ReLU feed-forward language model ------------------------------------

struct ToyLlamaConfig {
    std::uint32_t d_model = 128;
    std::uint32_t d_ff = 512;
    std::uint32_t layers = 4;
    std::uint32_t vocab = 256;
    unsigned up_shift = 6;
    unsigned down_shift = 8;
    bool sparsity_aware_fetch = true;
    bool use_nmce = true;

    void validate() const;
    std::uint64_t parameters() const;
    /// int8 ops of one dense token pass (2 per multiply-accumulate).
    std::uint64_t dense_ops_per_token() const;
};

/// Weights staged in simulated memory. Up and output projections are stored
/// as rows of d_model (dot-product form); the down projection is stored
/// transposed, one d_model row per hidden unit, so a zero activation skips a
/// whole contiguous row.
struct ToyLlamaModel {
    ToyLlamaConfig cfg;
    Addr embed = 0;
    std::vector<Addr> w_up;
    std::vector<Addr> w_down_t;
    Addr w_out = 0;
    Addr x_buf = 0;   // current residual, d_model bytes
    Addr u_buf = 0;   // up-projection outputs, d_ff int16
    Addr logit_buf = 0;
    Addr end = 0;
};

ToyLlamaModel stage_toy_llama(MemorySystem& mem, const ToyLlamaConfig& cfg, Rng& rng, Addr base);

struct ReluRun {
    std::vector<std::vector<std::int16_t>> logits;  // one vector per token
    SimStats stats;
    std::uint64_t weight_bytes_fetched = 0;  // down-projection rows actually read
    std::uint64_t dense_weight_bytes = 0;    // what a dense pass would read
    std::uint64_t activations = 0;
    std::uint64_t zero_activations = 0;
    std::uint64_t tokens = 0;

    double activation_sparsity() const {
        return activations == 0 ? 0.0 : static_cast<double>(zero_activations) / static_cast<double>(activations);
    }
    double inferences_per_kilocycle() const {
        return stats.cycles == 0 ? 0.0 : static_cast<double>(tokens) * 1000.0 / static_cast<double>(stats.cycles);
    }
};

/// Runs each token through the layer stack on core 0 (up and output
/// projections on the engines when cfg.use_nmce). `fetch` overrides the
/// model's sparsity_aware_fetch flag.
ReluRun relu_infer(Soc& soc, const ToyLlamaModel& model, std::span<const std::uint32_t> tokens,
                   std::optional<bool> sparsity_aware_fetch = std::nullopt);

}  // namespace nearsim
