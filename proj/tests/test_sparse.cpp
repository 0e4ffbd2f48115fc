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

#include <gtest/gtest.h>

#include <sstream>

#include "nearsim/sparse.hpp"
#include "oracles.hpp"

using namespace nearsim;

namespace {

std::vector<std::int8_t> random_x(std::uint32_t n, Rng& rng) {
    std::vector<std::int8_t> x(n);
    for (auto& v : x) v = random_int8(rng);
    return x;
}

struct Timed {
    SpmvRun in_order;
    SpmvRun rs;
};

Timed run_both(const CsrMatrix& a, std::span<const std::int8_t> x, bool warm) {
    Timed t;
    for (auto variant : {SparseVariant::in_order, SparseVariant::reservation_station}) {
        MemorySystem mem(CacheConfig{});
        const auto layout = place_csr(a, 4096);
        stage_csr(mem, a, x, layout);
        if (warm) mem.warm_l2(layout.row_ptr, layout.end - layout.row_ptr);
        SparseAccelConfig cfg;
        cfg.variant = variant;
        auto run = spmv_timed(a, x, cfg, mem, layout);
        // The accelerator wrote y back into memory.
        for (std::uint32_t r = 0; r < a.rows; ++r) {
            std::uint32_t v = 0;
            for (unsigned b = 0; b < 4; ++b) v |= std::uint32_t{mem.bytes()[layout.y + 4 * r + b]} << (8 * b);
            EXPECT_EQ(static_cast<std::int32_t>(v), run.y[r]);
        }
        (variant == SparseVariant::in_order ? t.in_order : t.rs) = std::move(run);
    }
    return t;
}

}  // namespace

TEST(SparseFunctional, EmptyMatrixGivesZeros) {
    CsrMatrix a;
    a.rows = 5;
    a.cols = 7;
    a.row_ptr.assign(6, 0);
    const std::vector<std::int8_t> x(7, 3);
    EXPECT_EQ(spmv(a, x), AccResult(5, 0));
    const auto t = run_both(a, x, false);
    EXPECT_EQ(t.in_order.y, AccResult(5, 0));
    EXPECT_EQ(t.rs.y, AccResult(5, 0));
}

TEST(SparseFunctional, IdentityWidensX) {
    const std::uint32_t n = 40;
    std::vector<std::int8_t> dense(n * n, 0);
    for (std::uint32_t i = 0; i < n; ++i) dense[i * n + i] = 1;
    const auto a = CsrMatrix::from_dense(n, n, dense);
    Rng rng(1);
    const auto x = random_x(n, rng);
    const auto y = spmv(a, x);
    for (std::uint32_t i = 0; i < n; ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(SparseFunctional, BothVariantsMatchDenseOracleAcrossDensities) {
    Rng rng(2024);
    for (double density : {0.0, 0.01, 0.1, 0.5, 1.0}) {
        for (std::uint32_t size : {1u, 16u, 37u, 128u, 256u}) {
            const auto rows = size;
            const auto cols = std::max<std::uint32_t>(1, size - size / 3);
            const auto a = random_csr(rows, cols, density, rng);
            ASSERT_NO_THROW(a.validate());
            const auto x = random_x(cols, rng);
            const auto expect = oracle::dense_matvec(a.to_dense(), rows, cols, x);
            EXPECT_EQ(spmv(a, x), expect);
            const auto t = run_both(a, x, size % 2 == 0);
            EXPECT_EQ(t.in_order.y, expect) << "density " << density << " size " << size;
            EXPECT_EQ(t.rs.y, expect) << "density " << density << " size " << size;
            EXPECT_LE(t.rs.cycles, t.in_order.cycles) << "density " << density << " size " << size;
            EXPECT_EQ(t.rs.line_requests, t.in_order.line_requests);
        }
    }
}

TEST(SparseTiming, SingleRowVariantsWithinOneLineFetch) {
    Rng rng(5);
    const auto a = random_csr(1, 200, 0.05, rng);
    ASSERT_LE(a.nnz(), 16u);
    const auto x = random_x(200, rng);
    const CacheConfig cfg;
    const Cycle line_fetch = cfg.l2_hit_cycles + cfg.dram_cycles + cfg.link_cycles_per_line();
    for (bool warm : {false, true}) {
        const auto t = run_both(a, x, warm);
        EXPECT_LE(t.in_order.cycles - t.rs.cycles, line_fetch);
    }
}

TEST(SparseTiming, ReservationStationOverlapsMissesOnColdStream) {
    Rng rng(9);
    const auto a = random_csr(256, 256, 0.5, rng);
    const auto x = random_x(256, rng);
    const auto t = run_both(a, x, false);
    EXPECT_LT(t.rs.cycles * 2, t.in_order.cycles);
}

TEST(SparseValidation, RejectsMalformedCsr) {
    CsrMatrix a;
    a.rows = 2;
    a.cols = 4;
    a.row_ptr = {0, 2, 3};
    a.col_idx = {1, 3, 2};
    a.values = {1, 2, 3};
    EXPECT_NO_THROW(a.validate());

    auto bad = a;
    bad.col_idx = {3, 1, 2};  // not increasing within row 0
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = a;
    bad.col_idx[2] = 4;  // column out of range
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = a;
    bad.row_ptr = {0, 3, 2};
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = a;
    bad.row_ptr[0] = 1;
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = a;
    bad.values.pop_back();
    EXPECT_THROW(bad.validate(), ValidationError);

    const std::vector<std::int8_t> x(3, 1);
    EXPECT_THROW(spmv(a, x), ValidationError);
    SparseAccelConfig cfg;
    cfg.rs_entries = 0;
    cfg.variant = SparseVariant::reservation_station;
    EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(SparseFormats, BinaryRoundTrip) {
    Rng rng(8);
    const auto a = random_csr(30, 50, 0.2, rng);
    std::stringstream buf;
    write_csr_binary(buf, a);
    const auto b = read_csr_binary(buf);
    EXPECT_EQ(b.rows, a.rows);
    EXPECT_EQ(b.cols, a.cols);
    EXPECT_EQ(b.row_ptr, a.row_ptr);
    EXPECT_EQ(b.col_idx, a.col_idx);
    EXPECT_EQ(b.values, a.values);

    std::stringstream truncated(buf.str().substr(0, buf.str().size() - 3));
    EXPECT_THROW(read_csr_binary(truncated), ValidationError);
}

TEST(SparseFormats, MatrixMarketGeneralAndSymmetric) {
    std::istringstream general(
        "%%MatrixMarket matrix coordinate integer general\n"
        "% comment\n"
        "3 3 3\n"
        "1 1 5\n"
        "3 2 -7\n"
        "2 3 1\n");
    const auto a = read_matrix_market(general);
    EXPECT_EQ(a.to_dense(), (std::vector<std::int8_t>{5, 0, 0, 0, 0, 1, 0, -7, 0}));

    std::istringstream sym(
        "%%MatrixMarket matrix coordinate integer symmetric\n"
        "2 2 2\n"
        "1 1 2\n"
        "2 1 3\n");
    EXPECT_EQ(read_matrix_market(sym).to_dense(), (std::vector<std::int8_t>{2, 3, 3, 0}));

    std::istringstream overflow(
        "%%MatrixMarket matrix coordinate integer general\n"
        "1 1 1\n"
        "1 1 300\n");
    EXPECT_THROW(read_matrix_market(overflow), ValidationError);
}
