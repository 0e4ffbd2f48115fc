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

#include "nearsim/sparse.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <istream>
#include <list>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>

namespace nearsim {

void CsrMatrix::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("malformed CSR: " + msg); };
    if (row_ptr.size() != static_cast<std::size_t>(rows) + 1) fail("row_ptr must have rows + 1 entries");
    if (row_ptr.front() != 0) fail("row_ptr[0] must be 0");
    if (row_ptr.back() != values.size()) fail("row_ptr[rows] must equal nnz");
    if (col_idx.size() != values.size()) fail("col_idx and values differ in length");
    for (std::uint32_t r = 0; r < rows; ++r) {
        if (row_ptr[r] > row_ptr[r + 1]) fail("row_ptr decreases at row " + std::to_string(r));
        for (auto k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
            if (col_idx[k] >= cols) fail("column index out of range in row " + std::to_string(r));
            if (k > row_ptr[r] && col_idx[k] <= col_idx[k - 1]) {
                fail("column indices not strictly increasing in row " + std::to_string(r));
            }
        }
    }
}

CsrMatrix CsrMatrix::from_dense(std::uint32_t rows, std::uint32_t cols, std::span<const std::int8_t> dense) {
    if (dense.size() != static_cast<std::size_t>(rows) * cols) throw ValidationError("dense size mismatch");
    CsrMatrix a;
    a.rows = rows;
    a.cols = cols;
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) {
            const auto v = dense[static_cast<std::size_t>(r) * cols + c];
            if (v != 0) {
                a.col_idx.push_back(c);
                a.values.push_back(v);
            }
        }
        a.row_ptr.push_back(static_cast<std::uint32_t>(a.values.size()));
    }
    return a;
}

std::vector<std::int8_t> CsrMatrix::to_dense() const {
    std::vector<std::int8_t> d(static_cast<std::size_t>(rows) * cols, 0);
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (auto k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d[static_cast<std::size_t>(r) * cols + col_idx[k]] = values[k];
    }
    return d;
}

CsrMatrix random_csr(std::uint32_t rows, std::uint32_t cols, double density, Rng& rng) {
    CsrMatrix a;
    a.rows = rows;
    a.cols = cols;
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) {
            if (!bernoulli(rng, density)) continue;
            std::int8_t v = 0;
            while (v == 0) v = random_int8(rng);
            a.col_idx.push_back(c);
            a.values.push_back(v);
        }
        a.row_ptr.push_back(static_cast<std::uint32_t>(a.values.size()));
    }
    return a;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T read_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) throw ValidationError("truncated CSR binary");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<T>(v);
}

template <typename T>
void write_le(std::ostream& out, T value) {
    const auto v = static_cast<std::uint64_t>(value);
    std::array<char, sizeof(T)> b{};
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b.data(), b.size());
}

}  // namespace

CsrMatrix read_csr_binary(std::istream& in) {
    CsrMatrix a;
    const auto rows = read_le<std::uint64_t>(in);
    const auto cols = read_le<std::uint64_t>(in);
    const auto nnz = read_le<std::uint64_t>(in);
    if (rows > UINT32_MAX || cols > UINT32_MAX || nnz > UINT32_MAX) throw ValidationError("CSR dimensions too large");
    a.rows = static_cast<std::uint32_t>(rows);
    a.cols = static_cast<std::uint32_t>(cols);
    a.row_ptr.resize(rows + 1);
    for (auto& p : a.row_ptr) p = read_le<std::uint32_t>(in);
    a.col_idx.resize(nnz);
    for (auto& c : a.col_idx) c = read_le<std::uint32_t>(in);
    a.values.resize(nnz);
    for (auto& v : a.values) v = read_le<std::int8_t>(in);
    a.validate();
    return a;
}

void write_csr_binary(std::ostream& out, const CsrMatrix& a) {
    write_le<std::uint64_t>(out, a.rows);
    write_le<std::uint64_t>(out, a.cols);
    write_le<std::uint64_t>(out, a.nnz());
    for (auto p : a.row_ptr) write_le<std::uint32_t>(out, p);
    for (auto c : a.col_idx) write_le<std::uint32_t>(out, c);
    for (auto v : a.values) write_le<std::int8_t>(out, v);
}

CsrMatrix read_matrix_market(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty Matrix Market input");
    std::istringstream banner(line);
    std::string tag, object, format, field, symmetry;
    banner >> tag >> object >> format >> field >> symmetry;
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    if (tag != "%%MatrixMarket" || lower(object) != "matrix" || lower(format) != "coordinate") {
        throw ValidationError("only Matrix Market coordinate matrices are supported");
    }
    field = lower(field);
    symmetry = lower(symmetry);
    if (field != "integer" && field != "real" && field != "pattern") throw ValidationError("unsupported field " + field);
    if (symmetry != "general" && symmetry != "symmetric") throw ValidationError("unsupported symmetry " + symmetry);

    do {
        if (!std::getline(in, line)) throw ValidationError("missing Matrix Market size line");
    } while (line.empty() || line[0] == '%');
    std::uint64_t rows = 0, cols = 0, entries = 0;
    if (!(std::istringstream(line) >> rows >> cols >> entries)) throw ValidationError("bad Matrix Market size line");
    if (rows > UINT32_MAX || cols > UINT32_MAX) throw ValidationError("Matrix Market dimensions too large");

    std::vector<std::tuple<std::uint32_t, std::uint32_t, std::int8_t>> triples;
    for (std::uint64_t n = 0; n < entries;) {
        if (!std::getline(in, line)) throw ValidationError("truncated Matrix Market entries");
        if (line.empty() || line[0] == '%') continue;
        std::istringstream ls(line);
        std::uint64_t i = 0, j = 0;
        double v = 1.0;
        if (!(ls >> i >> j)) throw ValidationError("bad Matrix Market entry: " + line);
        if (field != "pattern" && !(ls >> v)) throw ValidationError("missing value: " + line);
        if (i < 1 || i > rows || j < 1 || j > cols) throw ValidationError("entry out of bounds: " + line);
        if (v != static_cast<double>(static_cast<long long>(v)) || v < -128 || v > 127) {
            throw ValidationError("value does not fit int8: " + line);
        }
        const auto r = static_cast<std::uint32_t>(i - 1);
        const auto c = static_cast<std::uint32_t>(j - 1);
        const auto val = static_cast<std::int8_t>(v);
        triples.emplace_back(r, c, val);
        if (symmetry == "symmetric" && r != c) triples.emplace_back(c, r, val);
        ++n;
    }
    std::sort(triples.begin(), triples.end());

    CsrMatrix a;
    a.rows = static_cast<std::uint32_t>(rows);
    a.cols = static_cast<std::uint32_t>(cols);
    a.row_ptr.assign(rows + 1, 0);
    for (std::size_t n = 0; n < triples.size(); ++n) {
        const auto [r, c, v] = triples[n];
        if (n > 0 && std::get<0>(triples[n - 1]) == r && std::get<1>(triples[n - 1]) == c) {
            throw ValidationError("duplicate Matrix Market entry");
        }
        if (v == 0) continue;
        a.col_idx.push_back(c);
        a.values.push_back(v);
        ++a.row_ptr[r + 1];
    }
    for (std::uint32_t r = 0; r < a.rows; ++r) a.row_ptr[r + 1] += a.row_ptr[r];
    a.validate();
    return a;
}

// ---------------------------------------------------------------------------

void SparseAccelConfig::validate() const {
    if (variant == SparseVariant::reservation_station && rs_entries < 1) {
        throw ValidationError("sparse.rs_entries must be >= 1");
    }
    if (lanes < 1) throw ValidationError("sparse.lanes must be >= 1");
    if (x_buffer_lines < 1) throw ValidationError("sparse.x_buffer_lines must be >= 1");
}

AccResult spmv(const CsrMatrix& a, std::span<const std::int8_t> x) {
    a.validate();
    if (x.size() != a.cols) throw ValidationError("x length must equal matrix columns");
    AccResult y(a.rows, 0);
    for (std::uint32_t r = 0; r < a.rows; ++r) {
        std::int32_t acc = 0;
        for (auto k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
            acc += static_cast<std::int32_t>(a.values[k]) * static_cast<std::int32_t>(x[a.col_idx[k]]);
        }
        y[r] = acc;
    }
    return y;
}

CsrLayout place_csr(const CsrMatrix& a, Addr base) {
    CsrLayout l;
    Addr cursor = round_up(base, kLineBytes);
    auto take = [&](std::uint64_t bytes) {
        const Addr at = cursor;
        cursor = round_up(cursor + std::max<std::uint64_t>(bytes, 1), kLineBytes);
        return at;
    };
    l.row_ptr = take(4ull * (a.rows + 1));
    l.col_idx = take(4ull * a.nnz());
    l.values = take(a.nnz());
    l.x = take(a.cols);
    l.y = take(4ull * a.rows);
    l.end = cursor;
    return l;
}

void stage_csr(MemorySystem& mem, const CsrMatrix& a, std::span<const std::int8_t> x, const CsrLayout& l) {
    a.validate();
    if (x.size() != a.cols) throw ValidationError("x length must equal matrix columns");
    std::vector<std::uint8_t> buf;
    auto put32 = [&](Addr at, std::span<const std::uint32_t> v) {
        buf.resize(v.size() * 4);
        for (std::size_t i = 0; i < v.size(); ++i) {
            for (unsigned b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<std::uint8_t>(v[i] >> (8 * b));
        }
        mem.poke(at, buf);
    };
    put32(l.row_ptr, a.row_ptr);
    put32(l.col_idx, a.col_idx);
    mem.poke(l.values, std::span(reinterpret_cast<const std::uint8_t*>(a.values.data()), a.values.size()));
    mem.poke(l.x, std::span(reinterpret_cast<const std::uint8_t*>(x.data()), x.size()));
    buf.assign(4ull * a.rows, 0);
    mem.poke(l.y, buf);
}

namespace {

struct WorkItem {
    std::vector<std::uint32_t> reqs;  // indices into the request list
    Cycle cost = 0;
};

/// Stream buffer holding the most recent line of a sequential array.
struct StreamBuffer {
    Addr line = ~Addr{0};
    std::uint32_t req = 0;
};

class RequestPlanner {
public:
    explicit RequestPlanner(unsigned x_lines) : x_capacity_(x_lines) {}

    std::uint32_t sequential(StreamBuffer& buf, Addr addr) {
        const Addr line = line_base(addr);
        if (buf.line != line) {
            buf.line = line;
            buf.req = push(line);
        }
        return buf.req;
    }

    std::uint32_t dense(Addr addr) {
        const Addr line = line_base(addr);
        for (auto it = x_lru_.begin(); it != x_lru_.end(); ++it) {
            if (it->first == line) {
                x_lru_.splice(x_lru_.begin(), x_lru_, it);
                return it->second;
            }
        }
        const auto req = push(line);
        x_lru_.emplace_front(line, req);
        if (x_lru_.size() > x_capacity_) x_lru_.pop_back();
        return req;
    }

    std::vector<Addr> requests;

private:
    std::uint32_t push(Addr line) {
        requests.push_back(line);
        return static_cast<std::uint32_t>(requests.size() - 1);
    }

    unsigned x_capacity_;
    std::list<std::pair<Addr, std::uint32_t>> x_lru_;
};

std::uint32_t peek_u32(const MemorySystem& mem, Addr at) {
    std::array<std::uint8_t, 4> b{};
    mem.peek(at, b);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::int8_t peek_i8(const MemorySystem& mem, Addr at) {
    std::array<std::uint8_t, 1> b{};
    mem.peek(at, b);
    return static_cast<std::int8_t>(b[0]);
}

}  // namespace

SpmvRun spmv_timed(const CsrMatrix& a, std::span<const std::int8_t> x, const SparseAccelConfig& cfg,
                   MemorySystem& mem, const CsrLayout& layout, Cycle start, unsigned accel_id) {
    a.validate();
    cfg.validate();
    if (x.size() != a.cols) throw ValidationError("x length must equal matrix columns");

    // Walk the staged arrays the way the datapath does: build the ordered
    // line-request list, the work items, and the functional result.
    RequestPlanner plan(cfg.x_buffer_lines);
    StreamBuffer rp_buf, col_buf, val_buf;
    std::vector<WorkItem> items;
    AccResult y(a.rows, 0);

    std::uint32_t row_begin = peek_u32(mem, layout.row_ptr);
    for (std::uint32_t r = 0; r < a.rows; ++r) {
        WorkItem head;
        head.reqs.push_back(plan.sequential(rp_buf, layout.row_ptr + 4ull * (r + 1)));
        items.push_back(std::move(head));

        const std::uint32_t row_end = peek_u32(mem, layout.row_ptr + 4ull * (r + 1));
        std::int32_t acc = 0;
        for (std::uint32_t k = row_begin; k < row_end; k += cfg.lanes) {
            WorkItem group;
            group.cost = 1;
            const auto stop = std::min<std::uint32_t>(row_end, k + cfg.lanes);
            for (std::uint32_t n = k; n < stop; ++n) {
                group.reqs.push_back(plan.sequential(col_buf, layout.col_idx + 4ull * n));
                group.reqs.push_back(plan.sequential(val_buf, layout.values + n));
                const auto col = peek_u32(mem, layout.col_idx + 4ull * n);
                if (col >= a.cols) throw SimFault(Requester::sparse(accel_id), layout.col_idx + 4ull * n, "column out of range");
                group.reqs.push_back(plan.dense(layout.x + col));
                acc += static_cast<std::int32_t>(peek_i8(mem, layout.values + n)) *
                       static_cast<std::int32_t>(peek_i8(mem, layout.x + col));
            }
            std::sort(group.reqs.begin(), group.reqs.end());
            group.reqs.erase(std::unique(group.reqs.begin(), group.reqs.end()), group.reqs.end());
            items.push_back(std::move(group));
        }
        y[r] = acc;
        WorkItem commit;
        commit.cost = 1;
        items.push_back(std::move(commit));
        row_begin = row_end;
    }

    // Timing.
    const auto& reqs = plan.requests;
    const std::size_t n_req = reqs.size();
    std::vector<Cycle> arrival(n_req, 0);
    std::vector<Cycle> retire(n_req, 0);
    std::vector<bool> retired(n_req, false);
    const std::size_t window = cfg.variant == SparseVariant::reservation_station ? cfg.rs_entries : 0;

    std::size_t next = 0;
    Cycle next_slot = start;  // earliest cycle for the next issue
    Cycle ready = start;      // cycle at which the datapath reaches the current item
    auto issue = [&](std::size_t j, Cycle t) {
        arrival[j] = mem.accel_port_read(reqs[j], t, accel_id);
        next_slot = t + 1;
    };

    for (const auto& item : items) {
        if (window > 0) {
            while (next < n_req) {
                Cycle t = next_slot;
                if (next >= window) {
                    const auto k = next - window;
                    if (!retired[k]) break;
                    t = std::max(t, retire[k]);
                }
                if (t >= ready) break;
                issue(next++, t);
            }
        }
        if (!item.reqs.empty()) {
            while (next <= item.reqs.back()) issue(next++, std::max(next_slot, ready));
        }
        Cycle s = ready;
        for (auto j : item.reqs) s = std::max(s, arrival[j]);
        for (auto j : item.reqs) {
            if (!retired[j]) {
                retired[j] = true;
                retire[j] = s;
            }
        }
        ready = s + item.cost;
    }

    // Drain the row results, one line write per cycle.
    std::vector<std::uint8_t> ybytes(4ull * a.rows);
    for (std::uint32_t r = 0; r < a.rows; ++r) {
        for (unsigned b = 0; b < 4; ++b) ybytes[4ull * r + b] = static_cast<std::uint8_t>(static_cast<std::uint32_t>(y[r]) >> (8 * b));
    }
    for (std::uint64_t off = 0; off < ybytes.size(); off += kLineBytes) {
        CacheLine line = mem.line_at(layout.y + off);
        const auto n = std::min<std::uint64_t>(kLineBytes, ybytes.size() - off);
        std::memcpy(line.data(), ybytes.data() + off, n);
        mem.accel_port_write(layout.y + off, line, ready, accel_id);
        ++ready;
    }

    SpmvRun run;
    run.y = std::move(y);
    run.cycles = ready - start;
    run.line_requests = n_req;
    run.stats = mem.stats();
    run.stats.cycles = run.cycles;
    run.stats.int8_ops = 2ull * a.nnz();
    return run;
}

}  // namespace nearsim
