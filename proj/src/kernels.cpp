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

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "nearsim/kernels.hpp"
#include "nearsim/nmce.hpp"

namespace nearsim {

Int8Matrix Int8Matrix::random(std::uint32_t rows, std::uint32_t cols, Rng& rng, std::int8_t lo, std::int8_t hi) {
    Int8Matrix m{rows, cols, std::vector<std::int8_t>(static_cast<std::size_t>(rows) * cols)};
    for (auto& v : m.data) v = static_cast<std::int8_t>(uniform_int(rng, lo, hi));
    return m;
}

std::int16_t segmented_dot(std::span<const std::int8_t> a, std::span<const std::int8_t> b) {
    if (a.size() != b.size()) throw ValidationError("dot product operands differ in length");
    std::int64_t total = 0;
    for (std::size_t s = 0; s < a.size(); s += kLineBytes) {
        std::int32_t part = 0;
        for (std::size_t k = s; k < std::min(a.size(), s + kLineBytes); ++k) part += a[k] * b[k];
        total += saturate_int16(part);
    }
    return saturate_int16(static_cast<std::int32_t>(std::clamp<std::int64_t>(total, INT32_MIN, INT32_MAX)));
}

std::vector<std::int16_t> matmul_reference(const Int8Matrix& a, const Int8Matrix& b) {
    if (a.cols != b.rows) throw ValidationError("matmul inner dimensions differ");
    std::vector<std::int16_t> c(static_cast<std::size_t>(a.rows) * b.cols);
    std::vector<std::int8_t> col(b.rows);
    for (std::uint32_t j = 0; j < b.cols; ++j) {
        for (std::uint32_t k = 0; k < b.rows; ++k) col[k] = b.at(k, j);
        for (std::uint32_t i = 0; i < a.rows; ++i) c[static_cast<std::size_t>(i) * b.cols + j] = segmented_dot(a.row(i), col);
    }
    return c;
}

// ---------------------------------------------------------------------------

MatmulLayout MatmulLayout::place(const MatmulShape& shape, Addr base, unsigned banks) {
    if (shape.m == 0 || shape.k == 0 || shape.n == 0) throw ValidationError("matmul dimensions must be positive");
    const Addr stripe = kLineBytes * banks;
    MatmulLayout l;
    l.pitch = round_up(shape.k, kLineBytes);
    l.a = round_up(base, stripe);
    l.bt = round_up(l.a + shape.m * l.pitch, stripe);
    l.c = round_up(l.bt + shape.n * l.pitch, stripe);
    l.end = round_up(l.c + 2ull * shape.m * shape.n, stripe);
    return l;
}

namespace {

void poke_rows(MemorySystem& mem, Addr base, std::uint64_t pitch, const Int8Matrix& m, bool transpose) {
    const std::uint32_t rows = transpose ? m.cols : m.rows;
    const std::uint32_t len = transpose ? m.rows : m.cols;
    std::vector<std::uint8_t> row(pitch, 0);
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t k = 0; k < len; ++k)
            row[k] = static_cast<std::uint8_t>(transpose ? m.at(k, r) : m.at(r, k));
        mem.poke(base + r * pitch, row);
    }
}

}  // namespace

void stage_matmul(MemorySystem& mem, const MatmulLayout& layout, const Int8Matrix& a, const Int8Matrix& b, bool warm) {
    if (a.cols != b.rows) throw ValidationError("matmul inner dimensions differ");
    if (!mem.in_range(layout.a, layout.end - layout.a)) throw ValidationError("matmul operands do not fit in memory");
    poke_rows(mem, layout.a, layout.pitch, a, false);
    poke_rows(mem, layout.bt, layout.pitch, b, true);
    std::vector<std::uint8_t> zeros(2ull * a.rows * b.cols, 0);
    mem.poke(layout.c, zeros);
    if (warm) {
        mem.warm_l2(layout.a, a.rows * layout.pitch);
        mem.warm_l2(layout.bt, b.cols * layout.pitch);
    }
}

std::vector<std::int16_t> read_matmul_output(const MemorySystem& mem, const MatmulLayout& layout,
                                             const MatmulShape& shape) {
    std::vector<std::uint8_t> raw(2ull * shape.m * shape.n);
    mem.peek(layout.c, raw);
    std::vector<std::int16_t> c(static_cast<std::size_t>(shape.m) * shape.n);
    for (std::size_t i = 0; i < c.size(); ++i)
        c[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(raw[2 * i] | (raw[2 * i + 1] << 8)));
    return c;
}

// ---------------------------------------------------------------------------

MatmulPlan make_matmul_plan(const MatmulShape& shape, const MatmulLayout& layout, unsigned engines, unsigned banks) {
    if (engines == 0 || banks == 0) throw ValidationError("plan needs at least one engine and one bank");
    MatmulPlan plan;
    plan.shape = shape;
    plan.layout = layout;
    plan.engines = engines;
    plan.segments = static_cast<std::uint32_t>(layout.pitch / kLineBytes);
    plan.row_period = banks / std::gcd(plan.segments, banks);

    const Addr base_line = line_index(layout.bt);
    std::vector<std::vector<NmceTask>> queues(engines);
    for (std::uint32_t s = 0; s < plan.segments; ++s) {
        for (std::uint32_t r0 = 0; r0 < plan.row_period && r0 < shape.n; ++r0) {
            const unsigned bank = static_cast<unsigned>((base_line + std::uint64_t{r0} * plan.segments + s) % banks);
            const unsigned engine = bank % engines;
            const std::uint32_t rows = (shape.n - r0 + plan.row_period - 1) / plan.row_period;
            for (std::uint32_t first = 0; first < rows; first += kNmceMaxCount) {
                NmceTask t;
                t.engine = engine;
                t.segment = s;
                t.first_row = r0 + first * plan.row_period;
                t.row_step = plan.row_period;
                t.count = std::min(kNmceMaxCount, rows - first);
                t.v2_addr = layout.bt + std::uint64_t{t.first_row} * layout.pitch + std::uint64_t{s} * kLineBytes;
                t.stride = static_cast<std::int64_t>(plan.row_period * layout.pitch);
                queues[engine].push_back(t);
            }
        }
    }
    std::size_t depth = 0;
    for (const auto& q : queues) depth = std::max(depth, q.size());
    plan.rounds.resize(depth);
    for (std::size_t r = 0; r < depth; ++r)
        for (const auto& q : queues)
            if (r < q.size()) plan.rounds[r].push_back(q[r]);
    plan.validate(banks);
    return plan;
}

void MatmulPlan::validate(unsigned banks) const {
    std::vector<std::uint8_t> covered(static_cast<std::size_t>(shape.n) * segments, 0);
    for (const auto& round : rounds) {
        std::set<unsigned> used;
        for (const auto& t : round) {
            if (t.engine >= engines) throw ValidationError("plan uses a missing engine");
            if (!used.insert(t.engine).second) throw ValidationError("engine used twice in one round");
            if (t.count == 0 || t.count > kNmceMaxCount) throw ValidationError("invocation count out of range");
            if (t.segment >= segments) throw ValidationError("segment out of range");
            for (std::uint32_t i = 0; i < t.count; ++i) {
                const std::uint64_t row = t.first_row + std::uint64_t{i} * t.row_step;
                if (row >= shape.n) throw ValidationError("plan reads past the last B row");
                const Addr addr = t.v2_addr + static_cast<Addr>(t.stride) * i;
                if (addr != layout.bt + row * layout.pitch + std::uint64_t{t.segment} * kLineBytes)
                    throw ValidationError("operand address does not match its row");
                if (engines >= banks && bank_of(addr, banks) != t.engine % banks)
                    throw ValidationError("operand outside the engine's bank");
                auto& c = covered[row * segments + t.segment];
                if (c++ != 0) throw ValidationError("output partial computed twice");
            }
        }
    }
    if (std::find(covered.begin(), covered.end(), 0) != covered.end())
        throw ValidationError("plan leaves an output partial uncomputed");
}

// ---------------------------------------------------------------------------

namespace {

// Per-output-element software cost: two byte loads, a multiply-accumulate and
// three loop instructions (two pointer bumps and the compare-and-branch) for
// every k; a clamp and add per 64-element segment; a final clamp and store.
void sw_output(Core& core, const MatmulLayout& l, const MatmulShape& s, std::uint32_t i, std::uint32_t j) {
    const Addr arow = l.a + std::uint64_t{i} * l.pitch;
    const Addr brow = l.bt + std::uint64_t{j} * l.pitch;
    std::int64_t total = 0;
    for (std::uint32_t seg = 0; seg < s.k; seg += kLineBytes) {
        std::int32_t part = 0;
        for (std::uint32_t k = seg; k < std::min(s.k, seg + static_cast<std::uint32_t>(kLineBytes)); ++k) {
            const std::int32_t av = core.load_i8(arow + k);
            const std::int32_t bv = core.load_i8(brow + k);
            part += av * bv;
            core.mac();
            core.alu(3);
        }
        total += saturate_int16(part);
        core.alu(3);
    }
    const auto out = saturate_int16(static_cast<std::int32_t>(std::clamp<std::int64_t>(total, INT32_MIN, INT32_MAX)));
    core.alu(2);
    core.store(l.c + 2 * (std::uint64_t{i} * s.n + j), 2, static_cast<std::uint16_t>(out));
}

SimStats kernel_stats(const Soc& soc, Cycle start, Cycle end, std::uint64_t ops) {
    SimStats s = soc.stats();
    s.cycles = end - start;
    s.int8_ops = ops;
    return s;
}

Cycle latest_clock(Soc& soc) {
    Cycle t = 0;
    for (unsigned c = 0; c < soc.cores(); ++c) t = std::max(t, soc.core(c).now());
    return t;
}

}  // namespace

MatmulRun matmul_sw(Soc& soc, const MatmulLayout& layout, const MatmulShape& shape, unsigned cores) {
    if (cores == 0 || cores > soc.cores()) throw ValidationError("core count out of range");
    const Cycle start = latest_clock(soc);
    struct Cursor {
        std::uint32_t row, end, col;
    };
    std::vector<Cursor> cur;
    for (unsigned c = 0; c < cores; ++c) {
        soc.core(c).wait_until(start);
        const auto lo = static_cast<std::uint32_t>(std::uint64_t{shape.m} * c / cores);
        const auto hi = static_cast<std::uint32_t>(std::uint64_t{shape.m} * (c + 1) / cores);
        cur.push_back({lo, hi, 0});
    }
    // Interleave output elements, always advancing the core that is furthest
    // behind, so memory requests reach the shared hierarchy in time order.
    while (true) {
        int pick = -1;
        for (unsigned c = 0; c < cores; ++c) {
            if (cur[c].row >= cur[c].end) continue;
            if (pick < 0 || soc.core(c).now() < soc.core(static_cast<unsigned>(pick)).now()) pick = static_cast<int>(c);
        }
        if (pick < 0) break;
        auto& k = cur[static_cast<unsigned>(pick)];
        sw_output(soc.core(static_cast<unsigned>(pick)), layout, shape, k.row, k.col);
        if (++k.col == shape.n) {
            k.col = 0;
            ++k.row;
        }
    }
    MatmulRun run;
    run.stats = kernel_stats(soc, start, latest_clock(soc), shape.ops());
    run.c = read_matmul_output(soc.mem(), layout, shape);
    return run;
}

namespace {

// The driver keeps a copy of every engine register it has written and skips
// writes that would not change anything.
struct EngineShadow {
    std::array<std::uint64_t, 8> v1{};
    std::optional<std::pair<std::uint32_t, std::uint32_t>> v1_row_segment;
    std::optional<std::uint64_t> v2_addr, stride, op, dst_addr;
};

void write_if_changed(Core& core, Addr reg, std::optional<std::uint64_t>& shadow, std::uint64_t value) {
    if (shadow == value) return;
    core.store(reg, 8, value);
    shadow = value;
}

void wait_done(Core& core, Addr base) {
    while (true) {
        const auto st = core.load(base + nmce_reg::status, 8);
        const auto state = static_cast<NmceStatus>(st & 0xff);
        if (state == NmceStatus::done) return;
        if (state == NmceStatus::error) throw SimFault(Requester::core(core.id()), base, "engine reported an error");
        core.alu();
    }
}

struct MatmulDriver {
    Soc& soc;
    Core& core;
    std::vector<EngineShadow> shadow;

    MatmulDriver(Soc& s, unsigned core_id) : soc(s), core(s.core(core_id)), shadow(s.engines()) {}

    void run(const MatmulPlan& plan, std::uint32_t first_row, std::uint32_t rows) {
        const auto& l = plan.layout;
        const auto& sh = plan.shape;
        std::vector<std::int32_t> acc(sh.n);
        // A may have been rewritten since the previous run; only the register
        // contents themselves are still known.
        for (auto& s : shadow) s.v1_row_segment.reset();
        for (std::uint32_t i = first_row; i < first_row + rows; ++i) {
            std::fill(acc.begin(), acc.end(), 0);
            const Addr arow = l.a + std::uint64_t{i} * l.pitch;
            for (const auto& round : plan.rounds) {
                for (const auto& t : round) program(t, arow, i, sh.k);
                for (const auto& t : round) {
                    wait_done(core, soc.engine_base(t.engine));
                    collect(t, acc);
                }
            }
            // Clamped outputs are packed into aligned 8-byte stores.
            const Addr crow = l.c + 2ull * i * sh.n;
            for (std::uint32_t j = 0; j < sh.n;) {
                const Addr at = crow + 2ull * j;
                const auto lanes = static_cast<std::uint32_t>(std::min<std::uint64_t>((8 - at % 8) / 2, sh.n - j));
                std::uint64_t word = 0;
                for (std::uint32_t q = 0; q < lanes; ++q) {
                    word |= std::uint64_t{static_cast<std::uint16_t>(saturate_int16(acc[j + q]))} << (16 * q);
                    core.alu();
                }
                core.store(at, 2 * lanes, word);
                j += lanes;
            }
        }
    }

    void program(const NmceTask& t, Addr arow, std::uint32_t row, std::uint32_t k) {
        auto& s = shadow[t.engine];
        const Addr base = soc.engine_base(t.engine);
        if (s.v1_row_segment != std::pair{row, t.segment}) {
            for (unsigned w = 0; w < 8; ++w) {
                const std::uint64_t off = std::uint64_t{t.segment} * kLineBytes + 8 * w;
                const std::uint64_t value = off < k ? core.load(arow + off, 8) : 0;
                if (s.v1[w] != value) {
                    core.store(base + nmce_reg::v1 + 8 * w, 8, value);
                    s.v1[w] = value;
                }
            }
            s.v1_row_segment = std::pair{row, t.segment};
        }
        write_if_changed(core, base + nmce_reg::op, s.op, static_cast<std::uint64_t>(NmceOp::mac));
        write_if_changed(core, base + nmce_reg::v2_addr, s.v2_addr, t.v2_addr);
        write_if_changed(core, base + nmce_reg::stride, s.stride, static_cast<std::uint64_t>(t.stride));
        core.store(base + nmce_reg::count, 8, t.count);
    }

    void collect(const NmceTask& t, std::vector<std::int32_t>& acc) {
        const Addr base = soc.engine_base(t.engine);
        for (std::uint32_t w = 0; w * 4 < t.count; ++w) {
            const auto word = core.load(base + nmce_reg::result + 8 * w, 8);
            for (std::uint32_t q = 0; q < 4 && w * 4 + q < t.count; ++q) {
                const auto v = static_cast<std::int16_t>(static_cast<std::uint16_t>(word >> (16 * q)));
                acc[t.first_row + (w * 4 + q) * t.row_step] += v;
                core.alu();
            }
        }
    }
};

}  // namespace

MatmulRun matmul_nmce(Soc& soc, const MatmulPlan& plan) {
    plan.validate(soc.config().mem.banks);
    if (plan.engines > soc.engines()) throw ValidationError("plan needs more engines than the SoC has");
    Core& core = soc.core(0);
    const Cycle start = core.now();
    MatmulDriver driver(soc, 0);
    driver.run(plan, 0, plan.shape.m);
    MatmulRun run;
    run.stats = kernel_stats(soc, start, core.now(), plan.shape.ops());
    run.c = read_matmul_output(soc.mem(), plan.layout, plan.shape);
    return run;
}

// ---------------------------------------------------------------------------

SimStats memcpy_bench(Soc& soc, Addr src, Addr dst, std::uint64_t bytes, CopyPath path) {
    auto& mem = soc.mem();
    if (bytes % kLineBytes != 0) throw ValidationError("copy size must be a multiple of 64 bytes");
    if (!is_line_aligned(src) || !is_line_aligned(dst)) throw ValidationError("copy regions must be line aligned");
    if (!mem.in_range(src, bytes) || !mem.in_range(dst, bytes)) throw ValidationError("copy region out of range");
    if (src < dst + bytes && dst < src + bytes && bytes != 0) throw ValidationError("copy regions overlap");

    Core& core = soc.core(0);
    const Cycle start = core.now();
    if (path == CopyPath::sw) {
        for (std::uint64_t off = 0; off < bytes; off += 8) {
            core.store(dst + off, 8, core.load(src + off, 8));
            core.alu(2);
        }
    } else {
        std::vector<EngineShadow> shadow(soc.engines());
        const std::uint64_t chunk = kNmceMaxCount * kLineBytes;
        for (std::uint64_t off = 0; off < bytes;) {
            std::vector<unsigned> launched;
            for (unsigned e = 0; e < soc.engines() && off < bytes; ++e, off += chunk) {
                const Addr base = soc.engine_base(e);
                auto& s = shadow[e];
                const auto lines = std::min(chunk, bytes - off) / kLineBytes;
                write_if_changed(core, base + nmce_reg::op, s.op, static_cast<std::uint64_t>(NmceOp::memcpy));
                write_if_changed(core, base + nmce_reg::stride, s.stride, kLineBytes);
                write_if_changed(core, base + nmce_reg::v2_addr, s.v2_addr, src + off);
                write_if_changed(core, base + nmce_reg::dst_addr, s.dst_addr, dst + off);
                core.store(base + nmce_reg::count, 8, lines);
                launched.push_back(e);
            }
            for (unsigned e : launched) wait_done(core, soc.engine_base(e));
        }
    }
    return kernel_stats(soc, start, core.now(), 0);
}

SimStats stride_kernel(Soc& soc, const StrideKernel& k) {
    if (k.stride_lines == 0) throw ValidationError("stride must be at least one line");
    if (k.words_per_line == 0 || k.words_per_line > kLineBytes / 8)
        throw ValidationError("words per line must be in [1, 8]");
    if (k.count > 0 && !soc.mem().in_range(k.base, ((k.count - 1) * k.stride_lines + 1) * kLineBytes))
        throw ValidationError("stride kernel footprint exceeds memory");
    Core& core = soc.core(0);
    const Cycle start = core.now();
    for (std::uint64_t i = 0; i < k.count; ++i) {
        const Addr line = k.base + i * k.stride_lines * kLineBytes;
        for (unsigned w = 0; w < k.words_per_line; ++w) {
            core.load(line + 8 * w, 8);
            core.alu(k.work_per_word);
        }
    }
    return kernel_stats(soc, start, core.now(), 0);
}

SpmvSwRun spmv_sw(Soc& soc, const CsrMatrix& a, const CsrLayout& l) {
    Core& core = soc.core(0);
    const Cycle start = core.now();
    SpmvSwRun run;
    run.y.assign(a.rows, 0);
    auto begin = static_cast<std::uint32_t>(core.load(l.row_ptr, 4));
    for (std::uint32_t r = 0; r < a.rows; ++r) {
        const auto end = static_cast<std::uint32_t>(core.load(l.row_ptr + 4ull * (r + 1), 4));
        std::int32_t acc = 0;
        for (std::uint32_t k = begin; k < end; ++k) {
            const auto col = static_cast<std::uint32_t>(core.load(l.col_idx + 4ull * k, 4));
            const std::int32_t v = core.load_i8(l.values + k);
            const std::int32_t xv = core.load_i8(l.x + col);
            acc += v * xv;
            core.mac();
            core.alu(4);
        }
        core.store(l.y + 4ull * r, 4, static_cast<std::uint32_t>(acc));
        core.alu(3);
        run.y[r] = acc;
        begin = end;
    }
    run.stats = kernel_stats(soc, start, core.now(), 2 * a.nnz());
    return run;
}

// ---------------------------------------------------------------------------

void ToyLlamaConfig::validate() const {
    if (d_model == 0 || d_model % kLineBytes != 0) throw ValidationError("d_model must be a positive multiple of 64");
    if (d_ff == 0 || d_ff % kLineBytes != 0) throw ValidationError("d_ff must be a positive multiple of 64");
    if (layers == 0) throw ValidationError("model needs at least one layer");
    if (vocab == 0) throw ValidationError("vocabulary must not be empty");
    if (up_shift > 15 || down_shift > 31) throw ValidationError("shift out of range");
}

std::uint64_t ToyLlamaConfig::parameters() const {
    return 2ull * vocab * d_model + 2ull * layers * d_model * d_ff;
}

std::uint64_t ToyLlamaConfig::dense_ops_per_token() const {
    return 2ull * (2ull * layers * d_model * d_ff + std::uint64_t{vocab} * d_model);
}

ToyLlamaModel stage_toy_llama(MemorySystem& mem, const ToyLlamaConfig& cfg, Rng& rng, Addr base) {
    cfg.validate();
    ToyLlamaModel m;
    m.cfg = cfg;
    Addr next = round_up(base, kLineBytes);
    auto place = [&](std::uint64_t rows, std::uint64_t cols, std::int8_t lo, std::int8_t hi) {
        const Addr at = next;
        std::vector<std::uint8_t> buf(rows * cols);
        for (auto& b : buf) b = static_cast<std::uint8_t>(uniform_int(rng, lo, hi));
        if (!mem.in_range(at, buf.size())) throw ValidationError("model does not fit in memory");
        mem.poke(at, buf);
        next = round_up(at + buf.size(), kLineBytes);
        return at;
    };
    m.embed = place(cfg.vocab, cfg.d_model, -64, 63);
    for (std::uint32_t l = 0; l < cfg.layers; ++l) {
        m.w_up.push_back(place(cfg.d_ff, cfg.d_model, -16, 16));
        m.w_down_t.push_back(place(cfg.d_ff, cfg.d_model, -16, 16));
    }
    m.w_out = place(cfg.vocab, cfg.d_model, -16, 16);
    m.x_buf = place(1, cfg.d_model, 0, 0);
    m.u_buf = place(1, 2ull * cfg.d_ff, 0, 0);
    m.logit_buf = place(1, round_up(2ull * cfg.vocab, kLineBytes), 0, 0);
    m.end = next;
    return m;
}

namespace {

std::int8_t clamp_i8(std::int32_t v) { return static_cast<std::int8_t>(std::clamp(v, -128, 127)); }

}  // namespace

ReluRun relu_infer(Soc& soc, const ToyLlamaModel& model, std::span<const std::uint32_t> tokens,
                   std::optional<bool> sparsity_aware_fetch) {
    const auto& cfg = model.cfg;
    cfg.validate();
    const bool sparse = sparsity_aware_fetch.value_or(cfg.sparsity_aware_fetch);
    const unsigned banks = soc.config().mem.banks;
    Core& core = soc.core(0);
    const Cycle start = core.now();
    MatmulDriver driver(soc, 0);

    // Both projections computed from x_buf are single-row matmuls whose
    // "B^T" is the weight matrix itself.
    auto matvec = [&](Addr weights, std::uint32_t rows, Addr out) {
        const MatmulShape shape{1, cfg.d_model, rows};
        MatmulLayout l;
        l.a = model.x_buf;
        l.bt = weights;
        l.c = out;
        l.pitch = cfg.d_model;
        l.end = out + 2ull * rows;
        if (cfg.use_nmce) {
            driver.run(make_matmul_plan(shape, l, soc.engines(), banks), 0, 1);
        } else {
            for (std::uint32_t j = 0; j < rows; ++j) sw_output(core, l, shape, 0, j);
        }
    };

    ReluRun run;
    std::vector<std::int32_t> acc(cfg.d_model);
    std::vector<std::int8_t> h(cfg.d_ff);
    for (const auto token : tokens) {
        if (token >= cfg.vocab) throw ValidationError("token outside the vocabulary");
        for (std::uint32_t w = 0; w < cfg.d_model; w += 8)
            core.store(model.x_buf + w, 8, core.load(model.embed + std::uint64_t{token} * cfg.d_model + w, 8));

        for (std::uint32_t layer = 0; layer < cfg.layers; ++layer) {
            matvec(model.w_up[layer], cfg.d_ff, model.u_buf);
            for (std::uint32_t k = 0; k < cfg.d_ff; ++k) {
                const auto u = static_cast<std::int16_t>(core.load(model.u_buf + 2ull * k, 2));
                h[k] = clamp_i8(std::max<std::int32_t>(u, 0) >> cfg.up_shift);
                core.alu(3);
                ++run.activations;
                if (h[k] == 0) ++run.zero_activations;
            }

            std::fill(acc.begin(), acc.end(), 0);
            const Addr wd = model.w_down_t[layer];
            for (std::uint32_t k = 0; k < cfg.d_ff; ++k) {
                run.dense_weight_bytes += cfg.d_model;
                core.alu();
                if (sparse && h[k] == 0) continue;
                run.weight_bytes_fetched += cfg.d_model;
                for (std::uint32_t m = 0; m < cfg.d_model; m += 8) {
                    const auto word = core.load(wd + std::uint64_t{k} * cfg.d_model + m, 8);
                    for (unsigned b = 0; b < 8; ++b)
                        acc[m + b] += h[k] * static_cast<std::int8_t>(static_cast<std::uint8_t>(word >> (8 * b)));
                    core.mac(8);
                }
            }

            for (std::uint32_t m = 0; m < cfg.d_model; m += 8) {
                const auto word = core.load(model.x_buf + m, 8);
                std::uint64_t next = 0;
                for (unsigned b = 0; b < 8; ++b) {
                    const auto x = static_cast<std::int8_t>(static_cast<std::uint8_t>(word >> (8 * b)));
                    const auto y = clamp_i8(x + (acc[m + b] >> cfg.down_shift));
                    next |= std::uint64_t{static_cast<std::uint8_t>(y)} << (8 * b);
                }
                core.alu(2 * 8);
                core.store(model.x_buf + m, 8, next);
            }
        }

        matvec(model.w_out, cfg.vocab, model.logit_buf);
        std::vector<std::uint8_t> raw(2ull * cfg.vocab);
        soc.mem().peek(model.logit_buf, raw);
        auto& logits = run.logits.emplace_back(cfg.vocab);
        for (std::uint32_t v = 0; v < cfg.vocab; ++v)
            logits[v] = static_cast<std::int16_t>(static_cast<std::uint16_t>(raw[2 * v] | (raw[2 * v + 1] << 8)));
        ++run.tokens;
    }
    run.stats = kernel_stats(soc, start, core.now(), cfg.dense_ops_per_token() * run.tokens);
    return run;
}

}  // namespace nearsim
