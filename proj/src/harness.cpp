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

#include "nearsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <yaml-cpp/yaml.h>

namespace nearsim {

std::string to_string(BenchKind kind) {
    switch (kind) {
        case BenchKind::matmul: return "matmul";
        case BenchKind::memcpy: return "memcpy";
        case BenchKind::spmv: return "spmv";
        case BenchKind::stride: return "stride";
        case BenchKind::relu_infer: return "relu_infer";
    }
    return "?";
}

const std::vector<std::string>& known_paths(BenchKind kind) {
    static const std::map<BenchKind, std::vector<std::string>> paths{
        {BenchKind::matmul, {"single", "quad", "nmce"}},
        {BenchKind::memcpy, {"sw", "nmce"}},
        {BenchKind::spmv, {"sw", "in_order", "reservation_station"}},
        {BenchKind::stride, {"off", "on", "configured"}},
        {BenchKind::relu_infer, {"dense", "sparse"}},
    };
    return paths.at(kind);
}

void BenchmarkSpec::validate() const {
    if (name.empty()) throw ValidationError("benchmark name must not be empty");
    if (paths.empty()) throw ValidationError("benchmark '" + name + "' lists no paths");
    const auto& known = known_paths(kind);
    std::set<std::string> seen;
    for (const auto& p : paths) {
        if (std::find(known.begin(), known.end(), p) == known.end())
            throw ValidationError("benchmark '" + name + "': unknown path '" + p + "' for kind " + to_string(kind));
        if (!seen.insert(p).second) throw ValidationError("benchmark '" + name + "': path '" + p + "' listed twice");
    }
    switch (kind) {
        case BenchKind::matmul:
            if (shape.m == 0 || shape.k == 0 || shape.n == 0)
                throw ValidationError("benchmark '" + name + "': matmul dimensions must be positive");
            break;
        case BenchKind::memcpy:
            if (bytes % kLineBytes != 0)
                throw ValidationError("benchmark '" + name + "': bytes must be a multiple of 64");
            break;
        case BenchKind::spmv:
            if (!matrix_file && (rows == 0 || cols == 0))
                throw ValidationError("benchmark '" + name + "': matrix dimensions must be positive");
            if (!(density >= 0.0 && density <= 1.0))
                throw ValidationError("benchmark '" + name + "': density must be in [0, 1]");
            break;
        case BenchKind::stride:
            if (stride.stride_lines == 0)
                throw ValidationError("benchmark '" + name + "': stride_lines must be at least 1");
            if (stride.words_per_line == 0 || stride.words_per_line > 8)
                throw ValidationError("benchmark '" + name + "': words_per_line must be in [1, 8]");
            break;
        case BenchKind::relu_infer:
            model.validate();
            break;
    }
}

std::uint64_t BenchmarkSpec::ops() const {
    switch (kind) {
        case BenchKind::matmul: return shape.ops();
        case BenchKind::relu_infer: return model.dense_ops_per_token() * tokens;
        default: return 0;
    }
}

void RunConfig::validate() const {
    soc.validate();
    sparse.validate();
    prefetch.validate();
    std::set<std::string> names;
    for (const auto& b : benchmarks) {
        b.validate();
        if (!names.insert(b.name).second) throw ValidationError("benchmark name '" + b.name + "' used twice");
    }
}

std::vector<BenchmarkSpec> default_suite() {
    std::vector<BenchmarkSpec> suite;
    for (std::uint32_t n : {8u, 64u, 256u}) {
        BenchmarkSpec b;
        b.name = "matmul_" + std::to_string(n);
        b.kind = BenchKind::matmul;
        b.paths = known_paths(b.kind);
        b.shape = {n, n, n};
        suite.push_back(b);
    }
    for (auto [label, bytes] : {std::pair{"4k", 4096ull}, std::pair{"1m", 1ull << 20}}) {
        BenchmarkSpec b;
        b.name = std::string("memcpy_") + label;
        b.kind = BenchKind::memcpy;
        b.paths = known_paths(b.kind);
        b.bytes = bytes;
        suite.push_back(b);
    }
    for (auto [label, density] : {std::pair{"d10", 0.1}, std::pair{"d50", 0.5}}) {
        BenchmarkSpec b;
        b.name = std::string("spmv_256_") + label;
        b.kind = BenchKind::spmv;
        b.paths = known_paths(b.kind);
        b.density = density;
        suite.push_back(b);
    }
    {
        BenchmarkSpec b;
        b.name = "stride_1";
        b.kind = BenchKind::stride;
        b.paths = {"off", "on"};
        suite.push_back(b);
        // Beyond the largest candidate offset (256 lines); 1000 lines still
        // fit in the default 16 MiB.
        b.name = "stride_257";
        b.stride.stride_lines = 257;
        b.stride.count = 1000;
        suite.push_back(b);
    }
    {
        BenchmarkSpec b;
        b.name = "relu_ffn";
        b.kind = BenchKind::relu_infer;
        b.paths = known_paths(b.kind);
        suite.push_back(b);
    }
    return suite;
}

// --- configuration parsing ----------------------------------------------------

namespace {

class ConfigReader {
public:
    explicit ConfigReader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& at, const std::string& what) const {
        throw ConfigError(source_, line_of(at), what);
    }

    static int line_of(const YAML::Node& n) {
        const auto mark = n.Mark();
        return mark.line < 0 ? 1 : mark.line + 1;
    }

    void expect_map(const YAML::Node& n, const std::string& where) const {
        if (!n.IsMap()) fail(n, where + " must be a mapping");
    }

    void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& where) const {
        for (const auto& kv : map) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.count(key)) fail(kv.first, "unknown key '" + key + "' in " + where);
        }
    }

    template <typename T>
    void read(const YAML::Node& map, const std::string& key, T& out, const std::string& where) const {
        const YAML::Node n = map[key];
        if (!n) return;
        if (!n.IsScalar()) fail(n, where + "." + key + " must be a scalar");
        try {
            out = n.as<T>();
        } catch (const YAML::Exception&) {
            fail(n, where + "." + key + " has an invalid value '" + n.Scalar() + "'");
        }
    }

    /// Runs `check` and re-raises its ValidationError at the node's line.
    template <typename F>
    void anchored(const YAML::Node& at, F&& check) const {
        try {
            check();
        } catch (const ConfigError&) {
            throw;
        } catch (const ValidationError& e) {
            fail(at, e.what());
        }
    }

private:
    std::string source_;
};

BenchmarkSpec parse_benchmark(const ConfigReader& r, const YAML::Node& n, std::size_t index) {
    const std::string where = "benchmarks[" + std::to_string(index) + "]";
    r.expect_map(n, where);
    BenchmarkSpec b;
    if (!n["kind"]) r.fail(n, where + " needs a 'kind'");
    std::string kind;
    r.read(n, "kind", kind, where);
    static const std::map<std::string, BenchKind> kinds{{"matmul", BenchKind::matmul},
                                                        {"memcpy", BenchKind::memcpy},
                                                        {"spmv", BenchKind::spmv},
                                                        {"stride", BenchKind::stride},
                                                        {"relu_infer", BenchKind::relu_infer}};
    const auto it = kinds.find(kind);
    if (it == kinds.end()) r.fail(n["kind"], "unknown benchmark kind '" + kind + "'");
    b.kind = it->second;

    std::set<std::string> allowed{"name", "kind", "paths"};
    switch (b.kind) {
        case BenchKind::matmul: allowed.insert({"m", "k", "n"}); break;
        case BenchKind::memcpy: allowed.insert("bytes"); break;
        case BenchKind::spmv: allowed.insert({"rows", "cols", "density", "matrix_file"}); break;
        case BenchKind::stride: allowed.insert({"count", "stride_lines", "words_per_line", "work_per_word"}); break;
        case BenchKind::relu_infer:
            allowed.insert({"d_model", "d_ff", "layers", "vocab", "up_shift", "down_shift", "tokens", "use_nmce"});
            break;
    }
    r.check_keys(n, allowed, where + " (kind " + kind + ")");

    b.name = to_string(b.kind) + "_" + std::to_string(index);
    r.read(n, "name", b.name, where);
    if (const auto p = n["paths"]) {
        if (p.IsScalar()) {
            b.paths = {p.as<std::string>()};
        } else if (p.IsSequence()) {
            for (const auto& e : p) {
                if (!e.IsScalar()) r.fail(e, where + ".paths entries must be strings");
                b.paths.push_back(e.as<std::string>());
            }
        } else {
            r.fail(p, where + ".paths must be a list");
        }
    } else if (b.kind == BenchKind::stride) {
        b.paths = {"off", "on"};
    } else {
        b.paths = known_paths(b.kind);
    }
    r.read(n, "m", b.shape.m, where);
    r.read(n, "k", b.shape.k, where);
    r.read(n, "n", b.shape.n, where);
    r.read(n, "bytes", b.bytes, where);
    r.read(n, "rows", b.rows, where);
    r.read(n, "cols", b.cols, where);
    r.read(n, "density", b.density, where);
    if (n["matrix_file"]) {
        std::string file;
        r.read(n, "matrix_file", file, where);
        b.matrix_file = file;
    }
    r.read(n, "count", b.stride.count, where);
    r.read(n, "stride_lines", b.stride.stride_lines, where);
    r.read(n, "words_per_line", b.stride.words_per_line, where);
    r.read(n, "work_per_word", b.stride.work_per_word, where);
    r.read(n, "d_model", b.model.d_model, where);
    r.read(n, "d_ff", b.model.d_ff, where);
    r.read(n, "layers", b.model.layers, where);
    r.read(n, "vocab", b.model.vocab, where);
    r.read(n, "up_shift", b.model.up_shift, where);
    r.read(n, "down_shift", b.model.down_shift, where);
    r.read(n, "tokens", b.tokens, where);
    r.read(n, "use_nmce", b.model.use_nmce, where);
    r.anchored(n, [&] { b.validate(); });
    return b;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
    ConfigReader r(source);
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source, e.mark.line + 1, e.msg);
    }
    RunConfig cfg;
    if (!root || root.IsNull()) return cfg;
    r.expect_map(root, "configuration");
    r.check_keys(root, {"seed", "memsys", "core", "nmce", "prefetcher", "sparse", "benchmarks"}, "configuration");
    r.read(root, "seed", cfg.seed, "seed");

    if (const auto m = root["memsys"]) {
        r.expect_map(m, "memsys");
        r.check_keys(m,
                     {"l1_size", "l1_assoc", "l2_size", "banks", "associativity", "l1_hit_cycles", "l2_hit_cycles",
                      "dram_cycles", "link_bytes_per_cycle", "noc_hop_cycles", "mem_size", "cores",
                      "nmce_allocate"},
                     "memsys");
        auto& c = cfg.soc.mem;
        r.read(m, "l1_size", c.l1_size, "memsys");
        r.read(m, "l1_assoc", c.l1_assoc, "memsys");
        r.read(m, "l2_size", c.l2_size, "memsys");
        r.read(m, "banks", c.banks, "memsys");
        r.read(m, "associativity", c.associativity, "memsys");
        r.read(m, "l1_hit_cycles", c.l1_hit_cycles, "memsys");
        r.read(m, "l2_hit_cycles", c.l2_hit_cycles, "memsys");
        r.read(m, "dram_cycles", c.dram_cycles, "memsys");
        r.read(m, "link_bytes_per_cycle", c.link_bytes_per_cycle, "memsys");
        r.read(m, "noc_hop_cycles", c.noc_hop_cycles, "memsys");
        r.read(m, "mem_size", c.mem_size, "memsys");
        r.read(m, "cores", c.cores, "memsys");
        r.read(m, "nmce_allocate", c.nmce_allocate, "memsys");
        r.anchored(m, [&] { c.validate(); });
    }
    if (const auto c = root["core"]) {
        r.expect_map(c, "core");
        r.check_keys(c, {"mac_cycles", "alu_cycles", "mmio_cycles"}, "core");
        r.read(c, "mac_cycles", cfg.soc.core.mac_cycles, "core");
        r.read(c, "alu_cycles", cfg.soc.core.alu_cycles, "core");
        r.read(c, "mmio_cycles", cfg.soc.core.mmio_cycles, "core");
    }
    if (const auto e = root["nmce"]) {
        r.expect_map(e, "nmce");
        r.check_keys(e, {"pipelined", "engines"}, "nmce");
        r.read(e, "pipelined", cfg.soc.nmce.pipelined, "nmce");
        r.read(e, "engines", cfg.soc.engines, "nmce");
        r.anchored(e, [&] { cfg.soc.validate(); });
    }
    bool prefetch_all = false;
    if (const auto p = root["prefetcher"]) {
        r.expect_map(p, "prefetcher");
        r.check_keys(p, {"enabled", "offsets", "score_max", "round_max", "bad_score", "rr_entries"}, "prefetcher");
        r.read(p, "enabled", prefetch_all, "prefetcher");
        if (const auto o = p["offsets"]) {
            if (!o.IsSequence()) r.fail(o, "prefetcher.offsets must be a list");
            cfg.prefetch.offsets.clear();
            for (const auto& v : o) {
                try {
                    cfg.prefetch.offsets.push_back(v.as<std::uint32_t>());
                } catch (const YAML::Exception&) {
                    r.fail(v, "prefetcher.offsets entries must be positive integers");
                }
            }
        }
        r.read(p, "score_max", cfg.prefetch.score_max, "prefetcher");
        r.read(p, "round_max", cfg.prefetch.round_max, "prefetcher");
        r.read(p, "bad_score", cfg.prefetch.bad_score, "prefetcher");
        r.read(p, "rr_entries", cfg.prefetch.rr_entries, "prefetcher");
        r.anchored(p, [&] { cfg.prefetch.validate(); });
    }
    if (prefetch_all) cfg.soc.prefetch = cfg.prefetch;
    if (const auto s = root["sparse"]) {
        r.expect_map(s, "sparse");
        r.check_keys(s, {"rs_entries", "lanes", "x_buffer_lines"}, "sparse");
        r.read(s, "rs_entries", cfg.sparse.rs_entries, "sparse");
        r.read(s, "lanes", cfg.sparse.lanes, "sparse");
        r.read(s, "x_buffer_lines", cfg.sparse.x_buffer_lines, "sparse");
        r.anchored(s, [&] { cfg.sparse.validate(); });
    }
    if (const auto list = root["benchmarks"]) {
        if (!list.IsSequence() || list.size() == 0) r.fail(list, "benchmarks must be a non-empty list");
        std::set<std::string> names;
        for (std::size_t i = 0; i < list.size(); ++i) {
            cfg.benchmarks.push_back(parse_benchmark(r, list[i], i));
            if (!names.insert(cfg.benchmarks.back().name).second)
                r.fail(list[i], "benchmark name '" + cfg.benchmarks.back().name + "' used twice");
        }
    } else {
        cfg.benchmarks = default_suite();
    }
    r.anchored(root, [&] { cfg.validate(); });
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string(), 1, "cannot open configuration file");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.string());
}

// --- running ------------------------------------------------------------------

std::uint64_t benchmark_seed(std::uint64_t run_seed, const std::string& name) {
    return (run_seed * 0x9E3779B97F4A7C15ULL) ^ fnv1a(name);
}

namespace {

SocConfig soc_for(const RunConfig& cfg) { return cfg.soc; }

std::vector<std::int8_t> random_vector(std::size_t n, Rng& rng) {
    std::vector<std::int8_t> v(n);
    for (auto& x : v) x = random_int8(rng);
    return v;
}

void run_matmul(const RunConfig& cfg, const BenchmarkSpec& spec, BenchmarkResult& out) {
    Rng rng(out.seed);
    const auto a = Int8Matrix::random(spec.shape.m, spec.shape.k, rng);
    const auto b = Int8Matrix::random(spec.shape.k, spec.shape.n, rng);
    const auto ref = matmul_reference(a, b);
    for (const auto& path : spec.paths) {
        Soc soc(soc_for(cfg));
        const auto layout = MatmulLayout::place(spec.shape, 0, cfg.soc.mem.banks);
        stage_matmul(soc.mem(), layout, a, b);
        PathResult pr;
        pr.path = path;
        MatmulRun run;
        if (path == "nmce") {
            const auto plan = make_matmul_plan(spec.shape, layout, soc.engines(), cfg.soc.mem.banks);
            run = matmul_nmce(soc, plan);
            std::uint64_t invocations = 0;
            for (const auto& round : plan.rounds) invocations += round.size();
            pr.extra["rounds_per_row"] = plan.rounds.size();
            pr.extra["invocations_per_row"] = invocations;
        } else {
            run = matmul_sw(soc, layout, spec.shape, path == "quad" ? 4u : 1u);
        }
        if (run.c != ref) out.outputs_match = false;
        pr.stats = run.stats;
        out.paths.push_back(std::move(pr));
    }
}

void run_memcpy(const RunConfig& cfg, const BenchmarkSpec& spec, BenchmarkResult& out) {
    Rng rng(out.seed);
    std::vector<std::uint8_t> src(spec.bytes);
    for (auto& v : src) v = static_cast<std::uint8_t>(rng());
    const Addr dst = round_up(spec.bytes, kLineBytes * cfg.soc.mem.banks);
    std::vector<std::uint8_t> image(spec.bytes);
    for (const auto& path : spec.paths) {
        Soc soc(soc_for(cfg));
        if (!soc.mem().in_range(0, dst + spec.bytes)) throw ValidationError("benchmark '" + spec.name + "': copy does not fit in memory");
        soc.mem().poke(0, src);
        PathResult pr;
        pr.path = path;
        pr.stats = memcpy_bench(soc, 0, dst, spec.bytes, path == "nmce" ? CopyPath::nmce : CopyPath::sw);
        soc.mem().peek(dst, image);
        if (image != src) out.outputs_match = false;
        pr.extra["bytes_copied"] = spec.bytes;
        out.paths.push_back(std::move(pr));
    }
}

CsrMatrix load_matrix(const BenchmarkSpec& spec, Rng& rng) {
    if (!spec.matrix_file) return random_csr(spec.rows, spec.cols, spec.density, rng);
    std::ifstream in(*spec.matrix_file, std::ios::binary);
    if (!in) throw ValidationError("benchmark '" + spec.name + "': cannot open " + spec.matrix_file->string());
    return spec.matrix_file->extension() == ".mtx" ? read_matrix_market(in) : read_csr_binary(in);
}

void run_spmv(const RunConfig& cfg, const BenchmarkSpec& spec, BenchmarkResult& out) {
    Rng rng(out.seed);
    const auto a = load_matrix(spec, rng);
    const auto x = random_vector(a.cols, rng);
    const auto ref = spmv(a, x);
    const auto layout = place_csr(a, 0);
    for (const auto& path : spec.paths) {
        Soc soc(soc_for(cfg));
        if (!soc.mem().in_range(0, layout.end)) throw ValidationError("benchmark '" + spec.name + "': matrix does not fit in memory");
        stage_csr(soc.mem(), a, x, layout);
        soc.mem().warm_l2(layout.row_ptr, layout.end - layout.row_ptr);
        PathResult pr;
        pr.path = path;
        AccResult y;
        if (path == "sw") {
            auto run = spmv_sw(soc, a, layout);
            pr.stats = run.stats;
            y = std::move(run.y);
        } else {
            auto sc = cfg.sparse;
            sc.variant = path == "in_order" ? SparseVariant::in_order : SparseVariant::reservation_station;
            auto run = spmv_timed(a, x, sc, soc.mem(), layout);
            pr.stats = run.stats;
            pr.extra["line_requests"] = run.line_requests;
            y = std::move(run.y);
        }
        if (y != ref) out.outputs_match = false;
        pr.extra["nnz"] = a.nnz();
        out.paths.push_back(std::move(pr));
    }
}

void run_stride(const RunConfig& cfg, const BenchmarkSpec& spec, BenchmarkResult& out) {
    for (const auto& path : spec.paths) {
        auto sc = soc_for(cfg);
        if (path == "on") sc.prefetch = cfg.prefetch;
        if (path == "off") sc.prefetch.reset();
        Soc soc(sc);
        PathResult pr;
        pr.path = path;
        pr.stats = stride_kernel(soc, spec.stride);
        if (const auto* bop = soc.mem().prefetcher(0)) {
            pr.extra["best_offset"] = bop->best_offset();
            pr.extra["prefetch_enabled"] = bop->enabled();
            pr.extra["learning_phases"] = bop->state().phases;
        }
        out.paths.push_back(std::move(pr));
    }
}

void run_relu(const RunConfig& cfg, const BenchmarkSpec& spec, BenchmarkResult& out) {
    std::vector<std::uint32_t> tokens(spec.tokens);
    {
        Rng rng(out.seed ^ 0x746f6b656e73ULL);
        for (auto& t : tokens) t = static_cast<std::uint32_t>(uniform_below(rng, spec.model.vocab));
    }
    std::optional<std::vector<std::vector<std::int16_t>>> first;
    for (const auto& path : spec.paths) {
        Soc soc(soc_for(cfg));
        Rng rng(out.seed);
        const auto model = stage_toy_llama(soc.mem(), spec.model, rng, 0);
        auto run = relu_infer(soc, model, tokens, path == "sparse");
        if (!first) first = run.logits;
        else if (*first != run.logits) out.outputs_match = false;
        PathResult pr;
        pr.path = path;
        pr.stats = run.stats;
        pr.extra["tokens"] = run.tokens;
        pr.extra["parameters"] = spec.model.parameters();
        pr.extra["weight_bytes_fetched"] = run.weight_bytes_fetched;
        pr.extra["dense_weight_bytes"] = run.dense_weight_bytes;
        pr.extra["activation_sparsity"] = run.activation_sparsity();
        pr.extra["inferences_per_kilocycle"] = run.inferences_per_kilocycle();
        out.paths.push_back(std::move(pr));
    }
}

}  // namespace

BenchmarkResult run_benchmark(const RunConfig& cfg, const BenchmarkSpec& spec) {
    spec.validate();
    BenchmarkResult out;
    out.spec = spec;
    out.seed = benchmark_seed(cfg.seed, spec.name);
    try {
        switch (spec.kind) {
            case BenchKind::matmul: run_matmul(cfg, spec, out); break;
            case BenchKind::memcpy: run_memcpy(cfg, spec, out); break;
            case BenchKind::spmv: run_spmv(cfg, spec, out); break;
            case BenchKind::stride: run_stride(cfg, spec, out); break;
            case BenchKind::relu_infer: run_relu(cfg, spec, out); break;
        }
    } catch (const SimFault& f) {
        throw BenchmarkFault(spec.name, f);
    }
    const Cycle base = out.paths.front().stats.cycles;
    for (auto& p : out.paths) p.speedup_vs_baseline = speedup(base, p.stats.cycles);
    return out;
}

Report run_suite(const RunConfig& cfg, unsigned jobs) {
    cfg.validate();
    Report report;
    report.seed = cfg.seed;
    const auto n = cfg.benchmarks.size();
    std::vector<std::optional<BenchmarkResult>> results(n);
    std::vector<std::exception_ptr> errors(n);
    auto work = [&](std::size_t i) {
        try {
            results[i] = run_benchmark(cfg, cfg.benchmarks[i]);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) work(i);
            });
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        report.benchmarks.push_back(std::move(*results[i]));
    }
    return report;
}

// --- reports ------------------------------------------------------------------

namespace {

nlohmann::ordered_json params_json(const BenchmarkSpec& s) {
    nlohmann::ordered_json p = nlohmann::ordered_json::object();
    switch (s.kind) {
        case BenchKind::matmul:
            p["m"] = s.shape.m;
            p["k"] = s.shape.k;
            p["n"] = s.shape.n;
            break;
        case BenchKind::memcpy: p["bytes"] = s.bytes; break;
        case BenchKind::spmv:
            if (s.matrix_file) {
                p["matrix_file"] = s.matrix_file->generic_string();
            } else {
                p["rows"] = s.rows;
                p["cols"] = s.cols;
                p["density"] = s.density;
            }
            break;
        case BenchKind::stride:
            p["count"] = s.stride.count;
            p["stride_lines"] = s.stride.stride_lines;
            p["words_per_line"] = s.stride.words_per_line;
            p["work_per_word"] = s.stride.work_per_word;
            break;
        case BenchKind::relu_infer:
            p["d_model"] = s.model.d_model;
            p["d_ff"] = s.model.d_ff;
            p["layers"] = s.model.layers;
            p["vocab"] = s.model.vocab;
            p["up_shift"] = s.model.up_shift;
            p["down_shift"] = s.model.down_shift;
            p["tokens"] = s.tokens;
            p["use_nmce"] = s.model.use_nmce;
            break;
    }
    return p;
}

}  // namespace

nlohmann::ordered_json to_json(const Report& report) {
    nlohmann::ordered_json j;
    j["schema"] = "nearsim-report";
    j["schema_version"] = kReportSchemaVersion;
    j["seed"] = report.seed;
    j["benchmarks"] = nlohmann::ordered_json::array();
    for (const auto& b : report.benchmarks) {
        nlohmann::ordered_json jb;
        jb["name"] = b.spec.name;
        jb["kind"] = to_string(b.spec.kind);
        jb["seed"] = b.seed;
        jb["baseline"] = b.paths.front().path;
        jb["outputs_match"] = b.outputs_match;
        jb["params"] = params_json(b.spec);
        jb["results"] = nlohmann::ordered_json::array();
        for (const auto& p : b.paths) {
            const auto& s = p.stats;
            nlohmann::ordered_json jp;
            jp["path"] = p.path;
            jp["cycles"] = s.cycles;
            jp["ops"] = s.int8_ops;
            jp["ops_per_kilocycle"] = s.ops_per_kilocycle();
            jp["speedup_vs_baseline"] = p.speedup_vs_baseline;
            jp["bytes"] = {{"l2_to_nmce", s.bytes.l2_to_nmce},
                           {"dram_reads", s.bytes.dram_reads},
                           {"dram_writes", s.bytes.dram_writes},
                           {"link_bytes", s.bytes.link_bytes}};
            jp["prefetch"] = {{"issued", s.prefetch.issued},
                              {"useful", s.prefetch.useful},
                              {"late", s.prefetch.late},
                              {"dropped", s.prefetch.dropped}};
            jp["dram_fills"] = s.dram_fills;
            jp["writebacks"] = s.writebacks;
            jp["extra"] = p.extra;
            jb["results"].push_back(std::move(jp));
        }
        j["benchmarks"].push_back(std::move(jb));
    }
    return j;
}

std::string to_csv(const Report& report) {
    std::ostringstream out;
    out << "benchmark,path,cycles,ops,bytes,speedup\n";
    for (const auto& b : report.benchmarks) {
        for (const auto& p : b.paths) {
            char speed[32];
            std::snprintf(speed, sizeof speed, "%.4f", p.speedup_vs_baseline);
            out << b.spec.name << ',' << p.path << ',' << p.stats.cycles << ',' << p.stats.int8_ops << ','
                << p.stats.bytes.link_bytes << ',' << speed << '\n';
        }
    }
    return out.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// --- compare ------------------------------------------------------------------

bool CompareResult::any_flagged() const {
    return std::any_of(rows.begin(), rows.end(), [](const CompareRow& r) { return r.flagged; });
}

namespace {

std::map<std::pair<std::string, std::string>, std::uint64_t> cycle_rows(const nlohmann::json& report,
                                                                        const char* label) {
    if (!report.is_object() || !report.contains("benchmarks") || !report["benchmarks"].is_array())
        throw ValidationError(std::string("report ") + label + " has no benchmark list");
    std::map<std::pair<std::string, std::string>, std::uint64_t> rows;
    for (const auto& b : report["benchmarks"])
        for (const auto& r : b.at("results"))
            rows[{b.at("name").get<std::string>(), r.at("path").get<std::string>()}] =
                r.at("cycles").get<std::uint64_t>();
    return rows;
}

}  // namespace

CompareResult compare_reports(const nlohmann::json& a, const nlohmann::json& b, double tolerance_pct) {
    if (!(tolerance_pct >= 0.0)) throw ValidationError("tolerance must be nonnegative");
    const auto ra = cycle_rows(a, "A");
    const auto rb = cycle_rows(b, "B");
    for (const auto& [key, _] : ra)
        if (!rb.count(key)) throw ValidationError("benchmark lists differ: " + key.first + "/" + key.second + " only in A");
    for (const auto& [key, _] : rb)
        if (!ra.count(key)) throw ValidationError("benchmark lists differ: " + key.first + "/" + key.second + " only in B");

    CompareResult out;
    for (const auto& b_entry : a["benchmarks"]) {
        for (const auto& r : b_entry["results"]) {
            CompareRow row;
            row.benchmark = b_entry["name"].get<std::string>();
            row.path = r["path"].get<std::string>();
            row.cycles_a = ra.at({row.benchmark, row.path});
            row.cycles_b = rb.at({row.benchmark, row.path});
            if (row.cycles_a == 0) {
                row.ratio = row.cycles_b == 0 ? 1.0 : INFINITY;
            } else {
                row.ratio = static_cast<double>(row.cycles_b) / static_cast<double>(row.cycles_a);
            }
            row.flagged = std::abs(row.ratio - 1.0) * 100.0 > tolerance_pct;
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

}  // namespace nearsim
