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

#include <filesystem>
#include <fstream>

#include "nearsim/harness.hpp"

using namespace nearsim;

namespace {

const char* kMinimal = R"(seed: 1
benchmarks:
  - name: mm
    kind: matmul
    m: 8
    k: 8
    n: 8
    paths: [single]
)";

int error_line(const std::string& text) {
    try {
        parse_config(text, "t.yaml");
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("t.yaml:" + std::to_string(e.line()) + ":"), std::string::npos);
        return e.line();
    }
    ADD_FAILURE() << "configuration was accepted";
    return -1;
}

RunConfig small_suite() {
    return parse_config(R"(seed: 5
benchmarks:
  - {name: mm, kind: matmul, m: 16, k: 100, n: 12}
  - {name: cp, kind: memcpy, bytes: 8192}
  - {name: sp, kind: spmv, rows: 40, cols: 60, density: 0.3}
  - {name: st, kind: stride, count: 512}
  - {name: ff, kind: relu_infer, d_model: 64, d_ff: 128, layers: 1, vocab: 16, tokens: 2}
)");
}

}  // namespace

TEST(HarnessConfig, MinimalConfigRunsOneRowWithAnalyticOps) {
    const auto cfg = parse_config(kMinimal);
    ASSERT_EQ(cfg.benchmarks.size(), 1u);
    const auto report = run_suite(cfg);
    ASSERT_EQ(report.benchmarks.size(), 1u);
    ASSERT_EQ(report.benchmarks[0].paths.size(), 1u);
    EXPECT_EQ(report.benchmarks[0].paths[0].stats.int8_ops, 2u * 8 * 8 * 8);
    EXPECT_TRUE(report.benchmarks[0].outputs_match);
    EXPECT_DOUBLE_EQ(report.benchmarks[0].paths[0].speedup_vs_baseline, 1.0);
    const auto csv = to_csv(report);
    EXPECT_EQ(csv, "benchmark,path,cycles,ops,bytes,speedup\nmm,single," +
                       std::to_string(report.benchmarks[0].paths[0].stats.cycles) + ",1024," +
                       std::to_string(report.benchmarks[0].paths[0].stats.bytes.link_bytes) + ",1.0000\n");
}

TEST(HarnessConfig, MissingBenchmarksMeansDefaultSuite) {
    const auto cfg = parse_config("seed: 2\n");
    EXPECT_EQ(cfg.benchmarks.size(), default_suite().size());
    EXPECT_EQ(cfg.seed, 2u);
}

TEST(HarnessConfig, SectionsOverrideDefaults) {
    const auto cfg = parse_config(R"(memsys:
  l2_hit_cycles: 12
  banks: 4
core:
  mmio_cycles: 3
nmce:
  pipelined: true
prefetcher:
  enabled: true
  offsets: [1, 2, 4]
sparse:
  rs_entries: 4
)");
    EXPECT_EQ(cfg.soc.mem.l2_hit_cycles, 12u);
    EXPECT_EQ(cfg.soc.core.mmio_cycles, 3u);
    EXPECT_TRUE(cfg.soc.nmce.pipelined);
    ASSERT_TRUE(cfg.soc.prefetch.has_value());
    EXPECT_EQ(cfg.soc.prefetch->offsets, (std::vector<std::uint32_t>{1, 2, 4}));
    EXPECT_EQ(cfg.sparse.rs_entries, 4u);
}

TEST(HarnessConfig, ErrorsPointAtTheOffendingLine) {
    EXPECT_EQ(error_line("seed: 1\nmemsys:\n  l2_hit_cycle: 3\n"), 3);
    EXPECT_EQ(error_line("seed: 1\nmemsys:\n  banks: many\n"), 3);
    EXPECT_EQ(error_line("seed: 1\n\nmemsys:\n  l1_size: 100\n"), 4);
    EXPECT_EQ(error_line("seed: 1\nbenchmarks:\n  - name: a\n    kind: matmul\n    paths: [gpu]\n"), 3);
    EXPECT_EQ(error_line("seed: 1\nbenchmarks:\n  - name: a\n    kind: tensor\n"), 4);
    EXPECT_EQ(error_line("seed: 1\nbenchmarks:\n  - {name: a, kind: memcpy, bytes: 100}\n"), 3);
    EXPECT_EQ(error_line("seed: 1\nbenchmarks:\n  - {name: a, kind: memcpy}\n  - {name: a, kind: memcpy}\n"), 4);
    EXPECT_EQ(error_line("seed: 1\nbogus: 2\n"), 2);
    EXPECT_EQ(error_line("seed: 1\nbenchmarks: []\n"), 2);
    EXPECT_EQ(error_line("seed: [1\n"), 2);
    EXPECT_EQ(error_line("seed: -4\n"), 1);
}

TEST(HarnessConfig, LoadMissingFileIsAConfigError) {
    EXPECT_THROW(load_config("/nonexistent/nearsim.yaml"), ConfigError);
}

TEST(HarnessRun, SameSeedGivesByteIdenticalReports) {
    const auto cfg = small_suite();
    const auto a = to_json(run_suite(cfg)).dump(2);
    const auto b = to_json(run_suite(cfg)).dump(2);
    EXPECT_EQ(a, b);
    const auto parallel = to_json(run_suite(cfg, 3)).dump(2);
    EXPECT_EQ(a, parallel);
}

TEST(HarnessRun, EveryPathAgreesOnOutputs) {
    const auto report = run_suite(small_suite());
    for (const auto& b : report.benchmarks) {
        EXPECT_TRUE(b.outputs_match) << b.spec.name;
        EXPECT_EQ(b.paths.size(), b.spec.paths.size()) << b.spec.name;
    }
}

TEST(HarnessRun, SeedChangesDataButNotShape) {
    auto cfg = small_suite();
    const auto a = run_suite(cfg);
    cfg.seed = 6;
    const auto b = run_suite(cfg);
    EXPECT_NE(a.benchmarks[0].seed, b.benchmarks[0].seed);
    EXPECT_EQ(a.benchmarks.size(), b.benchmarks.size());
    EXPECT_NE(benchmark_seed(1, "x"), benchmark_seed(1, "y"));
}

TEST(HarnessRun, ReportCarriesSchemaAndCounters) {
    const auto j = to_json(run_suite(parse_config(kMinimal)));
    EXPECT_EQ(j["schema"], "nearsim-report");
    EXPECT_EQ(j["schema_version"], kReportSchemaVersion);
    const auto& r = j["benchmarks"][0]["results"][0];
    EXPECT_EQ(r["ops"], 1024);
    EXPECT_TRUE(r["bytes"].contains("link_bytes"));
    EXPECT_TRUE(r["prefetch"].contains("late"));
    EXPECT_EQ(j["benchmarks"][0]["baseline"], "single");
}

TEST(HarnessRun, MissingMatrixFileIsReported) {
    auto cfg = parse_config("benchmarks:\n  - {name: sp, kind: spmv, matrix_file: /nonexistent.mtx}\n");
    EXPECT_THROW(run_suite(cfg), ValidationError);
}

TEST(HarnessRun, FaultNamesBenchmarkAndDevice) {
    const BenchmarkFault f("mm", SimFault(Requester::nmce(2), 0x40, "operand out of range"));
    const std::string what = f.what();
    EXPECT_NE(what.find("mm"), std::string::npos);
    EXPECT_NE(what.find("nmce2"), std::string::npos);
}

TEST(HarnessCompare, IdenticalReportsGiveUnitRatios) {
    const auto j = nlohmann::json::parse(to_json(run_suite(small_suite())).dump());
    const auto cmp = compare_reports(j, j, 0.0);
    EXPECT_FALSE(cmp.any_flagged());
    for (const auto& r : cmp.rows) EXPECT_DOUBLE_EQ(r.ratio, 1.0);
}

TEST(HarnessCompare, AnyDifferenceFlagsAtZeroTolerance) {
    auto a = nlohmann::json::parse(to_json(run_suite(parse_config(kMinimal))).dump());
    auto b = a;
    b["benchmarks"][0]["results"][0]["cycles"] = a["benchmarks"][0]["results"][0]["cycles"].get<std::uint64_t>() + 1;
    EXPECT_TRUE(compare_reports(a, b, 0.0).any_flagged());
    EXPECT_FALSE(compare_reports(a, b, 5.0).any_flagged());
}

TEST(HarnessCompare, PrefetchOnNeverSlowerOnStrideKernel) {
    const char* base = "benchmarks:\n  - {name: st, kind: stride, count: 4096, paths: [configured]}\n";
    const auto off = to_json(run_suite(parse_config(std::string("prefetcher: {enabled: false}\n") + base)));
    const auto on = to_json(run_suite(parse_config(std::string("prefetcher: {enabled: true}\n") + base)));
    const auto cmp = compare_reports(nlohmann::json::parse(off.dump()), nlohmann::json::parse(on.dump()), 0.0);
    ASSERT_EQ(cmp.rows.size(), 1u);
    EXPECT_LE(cmp.rows[0].ratio, 1.0);
}

TEST(HarnessCompare, MismatchedListsAreAnError) {
    const auto a = nlohmann::json::parse(to_json(run_suite(parse_config(kMinimal))).dump());
    auto b = a;
    b["benchmarks"][0]["name"] = "other";
    EXPECT_THROW(compare_reports(a, b), ValidationError);
}

TEST(HarnessOutput, AtomicWriteLeavesNoTemporary) {
    const auto dir = std::filesystem::temp_directory_path() / "nearsim_atomic_test";
    std::filesystem::create_directories(dir);
    const auto file = dir / "out.json";
    write_file_atomic(file, "first");
    write_file_atomic(file, "second");
    std::ifstream in(file);
    std::string content;
    std::getline(in, content);
    EXPECT_EQ(content, "second");
    EXPECT_FALSE(std::filesystem::exists(dir / "out.json.tmp"));
    std::filesystem::remove_all(dir);
}
