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
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nearsim/kernels.hpp"
#include "nearsim/soc.hpp"
#include "nearsim/sparse.hpp"

namespace nearsim {

inline constexpr int kReportSchemaVersion = 1;

/// A configuration problem pinned to a line of the source file.
class ConfigError : public ValidationError {
public:
    ConfigError(const std::string& source, int line, const std::string& what)
        : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// A device fault raised while running a named benchmark.
class BenchmarkFault : public std::runtime_error {
public:
    BenchmarkFault(const std::string& benchmark, const SimFault& fault)
        : std::runtime_error("benchmark '" + benchmark + "': " + fault.what()), benchmark_(benchmark) {}
    const std::string& benchmark() const { return benchmark_; }

private:
    std::string benchmark_;
};

enum class BenchKind : std::uint8_t { matmul, memcpy, spmv, stride, relu_infer };

std::string to_string(BenchKind kind);
/// Paths a benchmark kind understands. The stride kernel's "configured" path
/// follows prefetcher.enabled; "off" and "on" force the prefetcher.
const std::vector<std::string>& known_paths(BenchKind kind);

struct BenchmarkSpec {
    std::string name;
    BenchKind kind = BenchKind::matmul;
    std::vector<std::string> paths;  // the first listed path is the baseline

    // matmul
    MatmulShape shape{8, 8, 8};
    // memcpy
    std::uint64_t bytes = 4096;
    // spmv: a random matrix unless matrix_file names a CSR binary or .mtx file
    std::uint32_t rows = 256;
    std::uint32_t cols = 256;
    double density = 0.1;
    std::optional<std::filesystem::path> matrix_file;
    // stride
    StrideKernel stride;
    // relu_infer
    ToyLlamaConfig model;
    std::uint32_t tokens = 4;

    void validate() const;
    std::uint64_t ops() const;
};

struct RunConfig {
    std::uint64_t seed = 1;
    SocConfig soc;
    SparseAccelConfig sparse;
    BopConfig prefetch;  // used by the stride kernel's "on" path
    std::vector<BenchmarkSpec> benchmarks;

    void validate() const;
};

/// The suite run when a configuration lists no benchmarks.
std::vector<BenchmarkSpec> default_suite();

/// Parses YAML text; `source` names the file in diagnostics.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

struct PathResult {
    std::string path;
    SimStats stats;
    double speedup_vs_baseline = 0.0;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

struct BenchmarkResult {
    BenchmarkSpec spec;
    std::uint64_t seed = 0;
    bool outputs_match = true;
    std::vector<PathResult> paths;
};

struct Report {
    std::uint64_t seed = 0;
    std::vector<BenchmarkResult> benchmarks;
};

/// Seed of one benchmark, derived from the run seed and the benchmark name.
std::uint64_t benchmark_seed(std::uint64_t run_seed, const std::string& name);

/// Runs every path of one benchmark, each on a freshly built SoC.
BenchmarkResult run_benchmark(const RunConfig& cfg, const BenchmarkSpec& spec);
/// Runs all benchmarks, up to `jobs` at a time; results keep config order.
Report run_suite(const RunConfig& cfg, unsigned jobs = 1);

nlohmann::ordered_json to_json(const Report& report);
std::string to_csv(const Report& report);

/// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct CompareRow {
    std::string benchmark;
    std::string path;
    std::uint64_t cycles_a = 0;
    std::uint64_t cycles_b = 0;
    double ratio = 1.0;  // cycles_b / cycles_a
    bool flagged = false;
};

struct CompareResult {
    std::vector<CompareRow> rows;
    bool any_flagged() const;
};

/// Pairs up rows by (benchmark, path). Throws ValidationError if the two
/// reports do not list the same benchmarks and paths. A row is flagged when
/// its ratio differs from 1 by more than `tolerance_pct` percent.
CompareResult compare_reports(const nlohmann::json& a, const nlohmann::json& b, double tolerance_pct = 0.0);

}  // namespace nearsim
