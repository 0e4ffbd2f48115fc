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

// Command-line front end: run a benchmark suite, compare two reports, or
// list the default suite.
//
// Exit codes: 0 success, 1 compare found differences beyond tolerance,
// 2 invalid configuration or arguments, 3 simulation fault.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "nearsim/harness.hpp"

namespace {

using namespace nearsim;

int cmd_run(const std::string& config_path, const std::string& out_path, const std::string& csv_path,
            std::optional<std::uint64_t> seed, unsigned jobs) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (config_path.empty()) cfg.benchmarks = default_suite();
    if (seed) cfg.seed = *seed;
    const Report report = run_suite(cfg, jobs);
    const std::string json = to_json(report).dump(2) + "\n";
    if (out_path.empty()) {
        std::cout << json;
    } else {
        write_file_atomic(out_path, json);
    }
    if (!csv_path.empty()) write_file_atomic(csv_path, to_csv(report));

    std::ostream& log = out_path.empty() ? std::cerr : std::cout;
    for (const auto& b : report.benchmarks) {
        for (const auto& p : b.paths) {
            char line[160];
            std::snprintf(line, sizeof line, "%-14s %-20s %14llu cycles  %8.2fx%s\n", b.spec.name.c_str(),
                          p.path.c_str(), static_cast<unsigned long long>(p.stats.cycles), p.speedup_vs_baseline,
                          b.outputs_match ? "" : "  OUTPUT MISMATCH");
            log << line;
        }
    }
    for (const auto& b : report.benchmarks)
        if (!b.outputs_match) return 3;
    return 0;
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

int cmd_compare(const std::string& a, const std::string& b, double tolerance) {
    const auto result = compare_reports(read_json(a), read_json(b), tolerance);
    for (const auto& r : result.rows) {
        char line[200];
        std::snprintf(line, sizeof line, "%-14s %-20s %14llu %14llu  ratio %.6f%s\n", r.benchmark.c_str(),
                      r.path.c_str(), static_cast<unsigned long long>(r.cycles_a),
                      static_cast<unsigned long long>(r.cycles_b), r.ratio, r.flagged ? "  *" : "");
        std::cout << line;
    }
    return result.any_flagged() ? 1 : 0;
}

int cmd_list(const std::string& config_path) {
    const auto suite = config_path.empty() ? default_suite() : load_config(config_path).benchmarks;
    for (const auto& b : suite) {
        std::cout << b.name << "  " << to_string(b.kind) << "  [";
        for (std::size_t i = 0; i < b.paths.size(); ++i) std::cout << (i ? ", " : "") << b.paths[i];
        std::cout << "]\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nearsim: heterogeneous SoC memory and near-memory compute simulator"};
    app.require_subcommand(1);

    std::string config, out, csv;
    std::optional<std::uint64_t> seed;
    unsigned jobs = 1;
    auto* run = app.add_subcommand("run", "Run a benchmark suite and write a report");
    run->add_option("--config", config, "YAML configuration (default suite when omitted)");
    run->add_option("--out", out, "JSON report path (stdout when omitted)");
    run->add_option("--csv", csv, "CSV rows path");
    run->add_option("--seed", seed, "Override the configuration seed");
    run->add_option("--jobs", jobs, "Benchmarks simulated concurrently")->check(CLI::Range(1u, 256u));

    std::string report_a, report_b;
    double tolerance = 0.0;
    auto* compare = app.add_subcommand("compare", "Compare cycle counts of two reports");
    compare->add_option("a", report_a, "Reference report")->required();
    compare->add_option("b", report_b, "Candidate report")->required();
    compare->add_option("--tolerance", tolerance, "Allowed cycle difference in percent")->check(CLI::NonNegativeNumber);

    std::string list_config;
    auto* list = app.add_subcommand("list-benchmarks", "List the benchmarks a run would execute");
    list->add_option("--config", list_config, "YAML configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(config, out, csv, seed, jobs);
        if (*compare) return cmd_compare(report_a, report_b, tolerance);
        if (*list) return cmd_list(list_config);
    } catch (const BenchmarkFault& e) {
        std::cerr << "simulation fault: " << e.what() << '\n';
        return 3;
    } catch (const SimFault& e) {
        std::cerr << "simulation fault: " << e.what() << '\n';
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
