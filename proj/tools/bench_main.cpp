#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "mscript/bench.hpp"
#include "mscript/errors.hpp"

using namespace mscript;

namespace {

std::vector<int> parse_thread_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw FormatError("bad thread count '" + item + "'");
        }
    }
    if (out.empty()) throw FormatError("no thread counts in '" + text + "'");
    return out;
}

int report_check(const std::vector<bench::BenchRow>& rows, bool check) {
    if (!check) return 0;
    auto failures = bench::threshold_failures(rows);
    if (failures.empty()) return 0;
    for (const std::string& failure : failures) {
        std::cerr << "check failed: " << failure << "\n";
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"packaged-model serving benchmark"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "build the synthetic model archives");
    std::string gen_out;
    uint64_t gen_seed = 7;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "weight seed");

    auto* run = app.add_subcommand("run", "measure throughput for one config/model");
    std::string run_config = "multi";
    std::string run_model = "small";
    std::string run_threads = "1,2,4,8";
    double run_duration = 3.0;
    double run_warmup = 1.0;
    std::string run_out;
    std::string run_archives = "bench_models";
    bool run_check = false;
    run->add_option("--config", run_config, "multi|single|native")->required();
    run->add_option("--model", run_model, "large|small|identity")->required();
    run->add_option("--threads", run_threads, "comma-separated thread counts");
    run->add_option("--duration", run_duration, "seconds measured per thread count");
    run->add_option("--warmup", run_warmup, "discarded warmup seconds");
    run->add_option("--out", run_out, "CSV output file")->required();
    run->add_option("--archives", run_archives, "directory holding gen's archives");
    run->add_flag("--check", run_check, "exit 2 if scaling thresholds fail");

    auto* report = app.add_subcommand("report", "summarize a CSV produced by run");
    std::string report_csv;
    bool report_check_flag = false;
    report->add_option("csv", report_csv, "CSV file")->required();
    report->add_flag("--check", report_check_flag, "exit 2 if scaling thresholds fail");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            bench::gen_models(gen_out, gen_seed);
            for (auto model : {bench::Model::large, bench::Model::small, bench::Model::identity}) {
                std::cout << "wrote " << bench::archive_path(gen_out, model).string() << "\n";
            }
            return 0;
        }
        if (run->parsed()) {
            bench::BenchConfig cfg;
            cfg.config = bench::parse_config(run_config);
            cfg.model = bench::parse_model(run_model);
            cfg.threads = parse_thread_list(run_threads);
            cfg.duration_s = run_duration;
            cfg.warmup_s = run_warmup;
            cfg.archives_dir = run_archives;
            cfg.out_csv = run_out;
            std::cout << bench::csv_header();
            std::vector<bench::BenchRow> rows;
            // run_bench flushes the CSV row by row itself; echo to stdout too.
            rows = bench::run_bench(cfg);
            for (const auto& row : rows) std::cout << bench::csv_line(row);
            return report_check(rows, run_check);
        }
        if (report->parsed()) {
            auto rows = bench::parse_csv(report_csv);
            std::cout << bench::render_report(rows);
            return report_check(rows, report_check_flag);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
