#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mscript/blobstore.hpp"

namespace mscript::bench {

enum class Config { multi, single, native };
enum class Model { large, small, identity };

const char* config_name(Config config);
const char* model_name(Model model);
Config parse_config(const std::string& name);   // throws FormatError
Model parse_model(const std::string& name);     // throws FormatError

// Layer count and width of each synthetic model. "large" is kernel-bound,
// "small" is interpreter-bound, "identity" returns its input.
struct ModelSpec {
    int layers;
    size_t dim;
};
ModelSpec model_spec(Model model);
std::filesystem::path archive_path(const std::filesystem::path& dir, Model model);

struct BenchConfig {
    Config config = Config::multi;
    Model model = Model::small;
    std::vector<int> threads = {1, 2, 4, 8};
    double duration_s = 3.0;
    double warmup_s = 1.0;
    uint64_t seed = 7;
    std::filesystem::path archives_dir = "bench_models";
    std::filesystem::path out_csv;  // empty: no file output
};

struct BenchRow {
    std::string config;
    std::string model;
    int threads = 0;
    uint64_t requests = 0;
    double seconds = 0.0;
    double throughput = 0.0;
    double interp_fraction = 0.0;
};

// Builds the three model archives (exporter path), deterministically for a
// given seed.
void gen_models(const std::filesystem::path& out_dir, uint64_t seed);

// Runs one row per requested thread count. Each requester thread loops
// calls for duration_s after a discarded warmup; every response is checked
// against the single-threaded reference output. Rows are appended to
// out_csv as they finish.
std::vector<BenchRow> run_bench(const BenchConfig& cfg);

std::string csv_header();
std::string csv_line(const BenchRow& row);
std::vector<BenchRow> parse_csv(const std::filesystem::path& csv);  // throws FormatError

// Per-model throughput-vs-threads tables plus measured interpreter-time
// fractions.
std::string render_report(const std::vector<BenchRow>& rows);

// Scaling-shape checks evaluated over whatever rows are present; returns one
// message per violated threshold (empty means all pass).
std::vector<std::string> threshold_failures(const std::vector<BenchRow>& rows);

// Direct-kernel execution of a packaged model (weights extracted from the
// archive once at setup; serving never touches an interpreter).
struct NativeModel {
    std::vector<TensorHandle> weights;
    std::vector<TensorHandle> biases;
    TensorHandle example_input;

    TensorHandle run(const TensorHandle& input) const;
    static NativeModel extract(const std::filesystem::path& archive);
};

}  // namespace mscript::bench
