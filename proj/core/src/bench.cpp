#include "mscript/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "mscript/deploy.hpp"
#include "mscript/errors.hpp"
#include "mscript/parser.hpp"

namespace mscript::bench {

namespace {

using Clock = std::chrono::steady_clock;

const char* kLayersSource =
    "def linear_relu(x, w, b):\n"
    "    return nt.relu(nt.add(nt.matmul(x, w), b))\n";

const char* kNetSource =
    "import layers\n"
    "\n"
    "class Model:\n"
    "    def __init__(self, ws, bs):\n"
    "        self.ws = ws\n"
    "        self.bs = bs\n"
    "    def __call__(self, x):\n"
    "        i = 0\n"
    "        n = len(self.ws)\n"
    "        while i < n:\n"
    "            x = layers.linear_relu(x, self.ws[i], self.bs[i])\n"
    "            i = i + 1\n"
    "        return x\n";

const char* kIdentityNetSource =
    "class Model:\n"
    "    def __init__(self):\n"
    "        pass\n"
    "    def __call__(self, x):\n"
    "        return x\n";

// Raw rand weights are uniform in [0,1), so a [dim,dim] layer would grow
// activations by ~dim/2 per layer and overflow f32 after a few layers. The
// builder rescales weights to a mean gain of one; the serving path stays
// exactly matmul+relu.
const char* kBuildSource =
    "import net\n"
    "\n"
    "def const_matrix(n, m, c):\n"
    "    row = []\n"
    "    j = 0\n"
    "    while j < m:\n"
    "        row = row + [c]\n"
    "        j = j + 1\n"
    "    rows = []\n"
    "    i = 0\n"
    "    while i < n:\n"
    "        rows = rows + [row]\n"
    "        i = i + 1\n"
    "    return nt.from_list(rows)\n"
    "\n"
    "def build(layer_count, dim, seed):\n"
    "    scale = const_matrix(dim, dim, 2.0 / dim)\n"
    "    ws = []\n"
    "    bs = []\n"
    "    i = 0\n"
    "    while i < layer_count:\n"
    "        ws = ws + [nt.mul(nt.rand([dim, dim], seed + i), scale)]\n"
    "        bs = bs + [nt.rand([4, dim], seed + 1000 + i)]\n"
    "        i = i + 1\n"
    "    return net.Model(ws, bs)\n";

const char* kIdentityBuildSource =
    "import net\n"
    "\n"
    "def build(layer_count, dim, seed):\n"
    "    return net.Model()\n";

std::map<std::string, std::string> model_sources(Model model) {
    if (model == Model::identity) {
        return {{"net", kIdentityNetSource}};
    }
    return {{"net", kNetSource}, {"layers", kLayersSource}};
}

// Executes in-memory modules on an interpreter, resolving imports among them.
struct MemoryLoader {
    Interpreter& interp;
    std::map<std::string, std::string> sources;
    std::map<std::string, std::shared_ptr<ModuleEnv>> cache;

    ImportFn fn() {
        return [this](const std::string& name) { return load(name); };
    }

    std::shared_ptr<ModuleEnv> load(const std::string& name) {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        auto src = sources.find(name);
        if (src == sources.end()) {
            throw ImportError("no module named '" + name + "'", name);
        }
        auto env = interp.exec_module(parse_module(name, src->second), fn());
        cache[name] = env;
        return env;
    }
};

}  // namespace

const char* config_name(Config config) {
    switch (config) {
        case Config::multi: return "multi";
        case Config::single: return "single";
        case Config::native: return "native";
    }
    return "?";
}

const char* model_name(Model model) {
    switch (model) {
        case Model::large: return "large";
        case Model::small: return "small";
        case Model::identity: return "identity";
    }
    return "?";
}

Config parse_config(const std::string& name) {
    if (name == "multi") return Config::multi;
    if (name == "single") return Config::single;
    if (name == "native") return Config::native;
    throw FormatError("unknown config '" + name + "' (expected multi|single|native)");
}

Model parse_model(const std::string& name) {
    if (name == "large") return Model::large;
    if (name == "small") return Model::small;
    if (name == "identity") return Model::identity;
    throw FormatError("unknown model '" + name + "' (expected large|small|identity)");
}

ModelSpec model_spec(Model model) {
    switch (model) {
        case Model::large: return {4, 512};
        case Model::small: return {96, 8};
        case Model::identity: return {0, 8};
    }
    return {0, 0};
}

std::filesystem::path archive_path(const std::filesystem::path& dir, Model model) {
    return dir / (std::string(model_name(model)) + ".pkg");
}

void gen_models(const std::filesystem::path& out_dir, uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    for (Model model : {Model::large, Model::small, Model::identity}) {
        const ModelSpec spec = model_spec(model);

        Interpreter interp;
        MemoryLoader loader{interp, model_sources(model)};
        loader.sources["build"] =
            model == Model::identity ? kIdentityBuildSource : kBuildSource;
        loader.load("build");

        Value build = interp.get_global("build", "build");
        Value instance = interp.call_value(
            build, {Value(static_cast<int64_t>(spec.layers)),
                    Value(static_cast<int64_t>(spec.dim)), Value(static_cast<int64_t>(seed))});
        // A small request batch keeps kernel time well ahead of per-kernel
        // lock round-trips.
        TensorHandle example =
            kernels::rand(std::vector<size_t>{4, spec.dim}, seed + 9999);

        InterpreterResolver resolver(interp);
        auto sources = model_sources(model);
        SourceProvider provider = [sources](const std::string& name) -> std::optional<std::string> {
            auto it = sources.find(name);
            if (it == sources.end()) return std::nullopt;
            return it->second;
        };
        Exporter exporter(archive_path(out_dir, model), provider, {&resolver});
        exporter.save_pickle("model", "model.pkl", instance);
        exporter.save_pickle("model", "eg.pkl", Value(example));
        exporter.finalize();
    }
}

TensorHandle NativeModel::run(const TensorHandle& input) const {
    TensorHandle current = input;
    for (size_t i = 0; i < weights.size(); ++i) {
        current = kernels::relu(kernels::add(kernels::matmul(current, weights[i]), biases[i]));
    }
    return current;
}

NativeModel NativeModel::extract(const std::filesystem::path& archive) {
    Interpreter scratch;
    HermeticImporter importer(scratch, archive);
    Value model = importer.load_pickle("model", "model.pkl");
    Value example = importer.load_pickle("model", "eg.pkl");

    NativeModel native;
    native.example_input = example.as_tensor();
    if (model.is_instance()) {
        if (const Value* ws = model.as_instance()->attrs.find("ws")) {
            for (const Value& w : *ws->as_list()) native.weights.push_back(w.as_tensor());
        }
        if (const Value* bs = model.as_instance()->attrs.find("bs")) {
            for (const Value& b : *bs->as_list()) native.biases.push_back(b.as_tensor());
        }
    }
    return native;
}

namespace {

struct PointSetup {
    std::function<TensorHandle(const TensorHandle&)> call;
    std::function<uint64_t()> held_nanos;  // null for native
    TensorHandle input;
};

std::vector<uint8_t> tensor_bytes(const TensorHandle& t) {
    auto b = t.bytes();
    return {b.begin(), b.end()};
}

BenchRow run_point(const PointSetup& setup, const char* config, const char* model, int threads,
                   double warmup_s, double duration_s) {
    // Reference output; every response must match it bit-exactly.
    const std::vector<uint8_t> expected = tensor_bytes(setup.call(setup.input));

    std::atomic<bool> mismatch{false};
    std::atomic<uint64_t> total_requests{0};
    std::atomic<uint64_t> total_busy_ns{0};

    const auto start = Clock::now();
    const auto warmup_end = start + std::chrono::duration_cast<Clock::duration>(
                                        std::chrono::duration<double>(warmup_s));
    const auto measure_end = warmup_end + std::chrono::duration_cast<Clock::duration>(
                                              std::chrono::duration<double>(duration_s));

    std::vector<std::thread> workers;
    workers.reserve(threads);
    for (int i = 0; i < threads; ++i) {
        workers.emplace_back([&] {
            uint64_t requests = 0;
            uint64_t busy_ns = 0;
            while (true) {
                auto t0 = Clock::now();
                if (t0 >= measure_end) break;
                TensorHandle out = setup.call(setup.input);
                auto t1 = Clock::now();
                auto bytes = out.bytes();
                if (bytes.size() != expected.size() ||
                    std::memcmp(bytes.data(), expected.data(), bytes.size()) != 0) {
                    mismatch.store(true);
                }
                if (t1 > warmup_end && t1 <= measure_end) {
                    ++requests;
                    busy_ns +=
                        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
                }
            }
            total_requests.fetch_add(requests);
            total_busy_ns.fetch_add(busy_ns);
        });
    }

    uint64_t held0 = 0, held1 = 0;
    std::this_thread::sleep_until(warmup_end);
    if (setup.held_nanos) held0 = setup.held_nanos();
    std::this_thread::sleep_until(measure_end);
    if (setup.held_nanos) held1 = setup.held_nanos();
    for (auto& w : workers) w.join();

    if (mismatch.load()) {
        throw RuntimeError("benchmark response did not match the reference output");
    }

    BenchRow row;
    row.config = config;
    row.model = model;
    row.threads = threads;
    row.requests = total_requests.load();
    row.seconds = duration_s;
    row.throughput = duration_s > 0 ? static_cast<double>(row.requests) / duration_s : 0.0;
    uint64_t busy = total_busy_ns.load();
    if (setup.held_nanos && busy > 0) {
        double fraction = static_cast<double>(held1 - held0) / static_cast<double>(busy);
        row.interp_fraction = fraction < 0.0 ? 0.0 : (fraction > 1.0 ? 1.0 : fraction);
    }
    return row;
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
    if (cfg.threads.empty()) throw ConfigError("no thread counts requested");
    for (int t : cfg.threads) {
        if (t < 1) throw ConfigError("thread counts must be positive");
    }
    const auto archive = archive_path(cfg.archives_dir, cfg.model);
    if (!std::filesystem::exists(archive)) {
        throw IoError("archive not found: " + archive.string() + " (run gen first)");
    }

    std::ofstream csv;
    if (!cfg.out_csv.empty()) {
        csv.open(cfg.out_csv, std::ios::trunc);
        if (!csv) throw IoError("cannot open " + cfg.out_csv.string());
        csv << csv_header();
        csv.flush();
    }

    // Built once per run: the pool for interpreted configs, the extracted
    // weights for the native one.
    std::unique_ptr<InterpreterManager> manager;
    MovableObject movable;
    NativeModel native;
    PointSetup setup;
    if (cfg.config == Config::native) {
        native = NativeModel::extract(archive);
        setup.input = native.example_input;
        setup.call = [&native](const TensorHandle& x) { return native.run(x); };
    } else {
        int pool_size = 1;
        if (cfg.config == Config::multi) {
            pool_size = *std::max_element(cfg.threads.begin(), cfg.threads.end());
        }
        manager = std::make_unique<InterpreterManager>(static_cast<size_t>(pool_size));
        PackageHandle package = manager->load_package(archive);
        movable = package.load_pickle("model", "model.pkl");
        {
            // The example input is a plain tensor; fetch it through a session.
            InterpreterSession session = package.acquire_session();
            ObjHandle handle = session.self().attr("load_pickle").call(
                {session.from_host(HostValue("model")), session.from_host(HostValue("eg.pkl"))});
            setup.input = session.to_host(handle).as_tensor();
        }
        setup.call = [&movable](const TensorHandle& x) {
            return movable.call({HostValue(x)}).as_tensor();
        };
        setup.held_nanos = [&manager] { return manager->total_lock_held_nanos(); };
    }

    std::vector<BenchRow> rows;
    for (int threads : cfg.threads) {
        BenchRow row = run_point(setup, config_name(cfg.config), model_name(cfg.model), threads,
                                 cfg.warmup_s, cfg.duration_s);
        rows.push_back(row);
        if (csv.is_open()) {
            csv << csv_line(row);
            csv.flush();
        }
    }
    return rows;
}

std::string csv_header() {
    return "config,model,threads,requests,seconds,throughput,interp_fraction\n";
}

std::string csv_line(const BenchRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%llu,%.6f,%.6f,%.6f\n", row.config.c_str(),
                  row.model.c_str(), row.threads, static_cast<unsigned long long>(row.requests),
                  row.seconds, row.throughput, row.interp_fraction);
    return buf;
}

std::vector<BenchRow> parse_csv(const std::filesystem::path& csv) {
    std::ifstream file(csv);
    if (!file) throw IoError("cannot open " + csv.string());
    std::vector<BenchRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line.rfind("config,", 0) == 0) continue;  // header
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 7) {
            throw FormatError(csv.string() + ":" + std::to_string(line_no) +
                              ": expected 7 fields, got " + std::to_string(fields.size()));
        }
        try {
            BenchRow row;
            row.config = fields[0];
            row.model = fields[1];
            row.threads = std::stoi(fields[2]);
            row.requests = std::stoull(fields[3]);
            row.seconds = std::stod(fields[4]);
            row.throughput = std::stod(fields[5]);
            row.interp_fraction = std::stod(fields[6]);
            rows.push_back(std::move(row));
        } catch (const std::exception&) {
            throw FormatError(csv.string() + ":" + std::to_string(line_no) + ": bad field value");
        }
    }
    return rows;
}

std::string render_report(const std::vector<BenchRow>& rows) {
    if (rows.empty()) return "";
    // model -> config -> threads -> row
    std::map<std::string, std::map<std::string, std::map<int, const BenchRow*>>> grouped;
    std::map<std::string, std::set<int>> thread_sets;
    for (const BenchRow& row : rows) {
        grouped[row.model][row.config][row.threads] = &row;
        thread_sets[row.model].insert(row.threads);
    }
    std::ostringstream out;
    for (const auto& [model, configs] : grouped) {
        out << "model=" << model << "  (throughput req/s";
        out << ", interp_fraction at 1 thread)\n";
        out << "  " << std::setw(8) << std::left << "config";
        for (int t : thread_sets[model]) {
            out << std::setw(12) << std::right << ("t=" + std::to_string(t));
        }
        out << std::setw(12) << std::right << "frac";
        out << "\n";
        for (const auto& [config, by_threads] : configs) {
            out << "  " << std::setw(8) << std::left << config;
            for (int t : thread_sets[model]) {
                auto it = by_threads.find(t);
                char buf[32];
                if (it != by_threads.end()) {
                    std::snprintf(buf, sizeof(buf), "%.1f", it->second->throughput);
                } else {
                    std::snprintf(buf, sizeof(buf), "-");
                }
                out << std::setw(12) << std::right << buf;
            }
            auto one = by_threads.find(1);
            char frac[32];
            if (one != by_threads.end()) {
                std::snprintf(frac, sizeof(frac), "%.3f", one->second->interp_fraction);
            } else {
                std::snprintf(frac, sizeof(frac), "-");
            }
            out << std::setw(12) << std::right << frac << "\n";
        }
    }
    return out.str();
}

std::vector<std::string> threshold_failures(const std::vector<BenchRow>& rows) {
    auto find = [&](const char* config, const char* model, int threads) -> const BenchRow* {
        for (const BenchRow& row : rows) {
            if (row.config == config && row.model == model && row.threads == threads) return &row;
        }
        return nullptr;
    };
    std::vector<std::string> failures;
    char buf[256];
    const unsigned cores = std::max(1u, std::thread::hardware_concurrency());

    // Single-interpreter plateau: the GIL caps scaling of the small model.
    if (const BenchRow* r1 = find("single", "small", 1)) {
        if (const BenchRow* r8 = find("single", "small", 8)) {
            double ratio = r8->throughput / r1->throughput;
            if (!(ratio <= 1.5)) {
                std::snprintf(buf, sizeof(buf),
                              "single/small plateau: throughput(8)/throughput(1) = %.2f > 1.5",
                              ratio);
                failures.push_back(buf);
            }
        }
    }

    // Multi-interpreter scaling of the small model.
    {
        const int target_t = cores >= 8 ? 8 : static_cast<int>(cores);
        const double target_ratio = cores >= 8 ? 3.0 : 0.5 * static_cast<double>(cores);
        const BenchRow* r1 = find("multi", "small", 1);
        const BenchRow* rt = find("multi", "small", target_t);
        if (r1 && rt && target_t > 1) {
            double ratio = rt->throughput / r1->throughput;
            if (!(ratio >= target_ratio)) {
                std::snprintf(
                    buf, sizeof(buf),
                    "multi/small scaling: throughput(%d)/throughput(1) = %.2f < %.2f (%u cores)",
                    target_t, ratio, target_ratio, cores);
                failures.push_back(buf);
            }
        }
    }

    // Large-model parity across all three configs at 4 threads.
    {
        const BenchRow* multi = find("multi", "large", 4);
        const BenchRow* single = find("single", "large", 4);
        const BenchRow* native = find("native", "large", 4);
        if (multi && single && native) {
            double lo = std::min({multi->throughput, single->throughput, native->throughput});
            double hi = std::max({multi->throughput, single->throughput, native->throughput});
            if (!(hi <= 1.25 * lo)) {
                std::snprintf(buf, sizeof(buf),
                              "large parity at 4 threads: spread %.2fx exceeds 1.25x "
                              "(multi=%.1f single=%.1f native=%.1f)",
                              hi / lo, multi->throughput, single->throughput, native->throughput);
                failures.push_back(buf);
            }
        }
    }

    // Native is the ceiling (5% measurement slack).
    for (const BenchRow& row : rows) {
        if (row.config == "native") continue;
        if (const BenchRow* native = find("native", row.model.c_str(), row.threads)) {
            if (!(native->throughput >= 0.95 * row.throughput)) {
                std::snprintf(buf, sizeof(buf),
                              "native dominance: %s/%s at %d threads: native %.1f < %.1f",
                              row.config.c_str(), row.model.c_str(), row.threads,
                              native->throughput, row.throughput);
                failures.push_back(buf);
            }
        }
    }

    // multi with a pool of one and single are the same system (10%).
    for (const BenchRow& row : rows) {
        if (row.config != "multi" || row.threads != 1) continue;
        if (const BenchRow* single = find("single", row.model.c_str(), 1)) {
            double ratio = row.throughput / single->throughput;
            if (ratio < 0.9 || ratio > 1.1) {
                std::snprintf(buf, sizeof(buf),
                              "config equivalence: multi(1)/single(1) on %s = %.2f outside 10%%",
                              row.model.c_str(), ratio);
                failures.push_back(buf);
            }
        }
    }
    return failures;
}

}  // namespace mscript::bench
