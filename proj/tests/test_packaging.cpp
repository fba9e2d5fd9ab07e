#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mscript/interpreter.hpp"
#include "mscript/packaging.hpp"
#include "mscript/parser.hpp"
#include "mscript/pickle.hpp"

using namespace mscript;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() / ("mscript_pkg_test_" + std::to_string(getpid()) +
                                                "_" + std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

SourceProvider map_provider(std::map<std::string, std::string> sources) {
    return [sources](const std::string& name) -> std::optional<std::string> {
        auto it = sources.find(name);
        if (it == sources.end()) return std::nullopt;
        return it->second;
    };
}

std::string slurp(const std::vector<uint8_t>& bytes) {
    return std::string(bytes.begin(), bytes.end());
}

// Independent archive validator: every pickle GLOBAL must resolve to packaged
// source, an extern line, or a mocked line; every import in packaged source
// must resolve likewise; every TENSOR index must have its data file.
void validate_archive(const fs::path& path) {
    ZipReader zip(path);
    auto parse_lines = [&](const std::string& entry) {
        std::set<std::string> out;
        std::string text = slurp(zip.read(entry));
        std::string line;
        for (char c : text) {
            if (c == '\n') {
                if (!line.empty()) out.insert(line);
                line.clear();
            } else {
                line += c;
            }
        }
        return out;
    };
    auto externs = parse_lines("extern_modules");
    auto mocked = parse_lines("mocked_modules");
    auto resolvable = [&](const std::string& module) {
        std::string code_entry = "code/";
        for (char c : module) code_entry += c == '.' ? '/' : c;
        code_entry += ".ms";
        if (zip.contains(code_entry)) return true;
        if (externs.count(module)) return true;
        if (mocked.count(module)) return true;
        for (size_t dot = module.find('.'); dot != std::string::npos;
             dot = module.find('.', dot + 1)) {
            if (mocked.count(module.substr(0, dot))) return true;
        }
        return false;
    };
    for (const std::string& name : zip.names()) {
        if (name.size() > 4 && name.substr(name.size() - 4) == ".pkl") {
            auto result = scan(zip.read(name));
            for (const GlobalRef& ref : result.global_refs) {
                INFO("pickle ", name, " references ", ref.module, ".", ref.name);
                CHECK(resolvable(ref.module));
            }
            for (BlobKey index : result.blob_refs) {
                CHECK(zip.contains("data/" + std::to_string(index) + ".nt"));
            }
        }
        if (name.rfind("code/", 0) == 0) {
            std::string module;
            for (size_t i = 5; i + 3 < name.size(); ++i) {
                module += name[i] == '/' ? '.' : name[i];
            }
            auto ast = parse_module(module, slurp(zip.read(name)));
            for (const ImportDecl& decl : ast->imports) {
                INFO("module ", module, " imports ", decl.module);
                CHECK(resolvable(decl.module));
            }
        }
    }
}

// A model package: class net.Model holding a weight, net imports layers.
struct ExportFixture {
    Interpreter interp;
    InterpreterResolver resolver{interp};
    std::map<std::string, std::string> sources = {
        {"net",
         "import layers\n"
         "\n"
         "class Model:\n"
         "  def __init__(self, w):\n"
         "    self.w = w\n"
         "  def __call__(self, x):\n"
         "    return layers.apply(x, self.w)\n"},
        {"layers",
         "def apply(x, w):\n"
         "  return nt.matmul(x, w)\n"},
    };
    std::map<std::string, std::shared_ptr<ModuleEnv>> cache;

    std::shared_ptr<ModuleEnv> load(const std::string& name) {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        auto env = interp.exec_module(parse_module(name, sources.at(name)),
                                      [this](const std::string& n) { return load(n); });
        cache[name] = env;
        return env;
    }

    Value build_model(uint64_t seed) {
        load("net");
        Value cls = interp.get_global("net", "Model");
        Value w(kernels::rand(std::vector<size_t>{3, 2}, seed));
        return interp.call_value(cls, {w});
    }
};

}  // namespace

TEST_CASE("module pattern truth table") {
    auto matches = [](const char* pattern, const char* name) {
        return ModulePattern(pattern).matches(name);
    };
    // ** matches zero or more segments, including the root itself.
    CHECK(matches("a.**", "a"));
    CHECK(matches("a.**", "a.b"));
    CHECK(matches("a.**", "a.b.c"));
    CHECK_FALSE(matches("a.**", "b"));
    CHECK_FALSE(matches("a.**", "ab"));
    // * matches exactly one segment, never a dotted path.
    CHECK_FALSE(matches("a.*", "a"));
    CHECK(matches("a.*", "a.b"));
    CHECK_FALSE(matches("a.*", "a.b.c"));
    CHECK(matches("*", "a"));
    CHECK_FALSE(matches("*", "a.b"));
    // ** alone matches anything.
    CHECK(matches("**", "a"));
    CHECK(matches("**", "a.b.c.d"));
    // Literals are whole-name.
    CHECK(matches("a.b", "a.b"));
    CHECK_FALSE(matches("a.b", "a.b.c"));
    CHECK_FALSE(matches("a.b", "a"));
    // Interior globs.
    CHECK(matches("a.*.c", "a.b.c"));
    CHECK_FALSE(matches("a.*.c", "a.b.d.c"));
    CHECK(matches("a.**.c", "a.b.d.c"));
    CHECK(matches("a.**.c", "a.c"));

    CHECK_THROWS_AS(ModulePattern(""), PatternError);
    CHECK_THROWS_AS(ModulePattern("a..b"), PatternError);
    CHECK_THROWS_AS(ModulePattern("a."), PatternError);
    CHECK_THROWS_AS(ModulePattern(".a"), PatternError);
    CHECK_THROWS_AS(ModulePattern("a.**x"), PatternError);
    CHECK_THROWS_AS(ModulePattern("1a"), PatternError);
}

TEST_CASE("classification precedence is extern > mock > intern") {
    std::vector<ModulePattern> externs;
    std::vector<ModulePattern> mocks;
    externs.emplace_back("torchlike.**");
    mocks.emplace_back("torchlike.**");  // same pattern in both: extern wins
    mocks.emplace_back("numpy");
    CHECK(classify_module("torchlike.nn", externs, mocks) == ModuleClass::extern_);
    CHECK(classify_module("numpy", externs, mocks) == ModuleClass::mock);
    CHECK(classify_module("mymodel", externs, mocks) == ModuleClass::intern);

    // Registration order within a category does not matter, and the category
    // order is fixed regardless of which rule was added first.
    std::vector<ModulePattern> externs2;
    std::vector<ModulePattern> mocks2;
    mocks2.emplace_back("shared.**");
    externs2.emplace_back("shared.mid.**");
    CHECK(classify_module("shared.mid.leaf", externs2, mocks2) == ModuleClass::extern_);
    CHECK(classify_module("shared.other", externs2, mocks2) == ModuleClass::mock);
}

TEST_CASE("exporter basics") {
    fs::path dir = temp_dir();

    SUBCASE("fresh exporter externs only nt") {
        Exporter e(dir / "a.pkg", map_provider({}));
        CHECK(e.extern_module_names() == std::set<std::string>{"nt"});
    }

    SUBCASE("finalize with no saves writes a valid archive") {
        Exporter e(dir / "empty.pkg", map_provider({}));
        e.finalize();
        ZipReader zip(dir / "empty.pkg");
        CHECK(slurp(zip.read("extern_modules")) == "nt\n");
        CHECK(slurp(zip.read("mocked_modules")) == "");
        validate_archive(dir / "empty.pkg");
    }

    SUBCASE("save Int 1 produces a pickle and no code") {
        Exporter e(dir / "int.pkg", map_provider({}));
        e.save_pickle("model", "x.pkl", Value(static_cast<int64_t>(1)));
        e.finalize();
        ZipReader zip(dir / "int.pkg");
        CHECK(zip.contains("model/x.pkl"));
        for (const std::string& name : zip.names()) {
            CHECK(name.rfind("code/", 0) != 0);
        }
    }

    SUBCASE("overwrite is atomic via temp and rename") {
        {
            Exporter e(dir / "s.pkg", map_provider({}));
            e.save_pickle("model", "v.pkl", Value(static_cast<int64_t>(1)));
            e.finalize();
        }
        {
            Exporter e(dir / "s.pkg", map_provider({}));
            e.save_pickle("model", "v.pkl", Value(static_cast<int64_t>(2)));
            e.finalize();
        }
        ZipReader zip(dir / "s.pkg");
        CHECK_FALSE(fs::exists(dir / "s.pkg.tmp"));
        auto bytes = zip.read("model/v.pkl");
        CHECK(bytes[1] == 2);  // INT payload of the second write
    }
}

TEST_CASE("dependency scanning walks pickles and imports") {
    fs::path dir = temp_dir();
    ExportFixture fx;
    Value model = fx.build_model(3);

    SUBCASE("model pulls in its class module and transitive imports") {
        Exporter e(dir / "m.pkg", map_provider(fx.sources), {&fx.resolver});
        e.save_pickle("model", "model.pkl", model);
        e.finalize();
        ZipReader zip(dir / "m.pkg");
        CHECK(zip.contains("code/net.ms"));
        CHECK(zip.contains("code/layers.ms"));
        CHECK(zip.contains("data/0.nt"));
        CHECK(slurp(zip.read("code/net.ms")) == fx.sources.at("net"));
        validate_archive(dir / "m.pkg");
    }

    SUBCASE("missing transitive dependency lists the requirement chain") {
        auto sources = fx.sources;
        sources["net"] = "import layers\nimport dataload\n" + sources["net"].substr(14);
        ExportFixture fx2;
        fx2.sources = sources;
        fx2.sources["dataload"] = "x = 0\n";  // present at build time only
        Value model2 = fx2.build_model(3);
        sources.erase("dataload");  // the exporter cannot see it
        Exporter e(dir / "bad.pkg", map_provider(sources), {&fx2.resolver});
        e.save_pickle("model", "model.pkl", model2);
        try {
            e.finalize();
            FAIL("expected DependencyError");
        } catch (const DependencyError& err) {
            std::string msg = err.what();
            CHECK(msg.find("dataload") != std::string::npos);
            CHECK(msg.find("import in net") != std::string::npos);
            CHECK(msg.find("GLOBAL in resource model/model.pkl") != std::string::npos);
        }
    }

    SUBCASE("mocked modules become list entries, not source") {
        auto sources = fx.sources;
        sources["net"] = "import layers\nimport scipy.signal\n" + sources["net"].substr(14);
        ExportFixture fx2;
        fx2.sources = sources;
        // scipy.signal is never used at build time, only imported.
        fx2.sources["scipy.signal"] = "";  // unused; loader would not find it anyway
        Value model2 = [&] {
            fx2.sources.erase("scipy.signal");
            // Execute net with a loader that mocks scipy.signal.
            ImportFn loader = [&](const std::string& name) -> std::shared_ptr<ModuleEnv> {
                if (name == "scipy.signal") return ModuleEnv::make_mock_stub(name);
                auto it = fx2.sources.find(name);
                if (it == fx2.sources.end()) throw ImportError("no module '" + name + "'", name);
                if (auto env = fx2.interp.module(name)) return env;
                return fx2.interp.exec_module(parse_module(name, it->second), loader);
            };
            fx2.interp.exec_module(parse_module("net", sources["net"]), loader);
            Value cls = fx2.interp.get_global("net", "Model");
            return fx2.interp.call_value(cls, {Value(kernels::rand(std::vector<size_t>{3, 2}, 3))});
        }();
        Exporter e(dir / "mock.pkg", map_provider(sources), {&fx2.resolver});
        e.mark_mock({"numpy", "scipy.**"});
        e.save_pickle("model", "model.pkl", model2);
        e.finalize();
        ZipReader zip(dir / "mock.pkg");
        CHECK_FALSE(zip.contains("code/scipy/signal.ms"));
        std::string mocked = slurp(zip.read("mocked_modules"));
        CHECK(mocked == "scipy.signal\n");
        validate_archive(dir / "mock.pkg");
    }

    SUBCASE("extern modules are listed and their source is not packaged") {
        auto sources = fx.sources;
        sources["net"] = "import layers\nimport torchlike.nn\n" + sources["net"].substr(14);
        Exporter e(dir / "ext.pkg", map_provider(sources), {&fx.resolver});
        e.mark_extern({"torchlike.**"});
        e.save_module("net");
        e.finalize();
        ZipReader zip(dir / "ext.pkg");
        std::string externs = slurp(zip.read("extern_modules"));
        CHECK(externs == "nt\ntorchlike.nn\n");
        CHECK_FALSE(zip.contains("code/torchlike/nn.ms"));
    }

    SUBCASE("save_module includes explicit modules and their deps") {
        std::map<std::string, std::string> sources = {
            {"plugins.op", "import util\ndef op(x):\n  return util.twice(x)\n"},
            {"util", "def twice(x):\n  return x * 2\n"},
        };
        Exporter e(dir / "plug.pkg", map_provider(sources));
        e.save_module("plugins.op");
        e.finalize();
        ZipReader zip(dir / "plug.pkg");
        CHECK(zip.contains("code/plugins/op.ms"));
        CHECK(zip.contains("code/util.ms"));
        validate_archive(dir / "plug.pkg");
    }

    SUBCASE("explicit module importing a mocked module is fine") {
        std::map<std::string, std::string> sources = {
            {"plugins.op", "import numpy\ndef op(x):\n  return x\n"},
        };
        Exporter e(dir / "plugmock.pkg", map_provider(sources));
        e.mark_mock({"numpy"});
        e.save_module("plugins.op");
        e.finalize();
        validate_archive(dir / "plugmock.pkg");
    }

    SUBCASE("save_module with no source fails immediately") {
        Exporter e(dir / "nosrc.pkg", map_provider({}));
        CHECK_THROWS_AS(e.save_module("ghost"), DependencyError);
    }

    SUBCASE("duplicate resource is rejected") {
        Exporter e(dir / "dup.pkg", map_provider({}));
        e.save_pickle("model", "x.pkl", Value(static_cast<int64_t>(1)));
        CHECK_THROWS_AS(e.save_pickle("model", "x.pkl", Value(static_cast<int64_t>(2))),
                        FormatError);
    }
}

TEST_CASE("archives are byte-identical across runs") {
    fs::path dir = temp_dir();
    auto build_once = [&](const fs::path& out) {
        ExportFixture fx;
        Value model = fx.build_model(11);
        Exporter e(out, map_provider(fx.sources), {&fx.resolver});
        e.mark_mock({"numpy"});
        e.save_pickle("model", "model.pkl", model);
        e.save_pickle("model", "eg.pkl", Value(kernels::rand(std::vector<size_t>{1, 3}, 12)));
        e.finalize();
    };
    build_once(dir / "one.pkg");
    build_once(dir / "two.pkg");
    std::ifstream a(dir / "one.pkg", std::ios::binary);
    std::ifstream b(dir / "two.pkg", std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(sa.size() > 0);
}

TEST_CASE("python zipfile can read our archives") {
    fs::path dir = temp_dir();
    ExportFixture fx;
    Value model = fx.build_model(5);
    Exporter e(dir / "interop.pkg", map_provider(fx.sources), {&fx.resolver});
    e.save_pickle("model", "model.pkl", model);
    e.finalize();

    std::string cmd =
        "python3 -c \"import zipfile,sys; z=zipfile.ZipFile('" + (dir / "interop.pkg").string() +
        "'); z.testzip(); print('\\n'.join(sorted(n.filename for n in z.infolist())));"
        " sys.stdout.write(z.read('extern_modules').decode())\" 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string output;
    char buf[256];
    while (fgets(buf, sizeof(buf), pipe)) output += buf;
    int status = pclose(pipe);
    CHECK(status == 0);
    CHECK(output.find("code/net.ms") != std::string::npos);
    CHECK(output.find("model/model.pkl") != std::string::npos);
    CHECK(output.find("nt\n") != std::string::npos);
}

TEST_CASE("hermetic importer") {
    fs::path dir = temp_dir();
    ExportFixture fx;
    Value model = fx.build_model(21);
    TensorHandle example = kernels::rand(std::vector<size_t>{1, 3}, 22);
    {
        Exporter e(dir / "model.pkg", map_provider(fx.sources), {&fx.resolver});
        e.save_pickle("model", "model.pkl", model);
        e.save_pickle("model", "eg.pkl", Value(example));
        e.finalize();
    }

    SUBCASE("importer_new validates the archive") {
        Interpreter interp;
        CHECK_THROWS_AS(HermeticImporter(interp, dir / "missing.pkg"), IoError);
        std::ofstream bad(dir / "bad.pkg", std::ios::binary);
        bad << "this is not a zip";
        bad.close();
        CHECK_THROWS_AS(HermeticImporter(interp, dir / "bad.pkg"), FormatError);
        HermeticImporter imp(interp, dir / "model.pkg");
        CHECK(imp.module_count() == 0);
    }

    SUBCASE("extern modules resolve to the interpreter's system registry") {
        Interpreter interp;
        HermeticImporter imp(interp, dir / "model.pkg");
        auto nt = imp.import_module("nt");
        CHECK(nt == interp.system_module("nt"));
        CHECK(imp.system_lookups() == std::set<std::string>{"nt"});
    }

    SUBCASE("import_module memoizes") {
        Interpreter interp;
        HermeticImporter imp(interp, dir / "model.pkg");
        auto a = imp.import_module("net");
        auto b = imp.import_module("net");
        CHECK(a == b);
        CHECK(imp.module_count() >= 2);  // net and layers
        // The interpreter's own module table stays clean.
        CHECK(interp.module_count() == 0);
    }

    SUBCASE("hermeticity: non-extern names never touch the system registry") {
        Interpreter interp;
        interp.register_system_module("secret", std::make_shared<ModuleEnv>("secret", ImportFn{}));
        // Build an archive whose code imports `secret` without declaring it.
        std::map<std::string, std::string> sources = {{"app", "import secret\nx = 1\n"}};
        Exporter e(dir / "leaky.pkg", map_provider(sources));
        e.save_module("app");
        try {
            e.finalize();
            FAIL("expected DependencyError");  // exporter already refuses
        } catch (const DependencyError&) {
        }
        // Force the situation at import time instead: archive with the import
        // but secret mocked away at export, then a hand-edited list.
        Exporter e2(dir / "leaky2.pkg", map_provider(sources));
        e2.mark_mock({"secret"});
        e2.save_module("app");
        e2.finalize();
        HermeticImporter imp(interp, dir / "leaky2.pkg");
        auto env = imp.import_module("app");
        // secret resolved to a mock stub, not to the registry module.
        CHECK(imp.system_lookups().empty());
        CHECK(env->get("x")->as_int() == 1);
    }

    SUBCASE("missing modules name the archive") {
        Interpreter interp;
        HermeticImporter imp(interp, dir / "model.pkg");
        try {
            imp.import_module("nowhere");
            FAIL("expected ImportError");
        } catch (const ImportError& e) {
            std::string msg = e.what();
            CHECK(msg.find("nowhere") != std::string::npos);
            CHECK(msg.find("model.pkg") != std::string::npos);
        }
    }

    SUBCASE("circular imports are rejected") {
        std::map<std::string, std::string> sources = {
            {"a", "import b\n"},
            {"b", "import a\n"},
        };
        Exporter e(dir / "cyc.pkg", map_provider(sources));
        e.save_module("a");
        e.finalize();
        Interpreter interp;
        HermeticImporter imp(interp, dir / "cyc.pkg");
        CHECK_THROWS_AS(imp.import_module("a"), ImportError);
    }

    SUBCASE("load_pickle reproduces the model bit-exactly") {
        Interpreter interp;
        HermeticImporter imp(interp, dir / "model.pkg");
        Value loaded = imp.load_pickle("model", "model.pkl");
        Value eg = imp.load_pickle("model", "eg.pkl");

        Value expected = fx.interp.call_value(model, {Value(example)});
        Value got = interp.call_value(loaded, {eg});
        REQUIRE(got.is_tensor());
        CHECK(structural_equal(expected, got));
    }

    SUBCASE("repeated loads share materialized blobs") {
        Interpreter interp;
        HermeticImporter imp(interp, dir / "model.pkg");
        Value first = imp.load_pickle("model", "model.pkl");
        auto bytes_after_first = BlobStore::instance().stats().total_bytes;
        Value second = imp.load_pickle("model", "model.pkl");
        CHECK(BlobStore::instance().stats().total_bytes == bytes_after_first);
        CHECK(first.as_instance()->attrs.find("w")->as_tensor().key() ==
              second.as_instance()->attrs.find("w")->as_tensor().key());
    }

    SUBCASE("mocked class used at construction raises MockUsedError") {
        // Pickle references numpy.ndarray; numpy is mocked in the archive.
        std::map<std::string, std::string> sources = {{"holder", "import numpy\n"}};
        ExportFixture fx2;
        fx2.sources = sources;
        Exporter e(dir / "mockclass.pkg", map_provider(sources));
        e.mark_mock({"numpy"});
        e.save_module("holder");
        e.finalize();
        // Hand-build a pickle stream whose GLOBAL points into numpy.
        std::vector<uint8_t> bytes;
        bytes.push_back(OP_GLOBAL);
        auto put_s = [&](const std::string& s) {
            for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(s.size() >> (8 * i)));
            bytes.insert(bytes.end(), s.begin(), s.end());
        };
        put_s("numpy");
        put_s("ndarray");
        bytes.push_back(OP_NEWOBJ);
        bytes.push_back(OP_DICT);
        for (int i = 0; i < 4; ++i) bytes.push_back(0);
        bytes.push_back(OP_SETSTATE);
        bytes.push_back(OP_STOP);
        Interpreter interp;
        HermeticImporter imp(interp, dir / "mockclass.pkg");
        try {
            unpickle(bytes, imp);
            FAIL("expected MockUsedError");
        } catch (const MockUsedError& e) {
            CHECK(e.path() == "numpy.ndarray");
        }
    }
}

TEST_CASE("mock semantics through the importer") {
    fs::path dir = temp_dir();
    std::map<std::string, std::string> sources = {
        {"app",
         "from my_module import my_method\n"
         "def run():\n"
         "  return my_method(1)\n"},
    };
    Exporter e(dir / "app.pkg", map_provider(sources));
    e.mark_mock({"my_module"});
    e.save_module("app");
    e.finalize();

    Interpreter interp;
    HermeticImporter imp(interp, dir / "app.pkg");
    // Importing the mocked module (via from-import) succeeds.
    auto env = imp.import_module("app");
    CHECK(env->get("my_method")->is_mock());
    // First use raises, naming the full attribute path.
    Value run = *env->get("run");
    try {
        interp.call_value(run, {});
        FAIL("expected MockUsedError");
    } catch (const MockUsedError& err) {
        CHECK(err.path() == "my_module.my_method");
        CHECK(std::string(err.what()).find("my_module.my_method") != std::string::npos);
    }
}

TEST_CASE("two archives with clashing class names stay isolated") {
    fs::path dir = temp_dir();
    auto build = [&](const fs::path& out, const std::string& marker) {
        std::map<std::string, std::string> sources = {
            {"models",
             "class Resnet:\n"
             "  def __init__(self):\n"
             "    self.tag = \"" + marker + "\"\n"
             "  def __call__(self, x):\n"
             "    return self.tag + x\n"},
        };
        Interpreter interp;
        auto env = interp.exec_module(parse_module("models", sources.at("models")));
        Value cls = *env->get("Resnet");
        Value instance = interp.call_value(cls, {});
        InterpreterResolver resolver(interp);
        Exporter e(out, map_provider(sources), {&resolver});
        e.save_pickle("model", "model.pkl", instance);
        e.finalize();
    };
    build(dir / "alpha.pkg", "alpha:");
    build(dir / "beta.pkg", "beta:");

    // One interpreter, two importers.
    Interpreter interp;
    HermeticImporter imp_a(interp, dir / "alpha.pkg");
    HermeticImporter imp_b(interp, dir / "beta.pkg");
    Value a = imp_a.load_pickle("model", "model.pkl");
    Value b = imp_b.load_pickle("model", "model.pkl");

    CHECK(a.as_instance()->cls != b.as_instance()->cls);
    CHECK(a.as_instance()->cls->qualified_name() == b.as_instance()->cls->qualified_name());
    for (int i = 0; i < 3; ++i) {
        CHECK(interp.call_value(a, {Value("x")}).as_str() == "alpha:x");
        CHECK(interp.call_value(b, {Value("y")}).as_str() == "beta:y");
    }
}

TEST_CASE("re-export fixpoint: values loaded from an archive can be exported again") {
    fs::path dir = temp_dir();
    ExportFixture fx;
    Value model = fx.build_model(31);
    {
        Exporter e(dir / "first.pkg", map_provider(fx.sources), {&fx.resolver});
        e.save_pickle("model", "model.pkl", model);
        e.finalize();
    }

    Interpreter interp;
    HermeticImporter imp(interp, dir / "first.pkg");
    Value loaded = imp.load_pickle("model", "model.pkl");

    // The class now lives in the importer, not the interpreter table, so the
    // importer must be the class locator.
    SourceProvider provider = [&](const std::string& name) -> std::optional<std::string> {
        ZipReader zip(dir / "first.pkg");
        std::string entry = "code/";
        for (char c : name) entry += c == '.' ? '/' : c;
        entry += ".ms";
        if (!zip.contains(entry)) return std::nullopt;
        return slurp(zip.read(entry));
    };
    Exporter e(dir / "second.pkg", provider, {&imp});
    e.save_pickle("model", "model.pkl", loaded);
    e.finalize();
    validate_archive(dir / "second.pkg");

    Interpreter interp2;
    HermeticImporter imp2(interp2, dir / "second.pkg");
    Value reloaded = imp2.load_pickle("model", "model.pkl");
    CHECK(structural_equal(loaded, reloaded));

    // Without the importer in the locator list, the class cannot be found.
    Exporter e_bad(dir / "third.pkg", provider);
    CHECK_THROWS_AS(e_bad.save_pickle("model", "model.pkl", loaded), ClassNotFoundError);
}
