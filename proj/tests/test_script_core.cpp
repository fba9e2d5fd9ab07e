#include <doctest.h>

#include <random>
#include <sstream>

#include "mscript/blobstore.hpp"
#include "mscript/interpreter.hpp"
#include "mscript/parser.hpp"

using namespace mscript;

namespace {

// Independent import scanner: walks the finished AST rather than relying on
// the parser's own bookkeeping.
void walk_imports(const std::vector<StmtPtr>& stmts, std::vector<ImportDecl>& out) {
    for (const auto& stmt : stmts) {
        switch (stmt->kind) {
            case Stmt::Kind::import_:
                out.push_back({static_cast<const ImportStmt&>(*stmt).module, {}});
                break;
            case Stmt::Kind::from_import: {
                const auto& node = static_cast<const FromImportStmt&>(*stmt);
                out.push_back({node.module, node.names});
                break;
            }
            case Stmt::Kind::if_: {
                const auto& node = static_cast<const IfStmt&>(*stmt);
                walk_imports(node.body, out);
                walk_imports(node.orelse, out);
                break;
            }
            case Stmt::Kind::while_:
                walk_imports(static_cast<const WhileStmt&>(*stmt).body, out);
                break;
            case Stmt::Kind::for_:
                walk_imports(static_cast<const ForStmt&>(*stmt).body, out);
                break;
            case Stmt::Kind::func_def:
                walk_imports(static_cast<const FuncDefStmt&>(*stmt).body, out);
                break;
            case Stmt::Kind::class_def:
                for (const auto& m : static_cast<const ClassDefStmt&>(*stmt).methods) {
                    walk_imports(m->body, out);
                }
                break;
            default:
                break;
        }
    }
}

std::vector<ImportDecl> oracle_imports(const ModuleAST& ast) {
    std::vector<ImportDecl> out;
    walk_imports(ast.statements, out);
    return out;
}

std::string snapshot(const Interpreter& interp) {
    std::ostringstream out;
    for (const auto& name : interp.module_names()) {
        out << name << " = {";
        for (const auto& [k, v] : interp.module(name)->bindings()) {
            out << k << ": " << repr(v) << ", ";
        }
        out << "}\n";
    }
    return out.str();
}

Value run_and_get(Interpreter& interp, const std::string& source, const std::string& name) {
    auto env = interp.exec_module(parse_module("m", source));
    auto v = env->get(name);
    REQUIRE(v.has_value());
    return *v;
}

}  // namespace

TEST_CASE("parse_module basics") {
    SUBCASE("empty source") {
        auto ast = parse_module("m", "");
        CHECK(ast->name == "m");
        CHECK(ast->statements.empty());
        CHECK(ast->imports.empty());
    }

    SUBCASE("from import") {
        auto ast = parse_module("m", "from my_module import my_method");
        REQUIRE(ast->imports.size() == 1);
        CHECK(ast->imports[0].module == "my_module");
        CHECK(ast->imports[0].names == std::vector<std::string>{"my_method"});
    }

    SUBCASE("import inside a function body is recorded") {
        auto ast = parse_module("m", "def f(x):\n  import util.helpers\n  return x\n");
        REQUIRE(ast->imports.size() == 1);
        CHECK(ast->imports[0].module == "util.helpers");
        CHECK(ast->imports[0].names.empty());
        CHECK(ast->imports == oracle_imports(*ast));
    }

    SUBCASE("parsing is side-effect free") {
        auto a = parse_module("m", "x = 1\n");
        auto b = parse_module("m", "x = 1\n");
        CHECK(a->statements.size() == b->statements.size());
    }
}

TEST_CASE("syntax errors carry line, column, and token") {
    try {
        parse_module("m", "x = 1\ny = (2\n");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.line() >= 2);
        std::string msg = e.what();
        CHECK(msg.find("line") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_module("m", "def f(:\n  pass\n"), SyntaxError);
    CHECK_THROWS_AS(parse_module("m", "\tx = 1\n"), SyntaxError);
    CHECK_THROWS_AS(parse_module("m", "x = 99999999999999999999999\n"), SyntaxError);
    CHECK_THROWS_AS(parse_module("m", "if a < b < c:\n  pass\n"), SyntaxError);
}

TEST_CASE("import completeness property against the AST-walking oracle") {
    // Hand-built fixture corpus covering every nesting construct.
    const char* fixtures[] = {
        "import a\nimport b.c\n",
        "def f():\n  import x\n  if True:\n    from y import z\n  return 0\n",
        "class C:\n  def m(self):\n    import inner.mod\n    return 1\n",
        "while False:\n  import w\nfor i in range(2):\n  import f2\n",
        "if 1 < 2:\n  import t\nelse:\n  import e\n",
        "x = 1\n",
    };
    for (const char* src : fixtures) {
        auto ast = parse_module("m", src);
        CHECK(ast->imports == oracle_imports(*ast));
    }

    // Randomized statement corpus.
    std::mt19937_64 rng(7);
    for (int iter = 0; iter < 200; ++iter) {
        std::ostringstream src;
        int n = 1 + static_cast<int>(rng() % 5);
        for (int i = 0; i < n; ++i) {
            switch (rng() % 6) {
                case 0: src << "import m" << rng() % 10 << "\n"; break;
                case 1: src << "from p" << rng() % 10 << " import a, b\n"; break;
                case 2:
                    src << "def f" << i << "(x):\n  import nested" << rng() % 10
                        << "\n  return x\n";
                    break;
                case 3:
                    src << "if x" << i << ":\n  import cond" << rng() % 10
                        << "\nelse:\n  from alt" << rng() % 10 << " import q\n";
                    break;
                case 4: src << "x" << i << " = " << rng() % 100 << "\n"; break;
                case 5:
                    src << "class K" << i << ":\n  def m(self):\n    import deep" << rng() % 10
                        << "\n";
                    break;
            }
        }
        auto ast = parse_module("gen", src.str());
        CHECK(ast->imports == oracle_imports(*ast));
    }
}

TEST_CASE("new interpreter contract") {
    Interpreter interp;
    CHECK(interp.module_count() == 0);
    CHECK(interp.builtins()->has("len"));
    CHECK(interp.builtins()->has("range"));
    CHECK(interp.builtins()->has("nt"));

    SUBCASE("default hook raises ImportError for unknown modules") {
        CHECK_THROWS_AS(interp.exec_module(parse_module("m", "import anything\n")), ImportError);
    }

    SUBCASE("two interpreters are isolated") {
        Interpreter a;
        Interpreter b;
        std::string before = snapshot(b);
        a.exec_module(parse_module("m", "x = 41\ny = [1, {\"k\": 2.5}]\n"));
        CHECK(snapshot(b) == before);
        CHECK(b.module_count() == 0);
        CHECK_THROWS_AS(b.get_global("m", "x"), ImportError);
        CHECK(a.get_global("m", "x").as_int() == 41);
    }
}

TEST_CASE("exec_module evaluates statements") {
    Interpreter interp;

    SUBCASE("arithmetic") {
        CHECK(run_and_get(interp, "x = 1 + 2\n", "x").as_int() == 3);
        CHECK(run_and_get(interp, "x = 7 // 2\n", "x").as_int() == 3);
        CHECK(run_and_get(interp, "x = -7 // 2\n", "x").as_int() == -4);
        CHECK(run_and_get(interp, "x = -7 % 3\n", "x").as_int() == 2);
        CHECK(run_and_get(interp, "x = 7 / 2\n", "x").as_float() == doctest::Approx(3.5));
        CHECK(run_and_get(interp, "x = 2.5 * 2\n", "x").as_float() == doctest::Approx(5.0));
        CHECK(run_and_get(interp, "x = \"a\" + \"b\"\n", "x").as_str() == "ab");
        CHECK(run_and_get(interp, "x = [1] + [2]\n", "x").as_list()->size() == 2);
    }

    SUBCASE("integer overflow raises RuntimeError") {
        CHECK_THROWS_AS(
            interp.exec_module(parse_module("m", "x = 9223372036854775807 + 1\n")),
            RuntimeError);
        CHECK_THROWS_AS(interp.exec_module(parse_module("m", "x = 1 // 0\n")), RuntimeError);
    }

    SUBCASE("control flow") {
        CHECK(run_and_get(interp,
                          "x = 0\n"
                          "i = 0\n"
                          "while i < 5:\n"
                          "  x = x + i\n"
                          "  i = i + 1\n",
                          "x")
                  .as_int() == 10);
        CHECK(run_and_get(interp,
                          "x = 0\n"
                          "for i in range(4):\n"
                          "  x = x + i\n",
                          "x")
                  .as_int() == 6);
        CHECK(run_and_get(interp,
                          "if 1 > 2:\n"
                          "  x = \"a\"\n"
                          "elif 2 > 1:\n"
                          "  x = \"b\"\n"
                          "else:\n"
                          "  x = \"c\"\n",
                          "x")
                  .as_str() == "b");
    }

    SUBCASE("functions, defaults, and classes") {
        CHECK(run_and_get(interp,
                          "def f(x, y=10):\n"
                          "  return x + y\n"
                          "a = f(1)\n",
                          "a")
                  .as_int() == 11);
        Value inst = run_and_get(interp,
                                 "class Counter:\n"
                                 "  def __init__(self, start):\n"
                                 "    self.n = start\n"
                                 "  def bump(self):\n"
                                 "    self.n = self.n + 1\n"
                                 "    return self.n\n"
                                 "c = Counter(5)\n"
                                 "c.bump()\n"
                                 "v = c.bump()\n",
                                 "v");
        CHECK(inst.as_int() == 7);
    }

    SUBCASE("dicts keep insertion order") {
        Value d = run_and_get(interp, "d = {\"b\": 1, \"a\": 2}\nd[\"z\"] = 3\n", "d");
        std::vector<std::string> keys;
        for (const auto& [k, v] : *d.as_dict()) keys.push_back(k);
        CHECK(keys == std::vector<std::string>{"b", "a", "z"});
    }

    SUBCASE("nt.zeros binds a tensor checked against the store") {
        Value t = run_and_get(interp, "t = nt.zeros([2, 2])\n", "t");
        REQUIRE(t.is_tensor());
        CHECK(t.as_tensor().shape() == std::vector<size_t>{2, 2});
        auto bytes = BlobStore::instance().bytes(t.as_tensor().key());
        for (uint8_t b : bytes) CHECK(b == 0);
    }

    SUBCASE("script errors carry a traceback") {
        try {
            interp.exec_module(parse_module("mod",
                                            "def inner():\n"
                                            "  return missing_name\n"
                                            "def outer():\n"
                                            "  return inner()\n"
                                            "x = outer()\n"));
            FAIL("expected RuntimeError");
        } catch (const RuntimeError& e) {
            std::string msg = e.what();
            CHECK(msg.find("missing_name") != std::string::npos);
            CHECK(msg.find("Traceback") != std::string::npos);
            CHECK(msg.find("line 2") != std::string::npos);
            CHECK(msg.find("line 5") != std::string::npos);
        }
    }
}

TEST_CASE("exec_module determinism") {
    auto ast = parse_module("m",
                            "a = 1 + 1\n"
                            "b = [a, 2.5, \"s\", {\"k\": [True, None]}]\n"
                            "t = nt.rand([3], 9)\n"
                            "def f(x):\n"
                            "  return x\n");
    Interpreter one;
    Interpreter two;
    auto env1 = one.exec_module(ast);
    auto env2 = two.exec_module(ast);
    auto it1 = env1->bindings().begin();
    auto it2 = env2->bindings().begin();
    for (; it1 != env1->bindings().end(); ++it1, ++it2) {
        CHECK(it1->first == it2->first);
        if (it1->second.is_function()) {
            CHECK(it2->second.is_function());
            continue;  // functions compare by identity; name match is enough
        }
        CHECK(structural_equal(it1->second, it2->second));
    }
}

TEST_CASE("call_value") {
    Interpreter interp;

    SUBCASE("identity function") {
        Value f = run_and_get(interp, "def f(x):\n  return x\n", "f");
        Value out = interp.call_value(f, {Value(static_cast<int64_t>(7))});
        CHECK(out.as_int() == 7);
    }

    SUBCASE("linear layer matches the triple-loop oracle") {
        interp.exec_module(parse_module("net",
                                        "class Linear:\n"
                                        "  def __init__(self, w):\n"
                                        "    self.w = w\n"
                                        "  def __call__(self, x):\n"
                                        "    return nt.matmul(x, self.w)\n"
                                        "model = Linear(nt.from_list([[1.0, 2.0], [3.0, 4.0], "
                                        "[5.0, 6.0]]))\n"));
        Value model = interp.get_global("net", "model");
        TensorHandle x = kernels::from_f32(std::vector<size_t>{1, 3}, {1.0f, 0.5f, 2.0f});
        Value out = interp.call_value(model, {Value(x)});
        REQUIRE(out.is_tensor());
        CHECK(out.as_tensor().shape() == std::vector<size_t>{1, 2});
        // oracle: [1*1 + 0.5*3 + 2*5, 1*2 + 0.5*4 + 2*6]
        auto got = out.as_tensor().f32();
        CHECK(got[0] == doctest::Approx(12.5f));
        CHECK(got[1] == doctest::Approx(16.0f));
    }

    SUBCASE("arity and callability errors") {
        Value f = run_and_get(interp, "def f(x):\n  return x\n", "f");
        CHECK_THROWS_AS(interp.call_value(f, {}), TypeError);
        CHECK_THROWS_AS(interp.call_value(Value(static_cast<int64_t>(3)), {}), TypeError);
    }

    SUBCASE("calling a mock raises MockUsedError") {
        Value mock(std::make_shared<const MockInfo>(MockInfo{"numpy", {"array"}}));
        try {
            interp.call_value(mock, {});
            FAIL("expected MockUsedError");
        } catch (const MockUsedError& e) {
            CHECK(e.path() == "numpy.array");
        }
    }
}

TEST_CASE("get_global") {
    Interpreter interp;
    interp.exec_module(parse_module("m", "x = 5\n"));
    CHECK(interp.get_global("m", "x").as_int() == 5);
    CHECK_THROWS_AS(interp.get_global("m", "missing"), AttributeError);
    CHECK_THROWS_AS(interp.get_global("nowhere", "x"), ImportError);
    // System modules resolve through the default hook.
    Value zeros = interp.get_global("nt", "zeros");
    CHECK(zeros.is_native());
}

TEST_CASE("mock values record attribute paths and raise on use") {
    Interpreter interp;
    auto stub = ModuleEnv::make_mock_stub("scipy.signal");
    ImportFn hook = [&](const std::string& name) -> std::shared_ptr<ModuleEnv> {
        if (name == "scipy.signal") return stub;
        throw ImportError("no module named '" + name + "'", name);
    };

    SUBCASE("imported mock attribute raises on call with the full path") {
        try {
            interp.exec_module(parse_module("m",
                                            "from scipy.signal import hann\n"
                                            "w = hann(64)\n"),
                               hook);
            FAIL("expected MockUsedError");
        } catch (const MockUsedError& e) {
            CHECK(e.path() == "scipy.signal.hann");
        }
    }

    SUBCASE("attribute chains keep recording until used") {
        try {
            interp.exec_module(parse_module("m",
                                            "import scipy.signal\n"
                                            "x = scipy.signal.windows.hann\n"
                                            "y = x + 1\n"),
                               hook);
            FAIL("expected MockUsedError");
        } catch (const MockUsedError& e) {
            CHECK(e.path() == "scipy.signal.windows.hann");
        }
    }
}

TEST_CASE("lock discipline") {
    Interpreter interp;
    CHECK_FALSE(interp.lock_held_by_this_thread());

    bool probe_ran = false;
    bool held_during_kernel = true;
    interp.set_native_probe([&] {
        probe_ran = true;
        held_during_kernel = interp.lock_held_by_this_thread();
    });
    interp.exec_module(parse_module("m", "t = nt.matmul(nt.rand([8, 8], 1), nt.rand([8, 8], 2))\n"));
    CHECK(probe_ran);
    CHECK_FALSE(held_during_kernel);
    CHECK_FALSE(interp.lock_held_by_this_thread());
    CHECK(interp.lock_held_nanos() > 0);
}

TEST_CASE("interpreter handles transfer between threads") {
    Interpreter interp;
    interp.exec_module(parse_module("m", "x = 1\n"));
    std::thread other([&] {
        CHECK(interp.get_global("m", "x").as_int() == 1);
        interp.exec_module(parse_module("m2", "y = 2\n"));
    });
    other.join();
    CHECK(interp.get_global("m2", "y").as_int() == 2);
}
