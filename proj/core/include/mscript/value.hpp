#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mscript/blobstore.hpp"

namespace mscript {

class Value;
class ModuleEnv;
class Interpreter;
class OrderedDict;
struct ModuleAST;
struct FuncDefStmt;
struct FunctionInfo;
struct ClassInfo;
struct InstanceData;
struct MockInfo;
struct NativeFn;

using ListRef = std::shared_ptr<std::vector<Value>>;
using DictRef = std::shared_ptr<OrderedDict>;
using FunctionRef = std::shared_ptr<const FunctionInfo>;
using ClassRef = std::shared_ptr<const ClassInfo>;
using InstanceRef = std::shared_ptr<InstanceData>;
using ModuleRef = std::shared_ptr<ModuleEnv>;
using MockRef = std::shared_ptr<const MockInfo>;
using NativeRef = std::shared_ptr<const NativeFn>;

class Value {
public:
    struct None {};

    Value() : v_(None{}) {}
    Value(bool b) : v_(b) {}
    Value(int64_t i) : v_(i) {}
    Value(int i) : v_(static_cast<int64_t>(i)) {}
    Value(double f) : v_(f) {}
    Value(std::string s) : v_(std::move(s)) {}
    Value(const char* s) : v_(std::string(s)) {}
    Value(TensorHandle t) : v_(std::move(t)) {}
    Value(ListRef l) : v_(std::move(l)) {}
    Value(DictRef d) : v_(std::move(d)) {}
    Value(FunctionRef f) : v_(std::move(f)) {}
    Value(ClassRef c) : v_(std::move(c)) {}
    Value(InstanceRef i) : v_(std::move(i)) {}
    Value(ModuleRef m) : v_(std::move(m)) {}
    Value(MockRef m) : v_(std::move(m)) {}
    Value(NativeRef n) : v_(std::move(n)) {}

    static Value none() { return Value(); }
    static Value list(std::vector<Value> items) {
        return Value(std::make_shared<std::vector<Value>>(std::move(items)));
    }
    static Value dict();

    bool is_none() const { return std::holds_alternative<None>(v_); }
    bool is_bool() const { return std::holds_alternative<bool>(v_); }
    bool is_int() const { return std::holds_alternative<int64_t>(v_); }
    bool is_float() const { return std::holds_alternative<double>(v_); }
    bool is_str() const { return std::holds_alternative<std::string>(v_); }
    bool is_list() const { return std::holds_alternative<ListRef>(v_); }
    bool is_dict() const { return std::holds_alternative<DictRef>(v_); }
    bool is_tensor() const { return std::holds_alternative<TensorHandle>(v_); }
    bool is_function() const { return std::holds_alternative<FunctionRef>(v_); }
    bool is_class() const { return std::holds_alternative<ClassRef>(v_); }
    bool is_instance() const { return std::holds_alternative<InstanceRef>(v_); }
    bool is_module() const { return std::holds_alternative<ModuleRef>(v_); }
    bool is_mock() const { return std::holds_alternative<MockRef>(v_); }
    bool is_native() const { return std::holds_alternative<NativeRef>(v_); }

    bool as_bool() const { return std::get<bool>(v_); }
    int64_t as_int() const { return std::get<int64_t>(v_); }
    double as_float() const { return std::get<double>(v_); }
    const std::string& as_str() const { return std::get<std::string>(v_); }
    const ListRef& as_list() const { return std::get<ListRef>(v_); }
    const DictRef& as_dict() const { return std::get<DictRef>(v_); }
    const TensorHandle& as_tensor() const { return std::get<TensorHandle>(v_); }
    const FunctionRef& as_function() const { return std::get<FunctionRef>(v_); }
    const ClassRef& as_class() const { return std::get<ClassRef>(v_); }
    const InstanceRef& as_instance() const { return std::get<InstanceRef>(v_); }
    const ModuleRef& as_module() const { return std::get<ModuleRef>(v_); }
    const MockRef& as_mock() const { return std::get<MockRef>(v_); }
    const NativeRef& as_native() const { return std::get<NativeRef>(v_); }

    const char* type_name() const;

private:
    std::variant<None, bool, int64_t, double, std::string, ListRef, DictRef, TensorHandle,
                 FunctionRef, ClassRef, InstanceRef, ModuleRef, MockRef, NativeRef>
        v_;
};

// Str-keyed map preserving insertion order; the mutable heart of dicts,
// instance attributes, and module bindings.
class OrderedDict {
public:
    Value* find(const std::string& key);
    const Value* find(const std::string& key) const;
    void set(const std::string& key, Value value);
    size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::vector<std::pair<std::string, Value>> items_;
};

struct Param {
    std::string name;
    std::optional<Value> default_value;
};

struct FunctionInfo {
    std::string name;
    std::string module_name;
    std::vector<Param> params;
    const FuncDefStmt* def = nullptr;
    std::shared_ptr<const ModuleAST> ast;  // keeps def alive
    std::weak_ptr<ModuleEnv> globals;      // defining module scope
};

struct ClassInfo {
    std::string name;
    std::string module_name;
    std::vector<std::pair<std::string, FunctionRef>> methods;

    std::string qualified_name() const { return module_name + "." + name; }
    const FunctionRef* find_method(const std::string& method_name) const;
};

struct InstanceData {
    ClassRef cls;
    OrderedDict attrs;
};

struct MockInfo {
    std::string module_name;
    std::vector<std::string> path;

    // Full dotted path, e.g. "scipy.signal.hann".
    std::string full_path() const;
    MockInfo extended(const std::string& attr) const;
};

struct NativeFn {
    std::string name;
    std::function<Value(Interpreter&, std::vector<Value>&)> fn;
};

// Deep structural comparison. Tensors compare by dtype, shape, and contents;
// classes (and the classes of instances) by qualified name, so values loaded
// through different hermetic importers can still compare equal; functions,
// modules, and natives by identity.
bool structural_equal(const Value& a, const Value& b);

// Debug formatter; cycle-safe. Used for snapshots in tests.
std::string repr(const Value& v);

}  // namespace mscript
