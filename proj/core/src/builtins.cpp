#include "eval_internal.hpp"
#include "mscript/blobstore.hpp"
#include "mscript/errors.hpp"

namespace mscript {

namespace {

void expect_arity(const char* name, const std::vector<Value>& args, size_t min, size_t max) {
    if (args.size() < min || args.size() > max) {
        throw TypeError(std::string(name) + "() takes " +
                        (min == max ? std::to_string(min)
                                    : std::to_string(min) + " to " + std::to_string(max)) +
                        " arguments (" + std::to_string(args.size()) + " given)");
    }
}

const TensorHandle& expect_tensor(const char* name, const Value& v, size_t pos) {
    if (!v.is_tensor()) {
        if (v.is_mock()) throw MockUsedError(v.as_mock()->full_path());
        throw TypeError(std::string(name) + "(): argument " + std::to_string(pos + 1) +
                        " must be a tensor, not '" + v.type_name() + "'");
    }
    return v.as_tensor();
}

std::vector<size_t> expect_shape(const char* name, const Value& v) {
    if (!v.is_list()) {
        throw TypeError(std::string(name) + "(): shape must be a list of non-negative ints");
    }
    std::vector<size_t> shape;
    for (const Value& d : *v.as_list()) {
        if (!d.is_int() || d.as_int() < 0) {
            throw TypeError(std::string(name) + "(): shape must be a list of non-negative ints");
        }
        shape.push_back(static_cast<size_t>(d.as_int()));
    }
    return shape;
}

// Uniform nested-list extraction: shape from nesting depth, f32 when any
// float appears, i64 otherwise.
void flatten_list(const Value& v, size_t depth, std::vector<size_t>& shape,
                  std::vector<double>& data, bool& any_float) {
    if (v.is_list()) {
        const auto& items = *v.as_list();
        if (depth == shape.size()) {
            shape.push_back(items.size());
        } else if (shape[depth] != items.size()) {
            throw ShapeError("from_list(): ragged nested list");
        }
        for (const Value& item : items) flatten_list(item, depth + 1, shape, data, any_float);
        return;
    }
    if (depth != shape.size()) throw ShapeError("from_list(): ragged nested list");
    if (v.is_int()) {
        data.push_back(static_cast<double>(v.as_int()));
    } else if (v.is_float()) {
        data.push_back(v.as_float());
        any_float = true;
    } else {
        throw TypeError(std::string("from_list(): elements must be numbers, not '") +
                        v.type_name() + "'");
    }
}

Value make_native(const char* name, std::function<Value(Interpreter&, std::vector<Value>&)> fn) {
    auto native = std::make_shared<NativeFn>();
    native->name = name;
    native->fn = std::move(fn);
    return Value(NativeRef(std::move(native)));
}

Value nt_zeros(Interpreter& interp, std::vector<Value>& args) {
    expect_arity("zeros", args, 1, 1);
    auto shape = expect_shape("zeros", args[0]);
    return Value(interp.run_unlocked([&] { return kernels::zeros(shape); }));
}

Value nt_rand(Interpreter& interp, std::vector<Value>& args) {
    expect_arity("rand", args, 2, 2);
    auto shape = expect_shape("rand", args[0]);
    if (!args[1].is_int()) throw TypeError("rand(): seed must be an int");
    uint64_t seed = static_cast<uint64_t>(args[1].as_int());
    return Value(interp.run_unlocked([&] { return kernels::rand(shape, seed); }));
}

Value nt_from_list(Interpreter& interp, std::vector<Value>& args) {
    expect_arity("from_list", args, 1, 1);
    if (!args[0].is_list()) throw TypeError("from_list(): argument must be a list");
    std::vector<size_t> shape;
    std::vector<double> data;
    bool any_float = false;
    flatten_list(args[0], 0, shape, data, any_float);
    return Value(interp.run_unlocked([&] {
        if (any_float) {
            std::vector<float> f(data.size());
            for (size_t i = 0; i < data.size(); ++i) f[i] = static_cast<float>(data[i]);
            return kernels::from_f32(shape, std::move(f));
        }
        std::vector<int64_t> ints(data.size());
        for (size_t i = 0; i < data.size(); ++i) ints[i] = static_cast<int64_t>(data[i]);
        return kernels::from_i64(shape, std::move(ints));
    }));
}

template <TensorHandle (*Kernel)(const TensorHandle&, const TensorHandle&)>
Value nt_binary(const char* name, Interpreter& interp, std::vector<Value>& args) {
    expect_arity(name, args, 2, 2);
    TensorHandle a = expect_tensor(name, args[0], 0);
    TensorHandle b = expect_tensor(name, args[1], 1);
    return Value(interp.run_unlocked([&] { return Kernel(a, b); }));
}

template <TensorHandle (*Kernel)(const TensorHandle&)>
Value nt_unary(const char* name, Interpreter& interp, std::vector<Value>& args) {
    expect_arity(name, args, 1, 1);
    TensorHandle a = expect_tensor(name, args[0], 0);
    return Value(interp.run_unlocked([&] { return Kernel(a); }));
}

Value builtin_len(Interpreter&, std::vector<Value>& args) {
    expect_arity("len", args, 1, 1);
    const Value& v = args[0];
    if (v.is_str()) return Value(static_cast<int64_t>(v.as_str().size()));
    if (v.is_list()) return Value(static_cast<int64_t>(v.as_list()->size()));
    if (v.is_dict()) return Value(static_cast<int64_t>(v.as_dict()->size()));
    if (v.is_mock()) throw MockUsedError(v.as_mock()->full_path());
    throw TypeError(std::string("object of type '") + v.type_name() + "' has no len()");
}

Value builtin_range(Interpreter&, std::vector<Value>& args) {
    expect_arity("range", args, 1, 2);
    for (const Value& a : args) {
        if (!a.is_int()) throw TypeError("range(): arguments must be ints");
    }
    int64_t start = args.size() == 2 ? args[0].as_int() : 0;
    int64_t stop = args.size() == 2 ? args[1].as_int() : args[0].as_int();
    std::vector<Value> items;
    if (stop > start) items.reserve(static_cast<size_t>(stop - start));
    for (int64_t i = start; i < stop; ++i) items.emplace_back(i);
    return Value::list(std::move(items));
}

}  // namespace

namespace detail {

void install_core_builtins(Interpreter&, ModuleEnv& builtins) {
    builtins.set("len", make_native("len", builtin_len));
    builtins.set("range", make_native("range", builtin_range));
}

}  // namespace detail

NativeModuleProvider default_tensor_module() {
    return [](Interpreter&) {
        auto env = std::make_shared<ModuleEnv>("nt", ImportFn{});
        env->set("zeros", make_native("nt.zeros", nt_zeros));
        env->set("rand", make_native("nt.rand", nt_rand));
        env->set("from_list", make_native("nt.from_list", nt_from_list));
        env->set("add", make_native("nt.add", [](Interpreter& in, std::vector<Value>& a) {
                     return nt_binary<kernels::add>("add", in, a);
                 }));
        env->set("mul", make_native("nt.mul", [](Interpreter& in, std::vector<Value>& a) {
                     return nt_binary<kernels::mul>("mul", in, a);
                 }));
        env->set("matmul", make_native("nt.matmul", [](Interpreter& in, std::vector<Value>& a) {
                     return nt_binary<kernels::matmul>("matmul", in, a);
                 }));
        env->set("relu", make_native("nt.relu", [](Interpreter& in, std::vector<Value>& a) {
                     return nt_unary<kernels::relu>("relu", in, a);
                 }));
        env->set("sum", make_native("nt.sum", [](Interpreter& in, std::vector<Value>& a) {
                     return nt_unary<kernels::sum>("sum", in, a);
                 }));
        return env;
    };
}

}  // namespace mscript
