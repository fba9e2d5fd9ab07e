#include "mscript/interpreter.hpp"

#include <cmath>
#include <cstdlib>

#include "eval_internal.hpp"
#include "mscript/errors.hpp"

namespace mscript {

namespace {

std::atomic<int> next_interpreter_id{0};

std::vector<std::string> split_dotted(const std::string& name) {
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
        size_t dot = name.find('.', start);
        if (dot == std::string::npos) {
            parts.push_back(name.substr(start));
            return parts;
        }
        parts.push_back(name.substr(start, dot - start));
        start = dot + 1;
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Lock machinery

void Interpreter::lock_gil() {
    constexpr int kSpinRounds = 4000;
    for (int i = 0; i < kSpinRounds; ++i) {
        if (gil_mu_.try_lock()) return;
#if defined(__x86_64__) || defined(__i386__)
        __builtin_ia32_pause();
#else
        std::this_thread::yield();
#endif
    }
    gil_mu_.lock();
}

GilGuard::GilGuard(Interpreter& interp) : interp_(interp), nested_(false) {
    auto me = std::this_thread::get_id();
    if (interp_.gil_owner_.load(std::memory_order_relaxed) == me) {
        ++interp_.gil_depth_;
        nested_ = true;
        return;
    }
    interp_.lock_gil();
    interp_.gil_owner_.store(me, std::memory_order_relaxed);
    interp_.gil_depth_ = 1;
    interp_.gil_acquired_at_ = std::chrono::steady_clock::now();
}

GilGuard::~GilGuard() {
    if (nested_) {
        --interp_.gil_depth_;
        return;
    }
    interp_.account_hold_end();
    interp_.gil_depth_ = 0;
    interp_.gil_owner_.store(std::thread::id{}, std::memory_order_relaxed);
    interp_.gil_mu_.unlock();
}

void Interpreter::account_hold_end() {
    auto now = std::chrono::steady_clock::now();
    held_ns_.fetch_add(
        std::chrono::duration_cast<std::chrono::nanoseconds>(now - gil_acquired_at_).count(),
        std::memory_order_relaxed);
}

Interpreter::Unlocked::Unlocked(Interpreter& in) : interp(in), saved_depth(in.gil_depth_) {
    interp.account_hold_end();
    interp.gil_depth_ = 0;
    interp.gil_owner_.store(std::thread::id{}, std::memory_order_relaxed);
    interp.gil_mu_.unlock();
}

Interpreter::Unlocked::~Unlocked() {
    interp.lock_gil();
    interp.gil_owner_.store(std::this_thread::get_id(), std::memory_order_relaxed);
    interp.gil_depth_ = saved_depth;
    interp.gil_acquired_at_ = std::chrono::steady_clock::now();
}

// ---------------------------------------------------------------------------
// Evaluator

namespace detail {

namespace {

struct Frame {
    Interpreter& interp;
    std::shared_ptr<ModuleEnv> globals;
    std::shared_ptr<const ModuleAST> ast;
    OrderedDict* locals = nullptr;  // null at module level
    std::string function;           // empty at module level
    int line = 0;
};

enum class Flow { normal, returned };

Value eval_expr(Frame& frame, const Expr& expr);
Flow exec_block(Frame& frame, const std::vector<StmtPtr>& stmts, Value& ret);
Value call_function(Interpreter& interp, const FunctionRef& fn, std::vector<Value> args);

[[noreturn]] void raise_mock_use(const MockRef& mock) {
    throw MockUsedError(mock->full_path());
}

Value lookup_name(Frame& frame, const std::string& name) {
    if (frame.locals) {
        if (Value* v = frame.locals->find(name)) return *v;
    }
    if (auto v = frame.globals->get(name)) return *v;
    if (auto v = frame.interp.builtins()->get(name)) return *v;
    throw RuntimeError("name '" + name + "' is not defined");
}

void bind_name(Frame& frame, const std::string& name, Value value) {
    assert(frame.interp.lock_held_by_this_thread());
    if (frame.locals) {
        frame.locals->set(name, std::move(value));
    } else {
        frame.globals->set(name, std::move(value));
    }
}

bool numeric(const Value& v) { return v.is_int() || v.is_float(); }

double as_double(const Value& v) {
    return v.is_int() ? static_cast<double>(v.as_int()) : v.as_float();
}

// Language-level equality: numeric across int/float, deep on containers,
// identity on instances and callables.
bool value_equals(const Value& a, const Value& b) {
    if (a.is_mock()) raise_mock_use(a.as_mock());
    if (b.is_mock()) raise_mock_use(b.as_mock());
    if (numeric(a) && numeric(b)) {
        if (a.is_int() && b.is_int()) return a.as_int() == b.as_int();
        return as_double(a) == as_double(b);
    }
    if (a.is_list() && b.is_list()) {
        const auto& la = *a.as_list();
        const auto& lb = *b.as_list();
        if (la.size() != lb.size()) return false;
        for (size_t i = 0; i < la.size(); ++i) {
            if (!value_equals(la[i], lb[i])) return false;
        }
        return true;
    }
    if (a.is_dict() && b.is_dict()) {
        const auto& da = *a.as_dict();
        const auto& db = *b.as_dict();
        if (da.size() != db.size()) return false;
        for (const auto& [k, v] : da) {
            const Value* other = db.find(k);
            if (!other || !value_equals(v, *other)) return false;
        }
        return true;
    }
    if (a.is_instance() && b.is_instance()) return a.as_instance() == b.as_instance();
    return structural_equal(a, b);
}

[[noreturn]] void binary_type_error(const char* op, const Value& a, const Value& b) {
    throw TypeError(std::string("unsupported operand types for ") + op + ": '" + a.type_name() +
                    "' and '" + b.type_name() + "'");
}

int64_t checked_int_op(BinaryOp op, int64_t a, int64_t b) {
    int64_t out = 0;
    bool overflow = false;
    switch (op) {
        case BinaryOp::add: overflow = __builtin_add_overflow(a, b, &out); break;
        case BinaryOp::sub: overflow = __builtin_sub_overflow(a, b, &out); break;
        case BinaryOp::mul: overflow = __builtin_mul_overflow(a, b, &out); break;
        default: std::abort();
    }
    if (overflow) throw RuntimeError("integer overflow");
    return out;
}

Value apply_binary(BinaryOp op, const Value& a, const Value& b) {
    if (a.is_mock()) raise_mock_use(a.as_mock());
    if (b.is_mock()) raise_mock_use(b.as_mock());
    switch (op) {
        case BinaryOp::add:
            if (a.is_int() && b.is_int()) return Value(checked_int_op(op, a.as_int(), b.as_int()));
            if (numeric(a) && numeric(b)) return Value(as_double(a) + as_double(b));
            if (a.is_str() && b.is_str()) return Value(a.as_str() + b.as_str());
            if (a.is_list() && b.is_list()) {
                std::vector<Value> out = *a.as_list();
                out.insert(out.end(), b.as_list()->begin(), b.as_list()->end());
                return Value::list(std::move(out));
            }
            binary_type_error("+", a, b);
        case BinaryOp::sub:
            if (a.is_int() && b.is_int()) return Value(checked_int_op(op, a.as_int(), b.as_int()));
            if (numeric(a) && numeric(b)) return Value(as_double(a) - as_double(b));
            binary_type_error("-", a, b);
        case BinaryOp::mul:
            if (a.is_int() && b.is_int()) return Value(checked_int_op(op, a.as_int(), b.as_int()));
            if (numeric(a) && numeric(b)) return Value(as_double(a) * as_double(b));
            binary_type_error("*", a, b);
        case BinaryOp::div: {
            if (!numeric(a) || !numeric(b)) binary_type_error("/", a, b);
            double d = as_double(b);
            if (d == 0.0) throw RuntimeError("division by zero");
            return Value(as_double(a) / d);
        }
        case BinaryOp::floordiv: {
            if (a.is_int() && b.is_int()) {
                int64_t x = a.as_int(), y = b.as_int();
                if (y == 0) throw RuntimeError("division by zero");
                if (x == INT64_MIN && y == -1) throw RuntimeError("integer overflow");
                int64_t q = x / y;
                if ((x % y != 0) && ((x < 0) != (y < 0))) --q;
                return Value(q);
            }
            if (numeric(a) && numeric(b)) {
                double d = as_double(b);
                if (d == 0.0) throw RuntimeError("division by zero");
                return Value(std::floor(as_double(a) / d));
            }
            binary_type_error("//", a, b);
        }
        case BinaryOp::mod: {
            if (a.is_int() && b.is_int()) {
                int64_t x = a.as_int(), y = b.as_int();
                if (y == 0) throw RuntimeError("division by zero");
                if (x == INT64_MIN && y == -1) return Value(static_cast<int64_t>(0));
                int64_t r = x % y;
                if (r != 0 && ((r < 0) != (y < 0))) r += y;
                return Value(r);
            }
            if (numeric(a) && numeric(b)) {
                double d = as_double(b);
                if (d == 0.0) throw RuntimeError("division by zero");
                double r = std::fmod(as_double(a), d);
                if (r != 0.0 && ((r < 0.0) != (d < 0.0))) r += d;
                return Value(r);
            }
            binary_type_error("%", a, b);
        }
    }
    std::abort();
}

Value apply_compare(CompareOp op, const Value& a, const Value& b) {
    if (a.is_mock()) raise_mock_use(a.as_mock());
    if (b.is_mock()) raise_mock_use(b.as_mock());
    switch (op) {
        case CompareOp::eq: return Value(value_equals(a, b));
        case CompareOp::ne: return Value(!value_equals(a, b));
        default: break;
    }
    int cmp = 0;
    if (numeric(a) && numeric(b)) {
        if (a.is_int() && b.is_int()) {
            cmp = a.as_int() < b.as_int() ? -1 : (a.as_int() > b.as_int() ? 1 : 0);
        } else {
            double x = as_double(a), y = as_double(b);
            cmp = x < y ? -1 : (x > y ? 1 : 0);
        }
    } else if (a.is_str() && b.is_str()) {
        cmp = a.as_str().compare(b.as_str());
        cmp = cmp < 0 ? -1 : (cmp > 0 ? 1 : 0);
    } else {
        binary_type_error("comparison", a, b);
    }
    switch (op) {
        case CompareOp::lt: return Value(cmp < 0);
        case CompareOp::le: return Value(cmp <= 0);
        case CompareOp::gt: return Value(cmp > 0);
        case CompareOp::ge: return Value(cmp >= 0);
        default: std::abort();
    }
}

Value subscript_get(const Value& obj, const Value& index) {
    if (obj.is_mock()) raise_mock_use(obj.as_mock());
    if (obj.is_list()) {
        if (!index.is_int()) throw TypeError("list indices must be integers");
        const auto& items = *obj.as_list();
        int64_t i = index.as_int();
        if (i < 0) i += static_cast<int64_t>(items.size());
        if (i < 0 || i >= static_cast<int64_t>(items.size())) {
            throw RuntimeError("list index out of range");
        }
        return items[static_cast<size_t>(i)];
    }
    if (obj.is_dict()) {
        if (!index.is_str()) throw TypeError("dict keys must be strings");
        if (const Value* v = obj.as_dict()->find(index.as_str())) return *v;
        throw RuntimeError("key '" + index.as_str() + "' not found");
    }
    throw TypeError(std::string("'") + obj.type_name() + "' object is not subscriptable");
}

void subscript_set(Frame& frame, const Value& obj, const Value& index, Value value) {
    assert(frame.interp.lock_held_by_this_thread());
    (void)frame;
    if (obj.is_mock()) raise_mock_use(obj.as_mock());
    if (obj.is_list()) {
        if (!index.is_int()) throw TypeError("list indices must be integers");
        auto& items = *obj.as_list();
        int64_t i = index.as_int();
        if (i < 0) i += static_cast<int64_t>(items.size());
        if (i < 0 || i >= static_cast<int64_t>(items.size())) {
            throw RuntimeError("list index out of range");
        }
        items[static_cast<size_t>(i)] = std::move(value);
        return;
    }
    if (obj.is_dict()) {
        if (!index.is_str()) throw TypeError("dict keys must be strings");
        obj.as_dict()->set(index.as_str(), std::move(value));
        return;
    }
    throw TypeError(std::string("'") + obj.type_name() + "' object does not support item assignment");
}

void attribute_set(Frame& frame, const Value& obj, const std::string& name, Value value) {
    assert(frame.interp.lock_held_by_this_thread());
    (void)frame;
    if (obj.is_mock()) raise_mock_use(obj.as_mock());
    if (obj.is_instance()) {
        obj.as_instance()->attrs.set(name, std::move(value));
        return;
    }
    if (obj.is_module()) {
        obj.as_module()->set(name, std::move(value));
        return;
    }
    throw TypeError(std::string("cannot set attribute on '") + obj.type_name() + "' object");
}

Value construct_instance(Interpreter& interp, const ClassRef& cls, std::vector<Value> args) {
    auto inst = std::make_shared<InstanceData>();
    inst->cls = cls;
    if (const auto* init = cls->find_method("__init__")) {
        std::vector<Value> full;
        full.reserve(args.size() + 1);
        full.emplace_back(InstanceRef(inst));
        for (auto& a : args) full.push_back(std::move(a));
        call_function(interp, *init, std::move(full));
    } else if (!args.empty()) {
        throw TypeError(cls->qualified_name() + "() takes no arguments");
    }
    return Value(InstanceRef(inst));
}

void do_import(Frame& frame, const std::string& dotted) {
    const ImportFn& importer = frame.globals->import_fn();
    if (!importer) {
        throw ImportError("module '" + frame.globals->name() + "' cannot import", dotted);
    }
    std::shared_ptr<ModuleEnv> env = importer(dotted);
    if (!env) throw ImportError("no module named '" + dotted + "'", dotted);
    auto segments = split_dotted(dotted);
    if (segments.size() == 1) {
        bind_name(frame, segments[0], Value(env));
        return;
    }
    // `import a.b.c` binds `a` to a namespace chain ending at the module.
    Value root;
    bool have_root = false;
    if (frame.locals) {
        if (Value* v = frame.locals->find(segments[0])) {
            root = *v;
            have_root = true;
        }
    } else if (auto v = frame.globals->get(segments[0])) {
        root = *v;
        have_root = true;
    }
    if (!have_root || !root.is_module()) {
        root = Value(std::make_shared<ModuleEnv>(segments[0], ImportFn{}));
        bind_name(frame, segments[0], root);
    }
    std::shared_ptr<ModuleEnv> current = root.as_module();
    std::string prefix = segments[0];
    for (size_t i = 1; i + 1 < segments.size(); ++i) {
        prefix += "." + segments[i];
        auto existing = current->get(segments[i]);
        if (existing && existing->is_module()) {
            current = existing->as_module();
        } else {
            auto wrapper = std::make_shared<ModuleEnv>(prefix, ImportFn{});
            current->set(segments[i], Value(wrapper));
            current = wrapper;
        }
    }
    current->set(segments.back(), Value(env));
}

void do_from_import(Frame& frame, const FromImportStmt& node) {
    const ImportFn& importer = frame.globals->import_fn();
    if (!importer) {
        throw ImportError("module '" + frame.globals->name() + "' cannot import", node.module);
    }
    std::shared_ptr<ModuleEnv> env = importer(node.module);
    if (!env) throw ImportError("no module named '" + node.module + "'", node.module);
    for (const std::string& name : node.names) {
        auto v = env->get(name);
        if (!v) {
            throw ImportError("cannot import name '" + name + "' from '" + node.module + "'",
                              node.module);
        }
        bind_name(frame, name, *v);
    }
}

Value eval_call(Frame& frame, const CallExpr& node) {
    Value callee = eval_expr(frame, *node.callee);
    std::vector<Value> args;
    args.reserve(node.args.size());
    for (const auto& a : node.args) args.push_back(eval_expr(frame, *a));
    frame.line = node.line;
    return call_callable(frame.interp, callee, std::move(args));
}

Value eval_expr(Frame& frame, const Expr& expr) {
    switch (expr.kind) {
        case Expr::Kind::literal:
            return static_cast<const LiteralExpr&>(expr).value;
        case Expr::Kind::name:
            return lookup_name(frame, static_cast<const NameExpr&>(expr).name);
        case Expr::Kind::list: {
            const auto& node = static_cast<const ListExpr&>(expr);
            std::vector<Value> items;
            items.reserve(node.items.size());
            for (const auto& item : node.items) items.push_back(eval_expr(frame, *item));
            return Value::list(std::move(items));
        }
        case Expr::Kind::dict: {
            const auto& node = static_cast<const DictExpr&>(expr);
            auto dict = std::make_shared<OrderedDict>();
            for (const auto& [k, v] : node.items) {
                Value key = eval_expr(frame, *k);
                if (!key.is_str()) throw TypeError("dict keys must be strings");
                dict->set(key.as_str(), eval_expr(frame, *v));
            }
            return Value(std::move(dict));
        }
        case Expr::Kind::attribute: {
            const auto& node = static_cast<const AttributeExpr&>(expr);
            Value obj = eval_expr(frame, *node.object);
            return attribute_get(frame.interp, obj, node.name);
        }
        case Expr::Kind::subscript: {
            const auto& node = static_cast<const SubscriptExpr&>(expr);
            Value obj = eval_expr(frame, *node.object);
            Value index = eval_expr(frame, *node.index);
            return subscript_get(obj, index);
        }
        case Expr::Kind::call:
            return eval_call(frame, static_cast<const CallExpr&>(expr));
        case Expr::Kind::binary: {
            const auto& node = static_cast<const BinaryExpr&>(expr);
            Value lhs = eval_expr(frame, *node.lhs);
            Value rhs = eval_expr(frame, *node.rhs);
            return apply_binary(node.op, lhs, rhs);
        }
        case Expr::Kind::compare: {
            const auto& node = static_cast<const CompareExpr&>(expr);
            Value lhs = eval_expr(frame, *node.lhs);
            Value rhs = eval_expr(frame, *node.rhs);
            return apply_compare(node.op, lhs, rhs);
        }
        case Expr::Kind::unary: {
            const auto& node = static_cast<const UnaryExpr&>(expr);
            Value operand = eval_expr(frame, *node.operand);
            if (node.op == UnaryOp::not_) return Value(!value_truthy(operand));
            if (operand.is_int()) {
                if (operand.as_int() == INT64_MIN) throw RuntimeError("integer overflow");
                return Value(-operand.as_int());
            }
            if (operand.is_float()) return Value(-operand.as_float());
            if (operand.is_mock()) raise_mock_use(operand.as_mock());
            throw TypeError(std::string("bad operand type for unary -: '") +
                            operand.type_name() + "'");
        }
        case Expr::Kind::boolean: {
            const auto& node = static_cast<const BoolExpr&>(expr);
            Value lhs = eval_expr(frame, *node.lhs);
            bool lhs_true = value_truthy(lhs);
            if (node.op == BoolOp::and_) {
                return lhs_true ? eval_expr(frame, *node.rhs) : lhs;
            }
            return lhs_true ? lhs : eval_expr(frame, *node.rhs);
        }
    }
    std::abort();
}

FunctionRef make_function(Frame& frame, const FuncDefStmt& def) {
    auto info = std::make_shared<FunctionInfo>();
    info->name = def.name;
    info->module_name = frame.globals->name();
    info->def = &def;
    info->ast = frame.ast;
    info->globals = frame.globals;
    for (const auto& param : def.params) {
        Param p;
        p.name = param.name;
        if (param.default_value) {
            p.default_value = eval_expr(frame, *param.default_value);
        }
        info->params.push_back(std::move(p));
    }
    return info;
}

Flow exec_stmt(Frame& frame, const Stmt& stmt, Value& ret) {
    frame.line = stmt.line;
    switch (stmt.kind) {
        case Stmt::Kind::expr:
            eval_expr(frame, *static_cast<const ExprStmt&>(stmt).expr);
            return Flow::normal;
        case Stmt::Kind::assign: {
            const auto& node = static_cast<const AssignStmt&>(stmt);
            Value value = eval_expr(frame, *node.value);
            if (node.target->kind == Expr::Kind::name) {
                bind_name(frame, static_cast<const NameExpr&>(*node.target).name,
                          std::move(value));
            } else if (node.target->kind == Expr::Kind::attribute) {
                const auto& target = static_cast<const AttributeExpr&>(*node.target);
                Value obj = eval_expr(frame, *target.object);
                attribute_set(frame, obj, target.name, std::move(value));
            } else {
                const auto& target = static_cast<const SubscriptExpr&>(*node.target);
                Value obj = eval_expr(frame, *target.object);
                Value index = eval_expr(frame, *target.index);
                subscript_set(frame, obj, index, std::move(value));
            }
            return Flow::normal;
        }
        case Stmt::Kind::ret: {
            const auto& node = static_cast<const ReturnStmt&>(stmt);
            if (frame.function.empty()) throw RuntimeError("'return' outside a function");
            ret = node.value ? eval_expr(frame, *node.value) : Value();
            return Flow::returned;
        }
        case Stmt::Kind::pass:
            return Flow::normal;
        case Stmt::Kind::import_:
            do_import(frame, static_cast<const ImportStmt&>(stmt).module);
            return Flow::normal;
        case Stmt::Kind::from_import:
            do_from_import(frame, static_cast<const FromImportStmt&>(stmt));
            return Flow::normal;
        case Stmt::Kind::if_: {
            const auto& node = static_cast<const IfStmt&>(stmt);
            if (value_truthy(eval_expr(frame, *node.cond))) {
                return exec_block(frame, node.body, ret);
            }
            return exec_block(frame, node.orelse, ret);
        }
        case Stmt::Kind::while_: {
            const auto& node = static_cast<const WhileStmt&>(stmt);
            while (value_truthy(eval_expr(frame, *node.cond))) {
                if (exec_block(frame, node.body, ret) == Flow::returned) return Flow::returned;
                frame.line = node.line;
            }
            return Flow::normal;
        }
        case Stmt::Kind::for_: {
            const auto& node = static_cast<const ForStmt&>(stmt);
            Value iterable = eval_expr(frame, *node.iterable);
            if (iterable.is_mock()) raise_mock_use(iterable.as_mock());
            if (!iterable.is_list()) {
                throw TypeError(std::string("'") + iterable.type_name() +
                                "' object is not iterable");
            }
            ListRef items = iterable.as_list();
            for (size_t i = 0; i < items->size(); ++i) {
                bind_name(frame, node.var, (*items)[i]);
                if (exec_block(frame, node.body, ret) == Flow::returned) return Flow::returned;
                frame.line = node.line;
            }
            return Flow::normal;
        }
        case Stmt::Kind::func_def: {
            const auto& node = static_cast<const FuncDefStmt&>(stmt);
            bind_name(frame, node.name, Value(make_function(frame, node)));
            return Flow::normal;
        }
        case Stmt::Kind::class_def: {
            const auto& node = static_cast<const ClassDefStmt&>(stmt);
            auto cls = std::make_shared<ClassInfo>();
            cls->name = node.name;
            cls->module_name = frame.globals->name();
            for (const auto& method : node.methods) {
                cls->methods.emplace_back(method->name, make_function(frame, *method));
            }
            bind_name(frame, node.name, Value(ClassRef(std::move(cls))));
            return Flow::normal;
        }
    }
    std::abort();
}

Flow exec_block(Frame& frame, const std::vector<StmtPtr>& stmts, Value& ret) {
    for (const auto& stmt : stmts) {
        if (exec_stmt(frame, *stmt, ret) == Flow::returned) return Flow::returned;
    }
    return Flow::normal;
}

Value call_function(Interpreter& interp, const FunctionRef& fn, std::vector<Value> args) {
    auto globals = fn->globals.lock();
    if (!globals) {
        throw RuntimeError("module environment of '" + fn->module_name + "." + fn->name +
                           "' no longer exists");
    }
    if (args.size() > fn->params.size()) {
        throw TypeError(fn->name + "() takes at most " + std::to_string(fn->params.size()) +
                        " arguments (" + std::to_string(args.size()) + " given)");
    }
    OrderedDict locals;
    for (size_t i = 0; i < fn->params.size(); ++i) {
        if (i < args.size()) {
            locals.set(fn->params[i].name, std::move(args[i]));
        } else if (fn->params[i].default_value) {
            locals.set(fn->params[i].name, *fn->params[i].default_value);
        } else {
            throw TypeError(fn->name + "() missing argument '" + fn->params[i].name + "'");
        }
    }
    Frame frame{interp, globals, fn->ast, &locals, fn->name, fn->def->line};
    Value ret;
    try {
        exec_block(frame, fn->def->body, ret);
    } catch (Error& e) {
        e.push_frame(TraceFrame{fn->module_name, frame.line, fn->name});
        throw;
    }
    return ret;
}

}  // namespace

bool value_truthy(const Value& v) {
    if (v.is_none()) return false;
    if (v.is_bool()) return v.as_bool();
    if (v.is_int()) return v.as_int() != 0;
    if (v.is_float()) return v.as_float() != 0.0;
    if (v.is_str()) return !v.as_str().empty();
    if (v.is_list()) return !v.as_list()->empty();
    if (v.is_dict()) return !v.as_dict()->empty();
    if (v.is_mock()) raise_mock_use(v.as_mock());
    if (v.is_tensor()) throw TypeError("tensor truth value is ambiguous");
    return true;
}

Value attribute_get(Interpreter& interp, const Value& object, const std::string& name) {
    if (object.is_instance()) {
        const InstanceRef& inst = object.as_instance();
        if (const Value* v = inst->attrs.find(name)) return *v;
        if (const auto* method = inst->cls->find_method(name)) {
            FunctionRef fn = *method;
            InstanceRef self = inst;
            auto bound = std::make_shared<NativeFn>();
            bound->name = inst->cls->qualified_name() + "." + name;
            bound->fn = [fn, self](Interpreter& in, std::vector<Value>& args) {
                std::vector<Value> full;
                full.reserve(args.size() + 1);
                full.emplace_back(self);
                for (auto& a : args) full.push_back(std::move(a));
                return call_function(in, fn, std::move(full));
            };
            return Value(NativeRef(std::move(bound)));
        }
        throw AttributeError("'" + inst->cls->qualified_name() + "' object has no attribute '" +
                             name + "'");
    }
    if (object.is_module()) {
        const ModuleRef& env = object.as_module();
        if (auto v = env->get(name)) return *v;
        throw AttributeError("module '" + env->name() + "' has no attribute '" + name + "'");
    }
    if (object.is_class()) {
        const ClassRef& cls = object.as_class();
        if (const auto* method = cls->find_method(name)) return Value(*method);
        throw AttributeError("class '" + cls->qualified_name() + "' has no attribute '" + name +
                             "'");
    }
    if (object.is_mock()) {
        return Value(std::make_shared<const MockInfo>(object.as_mock()->extended(name)));
    }
    throw AttributeError(std::string("'") + object.type_name() + "' object has no attribute '" +
                         name + "'");
}

Value call_callable(Interpreter& interp, const Value& callee, std::vector<Value> args) {
    if (callee.is_function()) return call_function(interp, callee.as_function(), std::move(args));
    if (callee.is_native()) return callee.as_native()->fn(interp, args);
    if (callee.is_class()) return construct_instance(interp, callee.as_class(), std::move(args));
    if (callee.is_instance()) {
        const InstanceRef& inst = callee.as_instance();
        if (const auto* call = inst->cls->find_method("__call__")) {
            std::vector<Value> full;
            full.reserve(args.size() + 1);
            full.emplace_back(inst);
            for (auto& a : args) full.push_back(std::move(a));
            return call_function(interp, *call, std::move(full));
        }
        throw TypeError("'" + inst->cls->qualified_name() + "' object is not callable");
    }
    if (callee.is_mock()) raise_mock_use(callee.as_mock());
    throw TypeError(std::string("'") + callee.type_name() + "' object is not callable");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Embedding API

Interpreter::Interpreter(const NativeModuleProvider& tensor_module)
    : id_(next_interpreter_id.fetch_add(1)) {
    builtins_ = std::make_shared<ModuleEnv>("builtins", ImportFn{});
    detail::install_core_builtins(*this, *builtins_);
    if (tensor_module) {
        auto nt = tensor_module(*this);
        system_registry_["nt"] = nt;
        builtins_->set("nt", Value(nt));
    }
    import_hook_ = [this](const std::string& name) {
        auto env = system_module(name);
        if (!env) throw ImportError("no module named '" + name + "'", name);
        return env;
    };
}

std::shared_ptr<ModuleEnv> Interpreter::exec_module(std::shared_ptr<const ModuleAST> ast,
                                                    ImportFn import_fn) {
    GilGuard gil(*this);
    auto env = std::make_shared<ModuleEnv>(ast->name, std::move(import_fn));
    detail::Frame frame{*this, env, ast, nullptr, "", 0};
    Value ret;
    try {
        detail::exec_block(frame, ast->statements, ret);
    } catch (Error& e) {
        e.push_frame(TraceFrame{ast->name, frame.line, "<module>"});
        throw;
    }
    module_table_[ast->name] = env;
    return env;
}

std::shared_ptr<ModuleEnv> Interpreter::exec_module(std::shared_ptr<const ModuleAST> ast) {
    return exec_module(std::move(ast), import_hook());
}

std::shared_ptr<ModuleEnv> Interpreter::exec_module_private(std::shared_ptr<const ModuleAST> ast,
                                                            ImportFn import_fn) {
    GilGuard gil(*this);
    auto env = std::make_shared<ModuleEnv>(ast->name, std::move(import_fn));
    detail::Frame frame{*this, env, ast, nullptr, "", 0};
    Value ret;
    try {
        detail::exec_block(frame, ast->statements, ret);
    } catch (Error& e) {
        e.push_frame(TraceFrame{ast->name, frame.line, "<module>"});
        throw;
    }
    return env;
}

Value Interpreter::call_value(const Value& callee, std::vector<Value> args) {
    GilGuard gil(*this);
    return detail::call_callable(*this, callee, std::move(args));
}

Value Interpreter::get_global(const std::string& module, const std::string& name) {
    GilGuard gil(*this);
    std::shared_ptr<ModuleEnv> env;
    auto it = module_table_.find(module);
    if (it != module_table_.end()) {
        env = it->second;
    } else {
        if (!import_hook_) throw ImportError("no module named '" + module + "'", module);
        env = import_hook_(module);
        if (!env) throw ImportError("no module named '" + module + "'", module);
        module_table_[module] = env;
    }
    if (auto v = env->get(name)) return *v;
    throw AttributeError("module '" + module + "' has no attribute '" + name + "'");
}

Value Interpreter::get_attr(const Value& object, const std::string& name) {
    GilGuard gil(*this);
    return detail::attribute_get(*this, object, name);
}

void Interpreter::set_import_hook(ImportFn hook) {
    GilGuard gil(*this);
    import_hook_ = std::move(hook);
}

ImportFn Interpreter::import_hook() const {
    return import_hook_;
}

void Interpreter::register_system_module(const std::string& name,
                                         std::shared_ptr<ModuleEnv> env) {
    GilGuard gil(*const_cast<Interpreter*>(this));
    system_registry_[name] = std::move(env);
}

std::shared_ptr<ModuleEnv> Interpreter::system_module(const std::string& name) const {
    auto it = system_registry_.find(name);
    return it == system_registry_.end() ? nullptr : it->second;
}

std::shared_ptr<ModuleEnv> Interpreter::module(const std::string& name) const {
    auto it = module_table_.find(name);
    return it == module_table_.end() ? nullptr : it->second;
}

size_t Interpreter::module_count() const {
    return module_table_.size();
}

std::vector<std::string> Interpreter::module_names() const {
    std::vector<std::string> names;
    names.reserve(module_table_.size());
    for (const auto& [name, env] : module_table_) names.push_back(name);
    return names;
}

}  // namespace mscript
