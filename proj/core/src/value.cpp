#include "mscript/value.hpp"

#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include "mscript/env.hpp"

namespace mscript {

Value Value::dict() {
    return Value(std::make_shared<OrderedDict>());
}

Value* OrderedDict::find(const std::string& key) {
    for (auto& [k, v] : items_) {
        if (k == key) return &v;
    }
    return nullptr;
}

const Value* OrderedDict::find(const std::string& key) const {
    return const_cast<OrderedDict*>(this)->find(key);
}

void OrderedDict::set(const std::string& key, Value value) {
    if (Value* slot = find(key)) {
        *slot = std::move(value);
        return;
    }
    items_.emplace_back(key, std::move(value));
}

const FunctionRef* ClassInfo::find_method(const std::string& method_name) const {
    for (const auto& [n, fn] : methods) {
        if (n == method_name) return &fn;
    }
    return nullptr;
}

std::string MockInfo::full_path() const {
    std::string out = module_name;
    for (const auto& p : path) {
        out += ".";
        out += p;
    }
    return out;
}

MockInfo MockInfo::extended(const std::string& attr) const {
    MockInfo m = *this;
    m.path.push_back(attr);
    return m;
}

std::shared_ptr<ModuleEnv> ModuleEnv::make_mock_stub(const std::string& module_name) {
    auto env = std::make_shared<ModuleEnv>(module_name, ImportFn{});
    env->mock_stub_ = true;
    return env;
}

std::optional<Value> ModuleEnv::get(const std::string& name) const {
    if (const Value* v = bindings_.find(name)) return *v;
    if (mock_stub_) {
        return Value(std::make_shared<const MockInfo>(MockInfo{name_, {name}}));
    }
    return std::nullopt;
}

const char* Value::type_name() const {
    if (is_none()) return "None";
    if (is_bool()) return "bool";
    if (is_int()) return "int";
    if (is_float()) return "float";
    if (is_str()) return "str";
    if (is_list()) return "list";
    if (is_dict()) return "dict";
    if (is_tensor()) return "tensor";
    if (is_function()) return "function";
    if (is_class()) return "class";
    if (is_instance()) return "instance";
    if (is_module()) return "module";
    if (is_mock()) return "mock";
    return "native";
}

bool structural_equal(const Value& a, const Value& b) {
    if (a.is_none()) return b.is_none();
    if (a.is_bool()) return b.is_bool() && a.as_bool() == b.as_bool();
    if (a.is_int()) return b.is_int() && a.as_int() == b.as_int();
    if (a.is_float()) {
        if (!b.is_float()) return false;
        double x = a.as_float(), y = b.as_float();
        if (std::isnan(x) && std::isnan(y)) return true;
        return x == y;
    }
    if (a.is_str()) return b.is_str() && a.as_str() == b.as_str();
    if (a.is_list()) {
        if (!b.is_list()) return false;
        const auto& la = *a.as_list();
        const auto& lb = *b.as_list();
        if (la.size() != lb.size()) return false;
        for (size_t i = 0; i < la.size(); ++i) {
            if (!structural_equal(la[i], lb[i])) return false;
        }
        return true;
    }
    if (a.is_dict()) {
        if (!b.is_dict()) return false;
        const auto& da = *a.as_dict();
        const auto& db = *b.as_dict();
        if (da.size() != db.size()) return false;
        auto ita = da.begin();
        auto itb = db.begin();
        for (; ita != da.end(); ++ita, ++itb) {
            if (ita->first != itb->first) return false;
            if (!structural_equal(ita->second, itb->second)) return false;
        }
        return true;
    }
    if (a.is_tensor()) {
        if (!b.is_tensor()) return false;
        const auto& ta = a.as_tensor();
        const auto& tb = b.as_tensor();
        if (ta.dtype() != tb.dtype() || ta.shape() != tb.shape()) return false;
        auto ba = ta.bytes();
        auto bb = tb.bytes();
        return ba.size() == bb.size() && std::memcmp(ba.data(), bb.data(), ba.size()) == 0;
    }
    if (a.is_instance()) {
        if (!b.is_instance()) return false;
        const auto& ia = *a.as_instance();
        const auto& ib = *b.as_instance();
        if (ia.cls->qualified_name() != ib.cls->qualified_name()) return false;
        if (ia.attrs.size() != ib.attrs.size()) return false;
        auto ita = ia.attrs.begin();
        auto itb = ib.attrs.begin();
        for (; ita != ia.attrs.end(); ++ita, ++itb) {
            if (ita->first != itb->first) return false;
            if (!structural_equal(ita->second, itb->second)) return false;
        }
        return true;
    }
    if (a.is_function()) return b.is_function() && a.as_function() == b.as_function();
    if (a.is_class()) {
        return b.is_class() &&
               a.as_class()->qualified_name() == b.as_class()->qualified_name();
    }
    if (a.is_module()) return b.is_module() && a.as_module() == b.as_module();
    if (a.is_native()) return b.is_native() && a.as_native() == b.as_native();
    if (a.is_mock()) {
        return b.is_mock() && a.as_mock()->module_name == b.as_mock()->module_name &&
               a.as_mock()->path == b.as_mock()->path;
    }
    return false;
}

namespace {

void repr_into(const Value& v, std::ostringstream& out, std::set<const void*>& seen);

void repr_str(const std::string& s, std::ostringstream& out) {
    out << '"';
    for (char c : s) {
        switch (c) {
            case '"': out << "\\\""; break;
            case '\\': out << "\\\\"; break;
            case '\n': out << "\\n"; break;
            case '\t': out << "\\t"; break;
            default: out << c;
        }
    }
    out << '"';
}

void repr_into(const Value& v, std::ostringstream& out, std::set<const void*>& seen) {
    if (v.is_none()) {
        out << "None";
    } else if (v.is_bool()) {
        out << (v.as_bool() ? "True" : "False");
    } else if (v.is_int()) {
        out << v.as_int();
    } else if (v.is_float()) {
        out << v.as_float();
    } else if (v.is_str()) {
        repr_str(v.as_str(), out);
    } else if (v.is_list()) {
        const void* id = v.as_list().get();
        if (!seen.insert(id).second) {
            out << "[...]";
            return;
        }
        out << "[";
        const auto& items = *v.as_list();
        for (size_t i = 0; i < items.size(); ++i) {
            if (i) out << ", ";
            repr_into(items[i], out, seen);
        }
        out << "]";
        seen.erase(id);
    } else if (v.is_dict()) {
        const void* id = v.as_dict().get();
        if (!seen.insert(id).second) {
            out << "{...}";
            return;
        }
        out << "{";
        bool first = true;
        for (const auto& [k, val] : *v.as_dict()) {
            if (!first) out << ", ";
            first = false;
            repr_str(k, out);
            out << ": ";
            repr_into(val, out, seen);
        }
        out << "}";
        seen.erase(id);
    } else if (v.is_tensor()) {
        const auto& t = v.as_tensor();
        out << "tensor(" << dtype_name(t.dtype()) << ", " << shape_to_string(t.shape()) << ")";
    } else if (v.is_function()) {
        out << "<function " << v.as_function()->module_name << "." << v.as_function()->name << ">";
    } else if (v.is_class()) {
        out << "<class " << v.as_class()->qualified_name() << ">";
    } else if (v.is_instance()) {
        const void* id = v.as_instance().get();
        if (!seen.insert(id).second) {
            out << "<...>";
            return;
        }
        out << "<" << v.as_instance()->cls->qualified_name() << " ";
        bool first = true;
        for (const auto& [k, val] : v.as_instance()->attrs) {
            if (!first) out << ", ";
            first = false;
            out << k << "=";
            repr_into(val, out, seen);
        }
        out << ">";
        seen.erase(id);
    } else if (v.is_module()) {
        out << "<module " << v.as_module()->name() << ">";
    } else if (v.is_mock()) {
        out << "<mock " << v.as_mock()->full_path() << ">";
    } else {
        out << "<native " << v.as_native()->name << ">";
    }
}

}  // namespace

std::string repr(const Value& v) {
    std::ostringstream out;
    std::set<const void*> seen;
    repr_into(v, out, seen);
    return out.str();
}

}  // namespace mscript
