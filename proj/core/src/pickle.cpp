#include "mscript/pickle.hpp"

#include <cstring>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "mscript/env.hpp"
#include "mscript/errors.hpp"
#include "mscript/interpreter.hpp"

namespace mscript {

std::optional<Value> GlobalResolver::try_resolve(const std::string& module,
                                                 const std::string& name) {
    try {
        return resolve(module, name);
    } catch (const ImportError&) {
        return std::nullopt;
    } catch (const AttributeError&) {
        return std::nullopt;
    }
}

Value InterpreterResolver::resolve(const std::string& module, const std::string& name) {
    return interp_.get_global(module, name);
}

std::string InterpreterResolver::describe() const {
    return "interpreter #" + std::to_string(interp_.id());
}

namespace {

// --- byte helpers -----------------------------------------------------------

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_str(std::vector<uint8_t>& out, const std::string& s) {
    if (s.size() > UINT32_MAX) throw UnpicklableError("string too long to pickle");
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
    std::span<const uint8_t> bytes;
    size_t pos = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError("pickle stream: " + msg + " at offset " + std::to_string(pos));
    }

    bool done() const { return pos >= bytes.size(); }

    uint8_t u8() {
        if (pos + 1 > bytes.size()) fail("truncated");
        return bytes[pos++];
    }

    uint32_t u32() {
        if (pos + 4 > bytes.size()) fail("truncated");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }

    uint64_t u64() {
        if (pos + 8 > bytes.size()) fail("truncated");
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }

    std::string str() {
        uint32_t n = u32();
        if (pos + n > bytes.size()) fail("truncated string");
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

struct TensorHeader {
    size_t key_offset = 0;
    BlobKey key = 0;
    DType dtype = DType::f32;
    std::vector<size_t> shape;
};

// Shared opcode walk used by scan and rewrite. Validates framing, stack
// discipline, and memo indices without constructing values.
struct WalkCallbacks {
    std::function<void(const std::string&, const std::string&)> on_global;
    std::function<void(const TensorHeader&)> on_tensor;
};

void walk_stream(std::span<const uint8_t> bytes, const WalkCallbacks& cb) {
    Reader r{bytes};
    int64_t depth = 0;
    uint32_t memo_count = 0;
    auto need = [&](int64_t n) {
        if (depth < n) r.fail("stack underflow");
    };
    while (true) {
        if (r.done()) r.fail("missing STOP");
        uint8_t op = r.u8();
        switch (op) {
            case OP_NONE:
            case OP_TRUE:
            case OP_FALSE:
                ++depth;
                break;
            case OP_INT:
            case OP_FLOAT:
                r.u64();
                ++depth;
                break;
            case OP_STR:
                r.str();
                ++depth;
                break;
            case OP_LIST: {
                uint32_t n = r.u32();
                need(n);
                depth -= n;
                ++depth;
                break;
            }
            case OP_DICT: {
                uint32_t n = r.u32();
                need(int64_t{2} * n);
                depth -= int64_t{2} * n;
                ++depth;
                break;
            }
            case OP_GLOBAL: {
                std::string module = r.str();
                std::string name = r.str();
                if (cb.on_global) cb.on_global(module, name);
                ++depth;
                break;
            }
            case OP_NEWOBJ:
                need(1);
                break;
            case OP_SETSTATE:
                need(2);
                --depth;
                break;
            case OP_TENSOR: {
                TensorHeader h;
                h.key_offset = r.pos;
                h.key = r.u64();
                uint8_t code = r.u8();
                if (code > 1) r.fail("unknown tensor dtype code " + std::to_string(code));
                h.dtype = static_cast<DType>(code);
                uint8_t ndim = r.u8();
                for (uint8_t i = 0; i < ndim; ++i) h.shape.push_back(r.u64());
                if (cb.on_tensor) cb.on_tensor(h);
                ++depth;
                break;
            }
            case OP_MEMOIZE:
                need(1);
                ++memo_count;
                break;
            case OP_GET: {
                uint32_t index = r.u32();
                if (index >= memo_count) {
                    r.fail("memo index " + std::to_string(index) + " out of range");
                }
                ++depth;
                break;
            }
            case OP_STOP:
                if (depth != 1) r.fail("stack depth " + std::to_string(depth) + " at STOP");
                if (!r.done()) r.fail("trailing bytes after STOP");
                return;
            default:
                r.fail("unknown opcode " + std::to_string(op));
        }
    }
}

// --- pickler ----------------------------------------------------------------

struct Pickler {
    std::span<GlobalResolver* const> locators;
    PickleStream out;
    std::unordered_map<const void*, uint32_t> memo;
    std::unordered_set<const void*> in_progress;
    std::map<const ClassInfo*, GlobalRef> located;
    uint32_t next_memo = 0;

    bool emit_memo_hit(const void* id) {
        auto it = memo.find(id);
        if (it == memo.end()) return false;
        out.bytes.push_back(OP_GET);
        put_u32(out.bytes, it->second);
        return true;
    }

    void memoize(const void* id) {
        out.bytes.push_back(OP_MEMOIZE);
        memo[id] = next_memo++;
    }

    struct CycleGuard {
        Pickler& pickler;
        const void* id;
        CycleGuard(Pickler& p, const void* i) : pickler(p), id(i) {
            if (!pickler.in_progress.insert(id).second) {
                throw UnpicklableError("cannot pickle a cyclic object graph");
            }
        }
        ~CycleGuard() { pickler.in_progress.erase(id); }
    };

    const GlobalRef& locate_class(const ClassRef& cls) {
        auto it = located.find(cls.get());
        if (it != located.end()) return it->second;
        for (GlobalResolver* locator : locators) {
            auto v = locator->try_resolve(cls->module_name, cls->name);
            if (v && v->is_class() && v->as_class().get() == cls.get()) {
                return located.emplace(cls.get(), GlobalRef{cls->module_name, cls->name})
                    .first->second;
            }
        }
        std::string searched;
        for (GlobalResolver* locator : locators) {
            if (!searched.empty()) searched += ", ";
            searched += locator->describe();
        }
        if (searched.empty()) searched = "none";
        throw ClassNotFoundError("class " + cls->qualified_name() +
                                 " not found by any importer (searched: " + searched + ")");
    }

    void emit_global(const GlobalRef& ref) {
        out.bytes.push_back(OP_GLOBAL);
        put_str(out.bytes, ref.module);
        put_str(out.bytes, ref.name);
        out.global_refs.insert(ref);
    }

    void emit(const Value& v) {
        if (v.is_none()) {
            out.bytes.push_back(OP_NONE);
        } else if (v.is_bool()) {
            out.bytes.push_back(v.as_bool() ? OP_TRUE : OP_FALSE);
        } else if (v.is_int()) {
            out.bytes.push_back(OP_INT);
            put_u64(out.bytes, static_cast<uint64_t>(v.as_int()));
        } else if (v.is_float()) {
            out.bytes.push_back(OP_FLOAT);
            uint64_t bits;
            double d = v.as_float();
            std::memcpy(&bits, &d, 8);
            put_u64(out.bytes, bits);
        } else if (v.is_str()) {
            out.bytes.push_back(OP_STR);
            put_str(out.bytes, v.as_str());
        } else if (v.is_list()) {
            const void* id = v.as_list().get();
            if (emit_memo_hit(id)) return;
            CycleGuard guard(*this, id);
            const auto& items = *v.as_list();
            for (const Value& item : items) emit(item);
            out.bytes.push_back(OP_LIST);
            put_u32(out.bytes, static_cast<uint32_t>(items.size()));
            memoize(id);
        } else if (v.is_dict()) {
            const void* id = v.as_dict().get();
            if (emit_memo_hit(id)) return;
            CycleGuard guard(*this, id);
            const auto& items = *v.as_dict();
            for (const auto& [key, value] : items) {
                out.bytes.push_back(OP_STR);
                put_str(out.bytes, key);
                emit(value);
            }
            out.bytes.push_back(OP_DICT);
            put_u32(out.bytes, static_cast<uint32_t>(items.size()));
            memoize(id);
        } else if (v.is_tensor()) {
            const TensorHandle& t = v.as_tensor();
            if (!t.valid()) throw UnpicklableError("cannot pickle an empty tensor handle");
            out.bytes.push_back(OP_TENSOR);
            put_u64(out.bytes, t.key());
            out.bytes.push_back(static_cast<uint8_t>(t.dtype()));
            out.bytes.push_back(static_cast<uint8_t>(t.shape().size()));
            for (size_t d : t.shape()) put_u64(out.bytes, d);
            out.blob_refs.insert(t.key());
        } else if (v.is_instance()) {
            const void* id = v.as_instance().get();
            if (emit_memo_hit(id)) return;
            CycleGuard guard(*this, id);
            const InstanceRef& inst = v.as_instance();
            emit_global(locate_class(inst->cls));
            out.bytes.push_back(OP_NEWOBJ);
            for (const auto& [key, value] : inst->attrs) {
                out.bytes.push_back(OP_STR);
                put_str(out.bytes, key);
                emit(value);
            }
            out.bytes.push_back(OP_DICT);
            put_u32(out.bytes, static_cast<uint32_t>(inst->attrs.size()));
            out.bytes.push_back(OP_SETSTATE);
            memoize(id);
        } else if (v.is_class()) {
            emit_global(locate_class(v.as_class()));
        } else if (v.is_mock()) {
            throw UnpicklableError("cannot pickle mock " + v.as_mock()->full_path());
        } else {
            throw UnpicklableError(std::string("cannot pickle a '") + v.type_name() + "' value");
        }
    }
};

}  // namespace

PickleStream pickle(const Value& value, std::span<GlobalResolver* const> class_locators) {
    Pickler pickler{class_locators};
    pickler.emit(value);
    pickler.out.bytes.push_back(OP_STOP);
    return std::move(pickler.out);
}

Value unpickle(std::span<const uint8_t> bytes, GlobalResolver& resolver) {
    Reader r{bytes};
    std::vector<Value> stack;
    std::vector<Value> memo;
    auto pop = [&]() {
        if (stack.empty()) r.fail("stack underflow");
        Value v = std::move(stack.back());
        stack.pop_back();
        return v;
    };
    while (true) {
        if (r.done()) r.fail("missing STOP");
        uint8_t op = r.u8();
        switch (op) {
            case OP_NONE:
                stack.emplace_back();
                break;
            case OP_TRUE:
                stack.emplace_back(true);
                break;
            case OP_FALSE:
                stack.emplace_back(false);
                break;
            case OP_INT:
                stack.emplace_back(static_cast<int64_t>(r.u64()));
                break;
            case OP_FLOAT: {
                uint64_t bits = r.u64();
                double d;
                std::memcpy(&d, &bits, 8);
                stack.emplace_back(d);
                break;
            }
            case OP_STR:
                stack.emplace_back(r.str());
                break;
            case OP_LIST: {
                uint32_t n = r.u32();
                if (stack.size() < n) r.fail("stack underflow");
                std::vector<Value> items(std::make_move_iterator(stack.end() - n),
                                         std::make_move_iterator(stack.end()));
                stack.resize(stack.size() - n);
                stack.push_back(Value::list(std::move(items)));
                break;
            }
            case OP_DICT: {
                uint32_t n = r.u32();
                if (stack.size() < size_t{2} * n) r.fail("stack underflow");
                auto dict = std::make_shared<OrderedDict>();
                size_t base = stack.size() - size_t{2} * n;
                for (uint32_t i = 0; i < n; ++i) {
                    Value& key = stack[base + 2 * i];
                    if (!key.is_str()) r.fail("dict key is not a string");
                    dict->set(key.as_str(), std::move(stack[base + 2 * i + 1]));
                }
                stack.resize(base);
                stack.emplace_back(std::move(dict));
                break;
            }
            case OP_GLOBAL: {
                std::string module = r.str();
                std::string name = r.str();
                stack.push_back(resolver.resolve(module, name));
                break;
            }
            case OP_NEWOBJ: {
                Value cls = pop();
                if (cls.is_mock()) throw MockUsedError(cls.as_mock()->full_path());
                if (!cls.is_class()) r.fail("NEWOBJ on a non-class value");
                auto inst = std::make_shared<InstanceData>();
                inst->cls = cls.as_class();
                stack.emplace_back(std::move(inst));
                break;
            }
            case OP_SETSTATE: {
                Value state = pop();
                Value target = pop();
                if (!state.is_dict()) r.fail("SETSTATE with a non-dict state");
                if (!target.is_instance()) r.fail("SETSTATE on a non-instance");
                for (const auto& [key, value] : *state.as_dict()) {
                    target.as_instance()->attrs.set(key, value);
                }
                stack.push_back(std::move(target));
                break;
            }
            case OP_TENSOR: {
                BlobKey key = r.u64();
                uint8_t code = r.u8();
                if (code > 1) r.fail("unknown tensor dtype code");
                DType dtype = static_cast<DType>(code);
                uint8_t ndim = r.u8();
                std::vector<size_t> shape;
                for (uint8_t i = 0; i < ndim; ++i) shape.push_back(r.u64());
                TensorHandle handle = TensorHandle::share(key);
                if (handle.dtype() != dtype || handle.shape() != shape) {
                    r.fail("tensor header does not match blob " + std::to_string(key));
                }
                stack.emplace_back(std::move(handle));
                break;
            }
            case OP_MEMOIZE:
                if (stack.empty()) r.fail("MEMOIZE on empty stack");
                memo.push_back(stack.back());
                break;
            case OP_GET: {
                uint32_t index = r.u32();
                if (index >= memo.size()) r.fail("memo index out of range");
                stack.push_back(memo[index]);
                break;
            }
            case OP_STOP:
                if (stack.size() != 1) r.fail("stack depth is not 1 at STOP");
                if (!r.done()) r.fail("trailing bytes after STOP");
                return std::move(stack.back());
            default:
                r.fail("unknown opcode " + std::to_string(op));
        }
    }
}

ScanResult scan(std::span<const uint8_t> bytes) {
    ScanResult result;
    WalkCallbacks cb;
    cb.on_global = [&](const std::string& module, const std::string& name) {
        result.global_refs.insert(GlobalRef{module, name});
    };
    cb.on_tensor = [&](const TensorHeader& h) { result.blob_refs.insert(h.key); };
    walk_stream(bytes, cb);
    return result;
}

std::vector<uint8_t> rewrite_blob_keys(std::span<const uint8_t> bytes,
                                       const std::function<BlobKey(BlobKey)>& map) {
    std::vector<uint8_t> out(bytes.begin(), bytes.end());
    WalkCallbacks cb;
    cb.on_tensor = [&](const TensorHeader& h) {
        uint64_t mapped = map(h.key);
        for (int i = 0; i < 8; ++i) {
            out[h.key_offset + i] = static_cast<uint8_t>(mapped >> (8 * i));
        }
    };
    walk_stream(bytes, cb);
    return out;
}

}  // namespace mscript
