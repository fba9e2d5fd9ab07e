#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "mscript/interpreter.hpp"
#include "mscript/packaging.hpp"

namespace mscript {

class PackageHandle;
class MovableObject;
class InterpreterSession;

// Values crossing the host/interpreter boundary. Lists and dicts are deep
// copies; tensors cross by blob key (zero copy).
class HostValue {
public:
    using List = std::vector<HostValue>;
    using Dict = std::vector<std::pair<std::string, HostValue>>;

    HostValue() : v_(std::monostate{}) {}
    HostValue(bool b) : v_(b) {}
    HostValue(int64_t i) : v_(i) {}
    HostValue(int i) : v_(static_cast<int64_t>(i)) {}
    HostValue(double f) : v_(f) {}
    HostValue(std::string s) : v_(std::move(s)) {}
    HostValue(const char* s) : v_(std::string(s)) {}
    HostValue(TensorHandle t) : v_(std::move(t)) {}
    HostValue(List l) : v_(std::move(l)) {}
    HostValue(Dict d) : v_(std::move(d)) {}

    bool is_none() const { return std::holds_alternative<std::monostate>(v_); }
    bool is_bool() const { return std::holds_alternative<bool>(v_); }
    bool is_int() const { return std::holds_alternative<int64_t>(v_); }
    bool is_float() const { return std::holds_alternative<double>(v_); }
    bool is_str() const { return std::holds_alternative<std::string>(v_); }
    bool is_list() const { return std::holds_alternative<List>(v_); }
    bool is_dict() const { return std::holds_alternative<Dict>(v_); }
    bool is_tensor() const { return std::holds_alternative<TensorHandle>(v_); }

    bool as_bool() const { return std::get<bool>(v_); }
    int64_t as_int() const { return std::get<int64_t>(v_); }
    double as_float() const { return std::get<double>(v_); }
    const std::string& as_str() const { return std::get<std::string>(v_); }
    const List& as_list() const { return std::get<List>(v_); }
    const Dict& as_dict() const { return std::get<Dict>(v_); }
    const TensorHandle& as_tensor() const { return std::get<TensorHandle>(v_); }

private:
    std::variant<std::monostate, bool, int64_t, double, std::string, List, Dict, TensorHandle> v_;
};

// Fixed pool of interpreters handed out to caller threads in FIFO order. The
// library spawns no threads of its own; all parallelism belongs to callers.
// Recommended size: one interpreter per hardware thread.
class InterpreterManager {
public:
    explicit InterpreterManager(size_t n_interpreters,
                                const NativeModuleProvider& tensor_module = default_tensor_module());
    ~InterpreterManager();
    InterpreterManager(const InterpreterManager&) = delete;
    InterpreterManager& operator=(const InterpreterManager&) = delete;

    size_t size() const { return pool_.size(); }
    Interpreter& interpreter(size_t index) { return *pool_[index]; }
    uint64_t total_lock_held_nanos() const;

    PackageHandle load_package(const std::filesystem::path& path);

    // Wakes all waiters with ShutdownError and rejects future acquisitions.
    void shutdown();

    // Blocking FIFO checkout; a released interpreter goes to the oldest
    // waiter first.
    Interpreter& acquire();
    void release(Interpreter& interp);

private:
    struct Waiter {
        std::condition_variable cv;
        Interpreter* assigned = nullptr;
        bool aborted = false;
    };

    std::vector<std::unique_ptr<Interpreter>> pool_;
    mutable std::mutex mu_;
    std::condition_variable all_returned_;
    std::deque<Interpreter*> free_;
    std::deque<Waiter*> waiters_;
    bool shutdown_ = false;
};

namespace detail_deploy {

struct PackageState {
    InterpreterManager* manager;
    std::shared_ptr<const ArchiveData> archive;
    std::mutex mu;
    std::map<int, std::unique_ptr<HermeticImporter>> importers;

    HermeticImporter& importer_for(Interpreter& interp);
};

struct MovableState {
    std::shared_ptr<PackageState> package;
    std::vector<uint8_t> stream_bytes;
    std::vector<TensorHandle> retained_blobs;
    std::mutex mu;
    std::map<int, Value> cache;  // interpreter id -> materialized value
};

struct SessionState {
    std::shared_ptr<PackageState> package;
    Interpreter* interp = nullptr;
    Value self;
    bool open = false;

    ~SessionState();
};

}  // namespace detail_deploy

// A pickled object plus its per-interpreter materializations. Copies share
// state; the pickle stream (and its blobs) live as long as any copy does.
class MovableObject {
public:
    MovableObject() = default;

    bool valid() const { return state_ != nullptr; }

    // Load-balanced call: checks an interpreter out of the pool,
    // materializes the object there on first use, runs it, and converts the
    // result back.
    HostValue call(std::vector<HostValue> args);

    InterpreterSession acquire_session();

    // Materializes (at most once) on the given interpreter, which the caller
    // must currently own; returns the cached value on repeat calls.
    Value materialize_on(Interpreter& interp);

    size_t materialization_count() const;
    std::vector<int> materialized_interpreter_ids() const;
    const std::vector<uint8_t>& stream_bytes() const { return state_->stream_bytes; }

private:
    friend class PackageHandle;
    friend class InterpreterSession;

    std::shared_ptr<detail_deploy::MovableState> state_;
};

// Handle to a value owned by a session's interpreter. Valid only while the
// session is open; any use afterwards raises StaleHandleError.
class ObjHandle {
public:
    ObjHandle() = default;

    ObjHandle attr(const std::string& name) const;
    ObjHandle call(const std::vector<ObjHandle>& args) const;

private:
    friend class InterpreterSession;
    ObjHandle(std::shared_ptr<detail_deploy::SessionState> session, Value value)
        : session_(std::move(session)), value_(std::move(value)) {}

    const Value& checked() const;

    std::shared_ptr<detail_deploy::SessionState> session_;
    Value value_;
};

// Scoped direct interaction with one pooled interpreter. The interpreter
// lock is held for the duration of each API call and released in between.
// Confined to the creating thread.
class InterpreterSession {
public:
    ~InterpreterSession() { close(); }
    InterpreterSession(InterpreterSession&&) = default;
    InterpreterSession& operator=(InterpreterSession&&) = default;
    InterpreterSession(const InterpreterSession&) = delete;
    InterpreterSession& operator=(const InterpreterSession&) = delete;

    // Root object: the package importer for package sessions, the
    // materialized object for movable sessions.
    ObjHandle self() const;
    ObjHandle global(const std::string& module, const std::string& name);
    ObjHandle from_host(const HostValue& value);
    HostValue to_host(const ObjHandle& handle);
    MovableObject create_movable(const ObjHandle& handle);

    Interpreter& interpreter() { return *state_->interp; }

    // Returns the interpreter to the pool; all handles become stale.
    void close();

private:
    friend class PackageHandle;
    friend class MovableObject;
    explicit InterpreterSession(std::shared_ptr<detail_deploy::SessionState> state)
        : state_(std::move(state)) {}

    std::shared_ptr<detail_deploy::SessionState> state_;
};

// Opened archive bound to a manager. Importers are created lazily, one per
// interpreter on first use.
class PackageHandle {
public:
    PackageHandle(InterpreterManager& manager, const std::filesystem::path& path);

    // Loads the resource on some pooled interpreter and immediately re-pickles
    // it into a MovableObject; weight blobs are retained once by the stream.
    MovableObject load_pickle(const std::string& package, const std::string& resource);

    InterpreterSession acquire_session();

    size_t importer_count() const;
    InterpreterManager& manager() { return *state_->manager; }

private:
    friend class MovableObject;
    std::shared_ptr<detail_deploy::PackageState> state_;
};

}  // namespace mscript
