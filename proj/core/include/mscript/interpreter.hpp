#pragma once

#include <atomic>
#include <cassert>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mscript/ast.hpp"
#include "mscript/env.hpp"
#include "mscript/value.hpp"

namespace mscript {

class Interpreter;

using NativeModuleProvider = std::function<std::shared_ptr<ModuleEnv>(Interpreter&)>;

// The stock native tensor module ("nt"): zeros, rand, from_list, add, mul,
// matmul, relu, sum. Kernels run with the interpreter lock released.
NativeModuleProvider default_tensor_module();

// One embedded script VM. Each instance owns a global lock serializing all
// access to its module table, environments, and instance state; the lock is
// dropped for the duration of native tensor kernels. Two instances share no
// mutable state apart from the process-wide blob store.
class Interpreter {
public:
    explicit Interpreter(const NativeModuleProvider& tensor_module = default_tensor_module());
    Interpreter(const Interpreter&) = delete;
    Interpreter& operator=(const Interpreter&) = delete;

    int id() const { return id_; }

    // Runs the module top to bottom in a fresh environment wired to
    // import_fn, then registers it in this interpreter's module table.
    std::shared_ptr<ModuleEnv> exec_module(std::shared_ptr<const ModuleAST> ast,
                                           ImportFn import_fn);
    // Same, with the interpreter's default import hook.
    std::shared_ptr<ModuleEnv> exec_module(std::shared_ptr<const ModuleAST> ast);
    // Variant for hermetic loaders: the environment is returned but never
    // enters the interpreter's module table.
    std::shared_ptr<ModuleEnv> exec_module_private(std::shared_ptr<const ModuleAST> ast,
                                                   ImportFn import_fn);

    Value call_value(const Value& callee, std::vector<Value> args);
    Value get_global(const std::string& module, const std::string& name);
    Value get_attr(const Value& object, const std::string& name);

    // Import hook used by get_global and by modules executed without an
    // explicit import function. The default resolves system modules only.
    void set_import_hook(ImportFn hook);
    ImportFn import_hook() const;

    void register_system_module(const std::string& name, std::shared_ptr<ModuleEnv> env);
    std::shared_ptr<ModuleEnv> system_module(const std::string& name) const;

    std::shared_ptr<ModuleEnv> module(const std::string& name) const;
    size_t module_count() const;
    std::vector<std::string> module_names() const;
    std::shared_ptr<ModuleEnv> builtins() const { return builtins_; }

    bool lock_held_by_this_thread() const {
        return gil_owner_.load(std::memory_order_relaxed) == std::this_thread::get_id();
    }
    // Cumulative wall time this interpreter's lock has been held.
    uint64_t lock_held_nanos() const { return held_ns_.load(std::memory_order_relaxed); }

    // Test hook: runs inside every run_unlocked window, after the lock drops.
    void set_native_probe(std::function<void()> probe) { native_probe_ = std::move(probe); }

    // Releases the lock around f (a native kernel), re-acquiring before
    // returning or propagating. Caller must hold the lock.
    template <typename F>
    auto run_unlocked(F&& f) {
        assert(lock_held_by_this_thread());
        Unlocked window(*this);
        if (native_probe_) native_probe_();
        return f();
    }

private:
    friend class GilGuard;

    struct Unlocked {
        explicit Unlocked(Interpreter& interp);
        ~Unlocked();
        Interpreter& interp;
        int saved_depth;
    };

    void account_hold_end();
    // Brief adaptive spin before parking, so the frequent unlock/relock
    // around short kernels does not degenerate into futex ping-pong.
    void lock_gil();

    int id_;
    std::mutex gil_mu_;
    std::atomic<std::thread::id> gil_owner_{};
    int gil_depth_ = 0;
    std::chrono::steady_clock::time_point gil_acquired_at_{};
    std::atomic<uint64_t> held_ns_{0};
    std::function<void()> native_probe_;

    std::map<std::string, std::shared_ptr<ModuleEnv>> module_table_;
    std::map<std::string, std::shared_ptr<ModuleEnv>> system_registry_;
    std::shared_ptr<ModuleEnv> builtins_;
    ImportFn import_hook_;
};

// Scoped acquisition of an interpreter's global lock. Re-entrant from the
// owning thread; transferable between host threads when not held.
class GilGuard {
public:
    explicit GilGuard(Interpreter& interp);
    ~GilGuard();
    GilGuard(const GilGuard&) = delete;
    GilGuard& operator=(const GilGuard&) = delete;

private:
    Interpreter& interp_;
    bool nested_;
};

}  // namespace mscript
