#include "mscript/deploy.hpp"

#include "mscript/env.hpp"
#include "mscript/errors.hpp"
#include "mscript/pickle.hpp"

namespace mscript {

namespace {

Value host_to_value(const HostValue& host) {
    if (host.is_none()) return Value();
    if (host.is_bool()) return Value(host.as_bool());
    if (host.is_int()) return Value(host.as_int());
    if (host.is_float()) return Value(host.as_float());
    if (host.is_str()) return Value(host.as_str());
    if (host.is_tensor()) return Value(host.as_tensor());
    if (host.is_list()) {
        std::vector<Value> items;
        items.reserve(host.as_list().size());
        for (const HostValue& item : host.as_list()) items.push_back(host_to_value(item));
        return Value::list(std::move(items));
    }
    auto dict = std::make_shared<OrderedDict>();
    for (const auto& [key, value] : host.as_dict()) dict->set(key, host_to_value(value));
    return Value(std::move(dict));
}

HostValue value_to_host(const Value& value) {
    if (value.is_none()) return HostValue();
    if (value.is_bool()) return HostValue(value.as_bool());
    if (value.is_int()) return HostValue(value.as_int());
    if (value.is_float()) return HostValue(value.as_float());
    if (value.is_str()) return HostValue(value.as_str());
    if (value.is_tensor()) return HostValue(value.as_tensor());
    if (value.is_list()) {
        HostValue::List items;
        items.reserve(value.as_list()->size());
        for (const Value& item : *value.as_list()) items.push_back(value_to_host(item));
        return HostValue(std::move(items));
    }
    if (value.is_dict()) {
        HostValue::Dict items;
        for (const auto& [key, v] : *value.as_dict()) items.emplace_back(key, value_to_host(v));
        return HostValue(std::move(items));
    }
    throw TypeError(std::string("cannot convert a '") + value.type_name() +
                    "' value across the host boundary");
}

// Returns the interpreter to the pool even when the call throws.
struct PoolCheckout {
    InterpreterManager& manager;
    Interpreter& interp;
    PoolCheckout(InterpreterManager& m) : manager(m), interp(m.acquire()) {}
    ~PoolCheckout() { manager.release(interp); }
};

}  // namespace

// ---------------------------------------------------------------------------
// InterpreterManager

InterpreterManager::InterpreterManager(size_t n_interpreters,
                                       const NativeModuleProvider& tensor_module) {
    if (n_interpreters == 0) {
        throw ConfigError("an interpreter pool needs at least one interpreter");
    }
    pool_.reserve(n_interpreters);
    for (size_t i = 0; i < n_interpreters; ++i) {
        pool_.push_back(std::make_unique<Interpreter>(tensor_module));
        free_.push_back(pool_.back().get());
    }
}

InterpreterManager::~InterpreterManager() {
    shutdown();
    std::unique_lock<std::mutex> lock(mu_);
    all_returned_.wait(lock, [&] { return free_.size() == pool_.size(); });
}

uint64_t InterpreterManager::total_lock_held_nanos() const {
    uint64_t total = 0;
    for (const auto& interp : pool_) total += interp->lock_held_nanos();
    return total;
}

PackageHandle InterpreterManager::load_package(const std::filesystem::path& path) {
    return PackageHandle(*this, path);
}

void InterpreterManager::shutdown() {
    std::lock_guard<std::mutex> lock(mu_);
    shutdown_ = true;
    for (Waiter* waiter : waiters_) {
        waiter->aborted = true;
        waiter->cv.notify_one();
    }
    waiters_.clear();
}

Interpreter& InterpreterManager::acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    if (shutdown_) throw ShutdownError("interpreter manager is shut down");
    if (!free_.empty()) {
        Interpreter* interp = free_.front();
        free_.pop_front();
        return *interp;
    }
    Waiter waiter;
    waiters_.push_back(&waiter);
    waiter.cv.wait(lock, [&] { return waiter.assigned != nullptr || waiter.aborted; });
    if (waiter.aborted) throw ShutdownError("interpreter manager is shut down");
    return *waiter.assigned;
}

void InterpreterManager::release(Interpreter& interp) {
    std::lock_guard<std::mutex> lock(mu_);
    if (!waiters_.empty()) {
        Waiter* waiter = waiters_.front();
        waiters_.pop_front();
        waiter->assigned = &interp;
        waiter->cv.notify_one();
        return;
    }
    free_.push_back(&interp);
    all_returned_.notify_all();
}

// ---------------------------------------------------------------------------
// PackageState / PackageHandle

namespace detail_deploy {

HermeticImporter& PackageState::importer_for(Interpreter& interp) {
    std::lock_guard<std::mutex> lock(mu);
    auto it = importers.find(interp.id());
    if (it == importers.end()) {
        it = importers.emplace(interp.id(), std::make_unique<HermeticImporter>(interp, archive))
                 .first;
    }
    return *it->second;
}

SessionState::~SessionState() {
    if (open) {
        open = false;
        package->manager->release(*interp);
    }
}

}  // namespace detail_deploy

PackageHandle::PackageHandle(InterpreterManager& manager, const std::filesystem::path& path) {
    state_ = std::make_shared<detail_deploy::PackageState>();
    state_->manager = &manager;
    state_->archive = ArchiveData::open(path);  // validates; no interpreter work
}

size_t PackageHandle::importer_count() const {
    std::lock_guard<std::mutex> lock(state_->mu);
    return state_->importers.size();
}

MovableObject PackageHandle::load_pickle(const std::string& package,
                                         const std::string& resource) {
    PoolCheckout checkout(*state_->manager);
    HermeticImporter& importer = state_->importer_for(checkout.interp);
    Value loaded = importer.load_pickle(package, resource);

    GilGuard gil(checkout.interp);
    GlobalResolver* locator = &importer;
    PickleStream stream = pickle(loaded, std::span<GlobalResolver* const>(&locator, 1));

    auto movable_state = std::make_shared<detail_deploy::MovableState>();
    movable_state->package = state_;
    movable_state->stream_bytes = std::move(stream.bytes);
    for (BlobKey key : stream.blob_refs) {
        movable_state->retained_blobs.push_back(TensorHandle::share(key));
    }
    // The loaded value is dropped here rather than cached, so weight blob
    // refcounts stay exactly stream + materializations.
    MovableObject movable;
    movable.state_ = std::move(movable_state);
    return movable;
}

InterpreterSession PackageHandle::acquire_session() {
    Interpreter& interp = state_->manager->acquire();
    auto session = std::make_shared<detail_deploy::SessionState>();
    session->package = state_;
    session->interp = &interp;
    session->open = true;

    HermeticImporter* importer = &state_->importer_for(interp);
    auto api = std::make_shared<ModuleEnv>("package", ImportFn{});
    auto load_pickle_fn = std::make_shared<NativeFn>();
    load_pickle_fn->name = "package.load_pickle";
    load_pickle_fn->fn = [importer](Interpreter&, std::vector<Value>& args) {
        if (args.size() != 2 || !args[0].is_str() || !args[1].is_str()) {
            throw TypeError("load_pickle(package, resource) takes two strings");
        }
        return importer->load_pickle(args[0].as_str(), args[1].as_str());
    };
    api->set("load_pickle", Value(NativeRef(load_pickle_fn)));
    auto import_fn = std::make_shared<NativeFn>();
    import_fn->name = "package.import_module";
    import_fn->fn = [importer](Interpreter&, std::vector<Value>& args) {
        if (args.size() != 1 || !args[0].is_str()) {
            throw TypeError("import_module(name) takes one string");
        }
        return Value(importer->import_module(args[0].as_str()));
    };
    api->set("import_module", Value(NativeRef(import_fn)));
    session->self = Value(ModuleRef(api));

    return InterpreterSession(std::move(session));
}

// ---------------------------------------------------------------------------
// MovableObject

Value MovableObject::materialize_on(Interpreter& interp) {
    if (!state_) throw StaleHandleError("empty movable object");
    {
        std::lock_guard<std::mutex> lock(state_->mu);
        auto it = state_->cache.find(interp.id());
        if (it != state_->cache.end()) return it->second;
    }
    HermeticImporter& importer = state_->package->importer_for(interp);
    GilGuard gil(interp);
    Value value = unpickle(state_->stream_bytes, importer);
    std::lock_guard<std::mutex> lock(state_->mu);
    return state_->cache.emplace(interp.id(), std::move(value)).first->second;
}

HostValue MovableObject::call(std::vector<HostValue> args) {
    if (!state_) throw StaleHandleError("empty movable object");
    PoolCheckout checkout(*state_->package->manager);
    Value self = materialize_on(checkout.interp);

    GilGuard gil(checkout.interp);
    std::vector<Value> call_args;
    call_args.reserve(args.size());
    for (const HostValue& arg : args) call_args.push_back(host_to_value(arg));
    Value result = checkout.interp.call_value(self, std::move(call_args));
    return value_to_host(result);
}

InterpreterSession MovableObject::acquire_session() {
    if (!state_) throw StaleHandleError("empty movable object");
    Interpreter& interp = state_->package->manager->acquire();
    auto session = std::make_shared<detail_deploy::SessionState>();
    session->package = state_->package;
    session->interp = &interp;
    session->open = true;
    try {
        session->self = materialize_on(interp);
    } catch (...) {
        // SessionState's destructor returns the interpreter.
        throw;
    }
    return InterpreterSession(std::move(session));
}

size_t MovableObject::materialization_count() const {
    std::lock_guard<std::mutex> lock(state_->mu);
    return state_->cache.size();
}

std::vector<int> MovableObject::materialized_interpreter_ids() const {
    std::lock_guard<std::mutex> lock(state_->mu);
    std::vector<int> ids;
    ids.reserve(state_->cache.size());
    for (const auto& [id, value] : state_->cache) ids.push_back(id);
    return ids;
}

// ---------------------------------------------------------------------------
// ObjHandle / InterpreterSession

const Value& ObjHandle::checked() const {
    if (!session_ || !session_->open) {
        throw StaleHandleError("handle used after its session closed");
    }
    return value_;
}

ObjHandle ObjHandle::attr(const std::string& name) const {
    const Value& value = checked();
    GilGuard gil(*session_->interp);
    return ObjHandle(session_, session_->interp->get_attr(value, name));
}

ObjHandle ObjHandle::call(const std::vector<ObjHandle>& args) const {
    const Value& callee = checked();
    std::vector<Value> call_args;
    call_args.reserve(args.size());
    for (const ObjHandle& arg : args) call_args.push_back(arg.checked());
    GilGuard gil(*session_->interp);
    return ObjHandle(session_, session_->interp->call_value(callee, std::move(call_args)));
}

ObjHandle InterpreterSession::self() const {
    if (!state_ || !state_->open) throw StaleHandleError("session is closed");
    return ObjHandle(state_, state_->self);
}

ObjHandle InterpreterSession::global(const std::string& module, const std::string& name) {
    if (!state_ || !state_->open) throw StaleHandleError("session is closed");
    GilGuard gil(*state_->interp);
    HermeticImporter& importer = state_->package->importer_for(*state_->interp);
    return ObjHandle(state_, importer.resolve(module, name));
}

ObjHandle InterpreterSession::from_host(const HostValue& value) {
    if (!state_ || !state_->open) throw StaleHandleError("session is closed");
    return ObjHandle(state_, host_to_value(value));
}

HostValue InterpreterSession::to_host(const ObjHandle& handle) {
    if (!state_ || !state_->open) throw StaleHandleError("session is closed");
    GilGuard gil(*state_->interp);
    return value_to_host(handle.checked());
}

MovableObject InterpreterSession::create_movable(const ObjHandle& handle) {
    if (!state_ || !state_->open) throw StaleHandleError("session is closed");
    const Value& value = handle.checked();
    GilGuard gil(*state_->interp);
    HermeticImporter& importer = state_->package->importer_for(*state_->interp);
    GlobalResolver* locator = &importer;
    PickleStream stream = pickle(value, std::span<GlobalResolver* const>(&locator, 1));

    auto movable_state = std::make_shared<detail_deploy::MovableState>();
    movable_state->package = state_->package;
    movable_state->stream_bytes = std::move(stream.bytes);
    for (BlobKey key : stream.blob_refs) {
        movable_state->retained_blobs.push_back(TensorHandle::share(key));
    }
    MovableObject movable;
    movable.state_ = std::move(movable_state);
    return movable;
}

void InterpreterSession::close() {
    if (!state_ || !state_->open) return;
    state_->open = false;
    state_->self = Value();
    state_->package->manager->release(*state_->interp);
}

}  // namespace mscript
