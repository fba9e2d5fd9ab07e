#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "mscript/value.hpp"

namespace mscript {

class ModuleEnv;

// Resolves a dotted module name to an environment; raises ImportError when it
// cannot. Installed per module at creation time and never replaced.
using ImportFn = std::function<std::shared_ptr<ModuleEnv>(const std::string&)>;

class ModuleEnv {
public:
    ModuleEnv(std::string qualified_name, ImportFn import_fn)
        : name_(std::move(qualified_name)), import_fn_(std::move(import_fn)) {}

    // Stub for a mocked module: every attribute resolves to a Mock value
    // recording its path.
    static std::shared_ptr<ModuleEnv> make_mock_stub(const std::string& module_name);

    const std::string& name() const { return name_; }
    bool is_mock_stub() const { return mock_stub_; }

    std::optional<Value> get(const std::string& name) const;
    void set(const std::string& name, Value value) { bindings_.set(name, std::move(value)); }
    bool has(const std::string& name) const { return bindings_.find(name) != nullptr; }
    const OrderedDict& bindings() const { return bindings_; }

    const ImportFn& import_fn() const { return import_fn_; }

private:
    std::string name_;
    OrderedDict bindings_;
    ImportFn import_fn_;
    bool mock_stub_ = false;
};

}  // namespace mscript
