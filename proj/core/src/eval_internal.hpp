#pragma once

#include <string>
#include <vector>

#include "mscript/interpreter.hpp"
#include "mscript/value.hpp"

namespace mscript::detail {

// Entry points shared between the evaluator and the builtin modules. The
// interpreter lock must be held by the calling thread.
Value call_callable(Interpreter& interp, const Value& callee, std::vector<Value> args);
Value attribute_get(Interpreter& interp, const Value& object, const std::string& name);
bool value_truthy(const Value& v);

void install_core_builtins(Interpreter& interp, ModuleEnv& builtins);

}  // namespace mscript::detail
