#pragma once

#include <memory>
#include <string>

#include "mscript/ast.hpp"

namespace mscript {

// Parses one module. Side-effect free; the returned AST's import list covers
// every import statement anywhere in the source. Throws SyntaxError.
std::shared_ptr<const ModuleAST> parse_module(const std::string& name, const std::string& source);

}  // namespace mscript
