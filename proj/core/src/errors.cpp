#include "mscript/errors.hpp"

#include <sstream>

namespace mscript {

Error::Error(std::string message) : message_(std::move(message)), what_(message_) {}

void Error::push_frame(TraceFrame frame) {
    trace_.push_back(std::move(frame));
    rebuild_what();
}

void Error::rebuild_what() {
    std::ostringstream out;
    out << message_;
    if (!trace_.empty()) {
        out << "\nTraceback (most recent call last):";
        // Frames are pushed innermost-first while unwinding; print outermost first.
        for (auto it = trace_.rbegin(); it != trace_.rend(); ++it) {
            out << "\n  module \"" << it->module << "\", line " << it->line;
            if (!it->function.empty()) {
                out << ", in " << it->function;
            }
        }
    }
    what_ = out.str();
}

SyntaxError::SyntaxError(std::string message, int line, int col, std::string token)
    : Error(message + " (line " + std::to_string(line) + ", col " + std::to_string(col) +
            ", at '" + token + "')"),
      line_(line),
      col_(col),
      token_(std::move(token)) {}

ImportError::ImportError(std::string message, std::string module_name)
    : Error(std::move(message)), module_name_(std::move(module_name)) {}

MockUsedError::MockUsedError(std::string path)
    : Error("mocked attribute used: " + path), path_(std::move(path)) {}

UseAfterFreeError::UseAfterFreeError(uint64_t key)
    : Error("blob " + std::to_string(key) + " used after release"), key_(key) {}

}  // namespace mscript
