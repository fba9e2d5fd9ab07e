#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mscript {

// One script stack frame, innermost last.
struct TraceFrame {
    std::string module;
    int line = 0;
    std::string function;  // empty for module-level code
};

// Base for every error the runtime raises. Errors thrown while script code is
// executing accumulate a traceback as they unwind; what() renders the message
// followed by the formatted traceback.
class Error : public std::exception {
public:
    explicit Error(std::string message);

    const std::string& message() const { return message_; }
    const std::vector<TraceFrame>& traceback() const { return trace_; }
    void push_frame(TraceFrame frame);

    const char* what() const noexcept override { return what_.c_str(); }

private:
    void rebuild_what();

    std::string message_;
    std::vector<TraceFrame> trace_;
    std::string what_;
};

class SyntaxError : public Error {
public:
    SyntaxError(std::string message, int line, int col, std::string token);
    int line() const { return line_; }
    int col() const { return col_; }
    const std::string& token() const { return token_; }

private:
    int line_;
    int col_;
    std::string token_;
};

// Uncaught script failure (bad operand, unbound name, overflow, script raise).
class RuntimeError : public Error {
public:
    using Error::Error;
};

class TypeError : public Error {
public:
    using Error::Error;
};

class ImportError : public Error {
public:
    explicit ImportError(std::string message, std::string module_name = "");
    const std::string& module_name() const { return module_name_; }

private:
    std::string module_name_;
};

class AttributeError : public Error {
public:
    using Error::Error;
};

// First real use of a mock attribute. Carries the full dotted path, e.g.
// "scipy.signal.hann".
class MockUsedError : public Error {
public:
    explicit MockUsedError(std::string path);
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class UseAfterFreeError : public Error {
public:
    explicit UseAfterFreeError(uint64_t key);
    uint64_t key() const { return key_; }

private:
    uint64_t key_;
};

class UnpicklableError : public Error {
public:
    using Error::Error;
};

class ClassNotFoundError : public Error {
public:
    using Error::Error;
};

// Malformed pickle stream, blob file, or archive.
class FormatError : public Error {
public:
    using Error::Error;
};

class DependencyError : public Error {
public:
    using Error::Error;
};

class PatternError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ShutdownError : public Error {
public:
    using Error::Error;
};

class StaleHandleError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace mscript
