#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mscript/value.hpp"

namespace mscript {

// One-byte opcode tags. The stream is a stack machine program ending in STOP
// with exactly one value on the stack.
enum PickleOp : uint8_t {
    OP_NONE = 0x00,
    OP_TRUE = 0x01,
    OP_FALSE = 0x02,
    OP_INT = 0x03,      // + i64le
    OP_FLOAT = 0x04,    // + f64le
    OP_STR = 0x05,      // + u32le length + UTF-8 bytes
    OP_LIST = 0x06,     // + u32le n, pops n
    OP_DICT = 0x07,     // + u32le n, pops 2n key/value
    OP_GLOBAL = 0x08,   // + two length-prefixed strings (module, name)
    OP_NEWOBJ = 0x09,   // pops class, pushes uninitialized instance
    OP_SETSTATE = 0x0A, // pops dict, pops instance, assigns attributes
    OP_TENSOR = 0x0B,   // + u64le blob key + dtype/shape header as in NTB1
    OP_MEMOIZE = 0x0C,  // memoizes top of stack at the next index
    OP_GET = 0x0D,      // + u32le memo index
    OP_STOP = 0xFF,
};

struct GlobalRef {
    std::string module;
    std::string name;

    auto operator<=>(const GlobalRef&) const = default;
};

// Resolves (module, name) pairs to values when a stream is replayed, and
// locates classes when one is produced. Implemented by the hermetic importer
// and by the interpreter-backed system resolver.
class GlobalResolver {
public:
    virtual ~GlobalResolver() = default;
    // Throws ImportError / AttributeError.
    virtual Value resolve(const std::string& module, const std::string& name) = 0;
    // Search variant: nullopt instead of raising.
    virtual std::optional<Value> try_resolve(const std::string& module, const std::string& name);
    virtual std::string describe() const = 0;
};

// Resolves through an interpreter's module table and system registry.
class InterpreterResolver : public GlobalResolver {
public:
    explicit InterpreterResolver(Interpreter& interp) : interp_(interp) {}
    Value resolve(const std::string& module, const std::string& name) override;
    std::string describe() const override;

private:
    Interpreter& interp_;
};

struct PickleStream {
    std::vector<uint8_t> bytes;
    std::set<GlobalRef> global_refs;
    std::set<BlobKey> blob_refs;
};

// Serializes a value. Shared sub-objects (same identity) are memoized and
// emitted once; each instance is written as GLOBAL NEWOBJ <attrs> SETSTATE
// after its class has been located through the ordered importer list. Tensor
// data stays out of band: the stream references live blob keys and the caller
// owns their retention for the stream's lifetime. Throws UnpicklableError for
// functions, mocks, and cycles; ClassNotFoundError when no importer knows a
// class.
PickleStream pickle(const Value& value, std::span<GlobalResolver* const> class_locators = {});

// Replays a stream. Tensor values share the referenced blobs (one new
// reference each). Resolver errors propagate; malformed input raises
// FormatError; dead blob keys raise UseAfterFreeError.
Value unpickle(std::span<const uint8_t> bytes, GlobalResolver& resolver);

struct ScanResult {
    std::set<GlobalRef> global_refs;
    std::set<BlobKey> blob_refs;
};

// Pure scan: validates the stream and collects references without
// constructing anything.
ScanResult scan(std::span<const uint8_t> bytes);

// Rewrites every TENSOR key through map (used to convert between live blob
// keys and archive data-file indices). Validates like scan.
std::vector<uint8_t> rewrite_blob_keys(std::span<const uint8_t> bytes,
                                       const std::function<BlobKey(BlobKey)>& map);

}  // namespace mscript
