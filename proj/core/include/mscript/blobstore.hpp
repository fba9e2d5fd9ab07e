#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mscript/errors.hpp"

namespace mscript {

enum class DType : uint8_t { f32 = 0, i64 = 1 };

size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);
size_t shape_numel(std::span<const size_t> shape);
std::string shape_to_string(std::span<const size_t> shape);

using BlobKey = uint64_t;

struct BlobStats {
    size_t live_blobs = 0;
    size_t total_bytes = 0;
    std::map<BlobKey, uint32_t> refcounts;
};

// Process-global store of immutable, reference-counted tensor buffers. All
// interpreters share it; every operation is safe to call from any thread.
// Keys are never reused within a process lifetime.
class BlobStore {
public:
    static BlobStore& instance();

    // New blob with refcount 1. Throws ShapeError if the byte length does not
    // match shape x dtype size.
    BlobKey create(DType dtype, std::vector<size_t> shape, std::vector<uint8_t> data);

    void retain(BlobKey key);
    // Returns the new count; frees the buffer when it reaches zero.
    uint32_t release(BlobKey key);

    DType dtype(BlobKey key) const;
    std::vector<size_t> shape(BlobKey key) const;
    // Valid while the caller holds at least one reference.
    std::span<const uint8_t> bytes(BlobKey key) const;
    bool alive(BlobKey key) const;

    BlobStats stats() const;

private:
    BlobStore() = default;
    struct Blob;
    Blob& find(BlobKey key);
    const Blob& find(BlobKey key) const;

    struct Impl;
    Impl& impl() const;
};

// Owning reference to a blob: copy retains, destruction releases. Carries its
// own dtype/shape so tensor values stay self-describing.
class TensorHandle {
public:
    TensorHandle() = default;
    ~TensorHandle();
    TensorHandle(const TensorHandle& other);
    TensorHandle(TensorHandle&& other) noexcept;
    TensorHandle& operator=(const TensorHandle& other);
    TensorHandle& operator=(TensorHandle&& other) noexcept;

    // Wraps a key whose +1 reference the caller already owns.
    static TensorHandle adopt(BlobKey key);
    // Retains an additional reference to a live blob.
    static TensorHandle share(BlobKey key);

    bool valid() const { return key_ != 0; }
    BlobKey key() const { return key_; }
    DType dtype() const { return dtype_; }
    const std::vector<size_t>& shape() const { return shape_; }
    size_t numel() const;
    std::span<const uint8_t> bytes() const;
    std::span<const float> f32() const;
    std::span<const int64_t> i64() const;

private:
    BlobKey key_ = 0;
    DType dtype_ = DType::f32;
    std::vector<size_t> shape_;
};

// Native compute kernels. They allocate a new blob, never touch interpreter
// state, and burn real CPU; callers are expected to drop any interpreter lock
// for their duration.
namespace kernels {

TensorHandle zeros(std::span<const size_t> shape);
// splitmix64 stream mapped to f32 in [0,1); identical bytes for equal seeds.
TensorHandle rand(std::span<const size_t> shape, uint64_t seed);
TensorHandle from_f32(std::span<const size_t> shape, std::vector<float> data);
TensorHandle from_i64(std::span<const size_t> shape, std::vector<int64_t> data);
// Element-wise; shapes and dtypes must match exactly (no broadcasting).
TensorHandle add(const TensorHandle& a, const TensorHandle& b);
TensorHandle mul(const TensorHandle& a, const TensorHandle& b);
// 2-D only, inner dims must agree. f32 accumulates row-major, unchunked.
TensorHandle matmul(const TensorHandle& a, const TensorHandle& b);
TensorHandle relu(const TensorHandle& a);
// Scalar (0-d) result; f32 accumulates in row-major order.
TensorHandle sum(const TensorHandle& a);

uint64_t splitmix64_next(uint64_t& state);

}  // namespace kernels

// Blob data file format: magic "NTB1", u8 dtype code, u8 ndim, ndim x u64le
// dims, then raw little-endian element data.
std::vector<uint8_t> encode_ntb1(const TensorHandle& tensor);
TensorHandle decode_ntb1(std::span<const uint8_t> bytes);

}  // namespace mscript
