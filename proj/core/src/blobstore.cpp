#include "mscript/blobstore.hpp"

#include <atomic>
#include <cstring>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <unordered_map>

namespace mscript {

size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::f32: return 4;
        case DType::i64: return 8;
    }
    throw FormatError("unknown dtype code " + std::to_string(static_cast<int>(dtype)));
}

const char* dtype_name(DType dtype) {
    switch (dtype) {
        case DType::f32: return "f32";
        case DType::i64: return "i64";
    }
    return "?";
}

size_t shape_numel(std::span<const size_t> shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(std::span<const size_t> shape) {
    std::ostringstream out;
    out << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ",";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

struct BlobStore::Blob {
    DType dtype;
    std::vector<size_t> shape;
    std::vector<uint8_t> data;
    std::atomic<uint32_t> refs;
};

struct BlobStore::Impl {
    mutable std::mutex mu;
    std::unordered_map<BlobKey, std::unique_ptr<Blob>> blobs;
    BlobKey next_key = 1;
};

BlobStore& BlobStore::instance() {
    static BlobStore store;
    return store;
}

BlobStore::Impl& BlobStore::impl() const {
    static Impl impl;
    return impl;
}

BlobKey BlobStore::create(DType dtype, std::vector<size_t> shape, std::vector<uint8_t> data) {
    const size_t expected = shape_numel(shape) * dtype_size(dtype);
    if (data.size() != expected) {
        throw ShapeError("blob data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape) + " x " +
                         dtype_name(dtype) + " (expected " + std::to_string(expected) + ")");
    }
    auto blob = std::make_unique<Blob>();
    blob->dtype = dtype;
    blob->shape = std::move(shape);
    blob->data = std::move(data);
    blob->refs.store(1, std::memory_order_relaxed);

    Impl& im = impl();
    std::lock_guard<std::mutex> lock(im.mu);
    BlobKey key = im.next_key++;
    im.blobs.emplace(key, std::move(blob));
    return key;
}

BlobStore::Blob& BlobStore::find(BlobKey key) {
    Impl& im = impl();
    std::lock_guard<std::mutex> lock(im.mu);
    auto it = im.blobs.find(key);
    if (it == im.blobs.end()) throw UseAfterFreeError(key);
    return *it->second;
}

const BlobStore::Blob& BlobStore::find(BlobKey key) const {
    return const_cast<BlobStore*>(this)->find(key);
}

void BlobStore::retain(BlobKey key) {
    find(key).refs.fetch_add(1, std::memory_order_relaxed);
}

uint32_t BlobStore::release(BlobKey key) {
    Blob& blob = find(key);
    uint32_t prev = blob.refs.fetch_sub(1, std::memory_order_acq_rel);
    if (prev == 0) throw UseAfterFreeError(key);
    uint32_t now = prev - 1;
    if (now == 0) {
        Impl& im = impl();
        std::lock_guard<std::mutex> lock(im.mu);
        im.blobs.erase(key);
    }
    return now;
}

DType BlobStore::dtype(BlobKey key) const {
    return find(key).dtype;
}

std::vector<size_t> BlobStore::shape(BlobKey key) const {
    return find(key).shape;
}

std::span<const uint8_t> BlobStore::bytes(BlobKey key) const {
    const Blob& blob = find(key);
    return {blob.data.data(), blob.data.size()};
}

bool BlobStore::alive(BlobKey key) const {
    Impl& im = impl();
    std::lock_guard<std::mutex> lock(im.mu);
    return im.blobs.count(key) != 0;
}

BlobStats BlobStore::stats() const {
    Impl& im = impl();
    std::lock_guard<std::mutex> lock(im.mu);
    BlobStats st;
    st.live_blobs = im.blobs.size();
    for (const auto& [key, blob] : im.blobs) {
        st.total_bytes += blob->data.size();
        st.refcounts[key] = blob->refs.load(std::memory_order_relaxed);
    }
    return st;
}

TensorHandle::~TensorHandle() {
    if (key_ != 0) BlobStore::instance().release(key_);
}

TensorHandle::TensorHandle(const TensorHandle& other)
    : key_(other.key_), dtype_(other.dtype_), shape_(other.shape_) {
    if (key_ != 0) BlobStore::instance().retain(key_);
}

TensorHandle::TensorHandle(TensorHandle&& other) noexcept
    : key_(other.key_), dtype_(other.dtype_), shape_(std::move(other.shape_)) {
    other.key_ = 0;
    other.shape_.clear();
}

TensorHandle& TensorHandle::operator=(const TensorHandle& other) {
    if (this == &other) return *this;
    TensorHandle copy(other);
    *this = std::move(copy);
    return *this;
}

TensorHandle& TensorHandle::operator=(TensorHandle&& other) noexcept {
    if (this == &other) return *this;
    if (key_ != 0) BlobStore::instance().release(key_);
    key_ = other.key_;
    dtype_ = other.dtype_;
    shape_ = std::move(other.shape_);
    other.key_ = 0;
    other.shape_.clear();
    return *this;
}

TensorHandle TensorHandle::adopt(BlobKey key) {
    TensorHandle h;
    h.key_ = key;
    h.dtype_ = BlobStore::instance().dtype(key);
    h.shape_ = BlobStore::instance().shape(key);
    return h;
}

TensorHandle TensorHandle::share(BlobKey key) {
    BlobStore::instance().retain(key);
    return adopt(key);
}

size_t TensorHandle::numel() const {
    return shape_numel(shape_);
}

std::span<const uint8_t> TensorHandle::bytes() const {
    return BlobStore::instance().bytes(key_);
}

std::span<const float> TensorHandle::f32() const {
    auto b = bytes();
    return {reinterpret_cast<const float*>(b.data()), b.size() / sizeof(float)};
}

std::span<const int64_t> TensorHandle::i64() const {
    auto b = bytes();
    return {reinterpret_cast<const int64_t*>(b.data()), b.size() / sizeof(int64_t)};
}

namespace kernels {

uint64_t splitmix64_next(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

TensorHandle alloc_f32(std::span<const size_t> shape, std::vector<float> data) {
    std::vector<uint8_t> raw(data.size() * sizeof(float));
    std::memcpy(raw.data(), data.data(), raw.size());
    BlobKey key = BlobStore::instance().create(
        DType::f32, std::vector<size_t>(shape.begin(), shape.end()), std::move(raw));
    return TensorHandle::adopt(key);
}

TensorHandle alloc_i64(std::span<const size_t> shape, std::vector<int64_t> data) {
    std::vector<uint8_t> raw(data.size() * sizeof(int64_t));
    std::memcpy(raw.data(), data.data(), raw.size());
    BlobKey key = BlobStore::instance().create(
        DType::i64, std::vector<size_t>(shape.begin(), shape.end()), std::move(raw));
    return TensorHandle::adopt(key);
}

void require_same_shape(const char* op, const TensorHandle& a, const TensorHandle& b) {
    if (a.dtype() != b.dtype()) {
        throw ShapeError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) +
                         " vs " + dtype_name(b.dtype()));
    }
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
    }
}

template <typename T, typename F>
TensorHandle elementwise(const TensorHandle& a, const TensorHandle& b, F f) {
    auto av = std::span<const T>(reinterpret_cast<const T*>(a.bytes().data()), a.numel());
    auto bv = std::span<const T>(reinterpret_cast<const T*>(b.bytes().data()), b.numel());
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
    std::vector<uint8_t> raw(out.size() * sizeof(T));
    std::memcpy(raw.data(), out.data(), raw.size());
    BlobKey key = BlobStore::instance().create(a.dtype(), a.shape(), std::move(raw));
    return TensorHandle::adopt(key);
}

template <typename T>
TensorHandle matmul_impl(const TensorHandle& a, const TensorHandle& b) {
    const size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    auto av = std::span<const T>(reinterpret_cast<const T*>(a.bytes().data()), a.numel());
    auto bv = std::span<const T>(reinterpret_cast<const T*>(b.bytes().data()), b.numel());
    std::vector<T> out(m * n, T{0});
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            T acc{0};
            for (size_t p = 0; p < k; ++p) {
                acc += av[i * k + p] * bv[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    std::vector<uint8_t> raw(out.size() * sizeof(T));
    std::memcpy(raw.data(), out.data(), raw.size());
    BlobKey key = BlobStore::instance().create(a.dtype(), {m, n}, std::move(raw));
    return TensorHandle::adopt(key);
}

}  // namespace

TensorHandle zeros(std::span<const size_t> shape) {
    return alloc_f32(shape, std::vector<float>(shape_numel(shape), 0.0f));
}

TensorHandle rand(std::span<const size_t> shape, uint64_t seed) {
    std::vector<float> data(shape_numel(shape));
    uint64_t state = seed;
    for (float& x : data) {
        // Top 24 bits give a uniform f32 in [0,1).
        x = static_cast<float>(splitmix64_next(state) >> 40) * (1.0f / 16777216.0f);
    }
    return alloc_f32(shape, std::move(data));
}

TensorHandle from_f32(std::span<const size_t> shape, std::vector<float> data) {
    if (data.size() != shape_numel(shape)) {
        throw ShapeError("from_f32: " + std::to_string(data.size()) +
                         " elements for shape " + shape_to_string(shape));
    }
    return alloc_f32(shape, std::move(data));
}

TensorHandle from_i64(std::span<const size_t> shape, std::vector<int64_t> data) {
    if (data.size() != shape_numel(shape)) {
        throw ShapeError("from_i64: " + std::to_string(data.size()) +
                         " elements for shape " + shape_to_string(shape));
    }
    return alloc_i64(shape, std::move(data));
}

TensorHandle add(const TensorHandle& a, const TensorHandle& b) {
    require_same_shape("add", a, b);
    if (a.dtype() == DType::f32) {
        return elementwise<float>(a, b, [](float x, float y) { return x + y; });
    }
    return elementwise<int64_t>(a, b, [](int64_t x, int64_t y) { return x + y; });
}

TensorHandle mul(const TensorHandle& a, const TensorHandle& b) {
    require_same_shape("mul", a, b);
    if (a.dtype() == DType::f32) {
        return elementwise<float>(a, b, [](float x, float y) { return x * y; });
    }
    return elementwise<int64_t>(a, b, [](int64_t x, int64_t y) { return x * y; });
}

TensorHandle matmul(const TensorHandle& a, const TensorHandle& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2) {
        throw ShapeError("matmul: 2-D tensors required, got " + shape_to_string(a.shape()) +
                         " and " + shape_to_string(b.shape()));
    }
    if (a.dtype() != b.dtype()) {
        throw ShapeError(std::string("matmul: dtype mismatch ") + dtype_name(a.dtype()) +
                         " vs " + dtype_name(b.dtype()));
    }
    if (a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: inner dims disagree, " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
    }
    if (a.dtype() == DType::f32) return matmul_impl<float>(a, b);
    return matmul_impl<int64_t>(a, b);
}

TensorHandle relu(const TensorHandle& a) {
    if (a.dtype() == DType::f32) {
        auto av = a.f32();
        std::vector<float> out(av.begin(), av.end());
        for (float& x : out) x = x > 0.0f ? x : 0.0f;
        return alloc_f32(a.shape(), std::move(out));
    }
    auto av = a.i64();
    std::vector<int64_t> out(av.begin(), av.end());
    for (int64_t& x : out) x = x > 0 ? x : 0;
    return alloc_i64(a.shape(), std::move(out));
}

TensorHandle sum(const TensorHandle& a) {
    if (a.dtype() == DType::f32) {
        float acc = 0.0f;
        for (float x : a.f32()) acc += x;
        return alloc_f32({}, {acc});
    }
    int64_t acc = 0;
    for (int64_t x : a.i64()) acc += x;
    return alloc_i64({}, {acc});
}

}  // namespace kernels

namespace {

void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint64_t get_u64le(std::span<const uint8_t> in, size_t offset) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(in[offset + i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<uint8_t> encode_ntb1(const TensorHandle& tensor) {
    std::vector<uint8_t> out;
    out.push_back('N');
    out.push_back('T');
    out.push_back('B');
    out.push_back('1');
    out.push_back(static_cast<uint8_t>(tensor.dtype()));
    out.push_back(static_cast<uint8_t>(tensor.shape().size()));
    for (size_t d : tensor.shape()) put_u64le(out, d);
    auto data = tensor.bytes();
    out.insert(out.end(), data.begin(), data.end());
    return out;
}

TensorHandle decode_ntb1(std::span<const uint8_t> bytes) {
    if (bytes.size() < 6 || bytes[0] != 'N' || bytes[1] != 'T' || bytes[2] != 'B' ||
        bytes[3] != '1') {
        throw FormatError("not an NTB1 blob file");
    }
    uint8_t dtype_code = bytes[4];
    if (dtype_code > 1) throw FormatError("NTB1: unknown dtype code " + std::to_string(dtype_code));
    DType dtype = static_cast<DType>(dtype_code);
    size_t ndim = bytes[5];
    size_t offset = 6;
    if (bytes.size() < offset + ndim * 8) throw FormatError("NTB1: truncated dims");
    std::vector<size_t> shape(ndim);
    for (size_t i = 0; i < ndim; ++i) {
        uint64_t d = get_u64le(bytes, offset);
        if (d > std::numeric_limits<size_t>::max()) throw FormatError("NTB1: dim overflow");
        shape[i] = static_cast<size_t>(d);
        offset += 8;
    }
    const size_t expected = shape_numel(shape) * dtype_size(dtype);
    if (bytes.size() - offset != expected) {
        throw FormatError("NTB1: payload is " + std::to_string(bytes.size() - offset) +
                          " bytes, expected " + std::to_string(expected));
    }
    std::vector<uint8_t> data(bytes.begin() + offset, bytes.end());
    BlobKey key = BlobStore::instance().create(dtype, std::move(shape), std::move(data));
    return TensorHandle::adopt(key);
}

}  // namespace mscript
