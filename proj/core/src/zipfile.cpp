#include "mscript/zipfile.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "mscript/errors.hpp"

namespace mscript {

namespace {

constexpr uint32_t kLocalHeaderSig = 0x04034b50;
constexpr uint32_t kCentralHeaderSig = 0x02014b50;
constexpr uint32_t kEndOfCentralSig = 0x06054b50;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint16_t get_u16(const std::vector<uint8_t>& in, size_t pos) {
    return static_cast<uint16_t>(in[pos] | (in[pos + 1] << 8));
}

uint32_t get_u32(const std::vector<uint8_t>& in, size_t pos) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(in[pos + i]) << (8 * i);
    return v;
}

uint32_t crc_of(const std::vector<uint8_t>& data) {
    return static_cast<uint32_t>(
        crc32(0L, data.empty() ? Z_NULL : data.data(), static_cast<uInt>(data.size())));
}

}  // namespace

void ZipWriter::add(const std::string& name, std::vector<uint8_t> data) {
    if (name.empty()) throw FormatError("zip entry name is empty");
    if (data.size() > UINT32_MAX) throw FormatError("zip entry too large: " + name);
    if (!entries_.emplace(name, std::move(data)).second) {
        throw FormatError("duplicate zip entry: " + name);
    }
}

void ZipWriter::write(const std::filesystem::path& path) const {
    std::vector<uint8_t> out;
    struct Central {
        const std::string* name;
        uint32_t crc;
        uint32_t size;
        uint32_t offset;
    };
    std::vector<Central> centrals;

    // std::map iterates in sorted name order.
    for (const auto& [name, data] : entries_) {
        uint32_t offset = static_cast<uint32_t>(out.size());
        uint32_t crc = crc_of(data);
        put_u32(out, kLocalHeaderSig);
        put_u16(out, 20);  // version needed
        put_u16(out, 0);   // flags
        put_u16(out, 0);   // method: stored
        put_u16(out, 0);   // mod time (zeroed)
        put_u16(out, 0);   // mod date (zeroed)
        put_u32(out, crc);
        put_u32(out, static_cast<uint32_t>(data.size()));  // compressed
        put_u32(out, static_cast<uint32_t>(data.size()));  // uncompressed
        put_u16(out, static_cast<uint16_t>(name.size()));
        put_u16(out, 0);  // extra length
        out.insert(out.end(), name.begin(), name.end());
        out.insert(out.end(), data.begin(), data.end());
        centrals.push_back({&name, crc, static_cast<uint32_t>(data.size()), offset});
    }

    uint32_t central_start = static_cast<uint32_t>(out.size());
    for (const Central& c : centrals) {
        put_u32(out, kCentralHeaderSig);
        put_u16(out, 20);  // version made by
        put_u16(out, 20);  // version needed
        put_u16(out, 0);   // flags
        put_u16(out, 0);   // method
        put_u16(out, 0);   // time
        put_u16(out, 0);   // date
        put_u32(out, c.crc);
        put_u32(out, c.size);
        put_u32(out, c.size);
        put_u16(out, static_cast<uint16_t>(c.name->size()));
        put_u16(out, 0);  // extra
        put_u16(out, 0);  // comment
        put_u16(out, 0);  // disk
        put_u16(out, 0);  // internal attrs
        put_u32(out, 0);  // external attrs
        put_u32(out, c.offset);
        out.insert(out.end(), c.name->begin(), c.name->end());
    }
    uint32_t central_size = static_cast<uint32_t>(out.size()) - central_start;

    put_u32(out, kEndOfCentralSig);
    put_u16(out, 0);  // disk
    put_u16(out, 0);  // central dir disk
    put_u16(out, static_cast<uint16_t>(centrals.size()));
    put_u16(out, static_cast<uint16_t>(centrals.size()));
    put_u32(out, central_size);
    put_u32(out, central_start);
    put_u16(out, 0);  // comment length

    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
        if (!file) throw IoError("cannot open '" + tmp.string() + "' for writing");
        file.write(reinterpret_cast<const char*>(out.data()),
                   static_cast<std::streamsize>(out.size()));
        if (!file) throw IoError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " +
                          ec.message());
}

ZipReader::ZipReader(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary | std::ios::ate);
    if (!file) throw IoError("cannot open '" + path.string() + "'");
    auto size = file.tellg();
    file.seekg(0);
    bytes_.resize(static_cast<size_t>(size));
    file.read(reinterpret_cast<char*>(bytes_.data()), size);
    if (!file) throw IoError("short read from '" + path.string() + "'");
    parse();
}

ZipReader::ZipReader(std::vector<uint8_t> bytes) : bytes_(std::move(bytes)) {
    parse();
}

void ZipReader::parse() {
    if (bytes_.size() < 22) throw FormatError("not a zip archive: too small");
    // Scan backwards for the end-of-central-directory record (the comment can
    // push it off the end).
    size_t eocd = std::string::npos;
    size_t lo = bytes_.size() >= 22 + 65536 ? bytes_.size() - 22 - 65536 : 0;
    for (size_t i = bytes_.size() - 22 + 1; i-- > lo;) {
        if (get_u32(bytes_, i) == kEndOfCentralSig) {
            eocd = i;
            break;
        }
    }
    if (eocd == std::string::npos) throw FormatError("not a zip archive: no end record");

    uint16_t count = get_u16(bytes_, eocd + 10);
    uint32_t central_size = get_u32(bytes_, eocd + 12);
    uint32_t central_start = get_u32(bytes_, eocd + 16);
    if (central_start + central_size > bytes_.size()) {
        throw FormatError("zip central directory out of bounds");
    }

    size_t pos = central_start;
    for (uint16_t i = 0; i < count; ++i) {
        if (pos + 46 > bytes_.size() || get_u32(bytes_, pos) != kCentralHeaderSig) {
            throw FormatError("bad zip central directory entry");
        }
        uint16_t method = get_u16(bytes_, pos + 10);
        uint32_t crc = get_u32(bytes_, pos + 16);
        uint32_t csize = get_u32(bytes_, pos + 20);
        uint32_t usize = get_u32(bytes_, pos + 24);
        uint16_t name_len = get_u16(bytes_, pos + 28);
        uint16_t extra_len = get_u16(bytes_, pos + 30);
        uint16_t comment_len = get_u16(bytes_, pos + 32);
        uint32_t offset = get_u32(bytes_, pos + 42);
        if (method != 0 || csize != usize) {
            throw FormatError("unsupported zip entry encoding (stored only)");
        }
        if (pos + 46 + name_len > bytes_.size()) throw FormatError("bad zip entry name");
        std::string name(reinterpret_cast<const char*>(bytes_.data() + pos + 46), name_len);
        entries_[name] = Entry{offset, usize, crc};
        pos += 46 + name_len + extra_len + comment_len;
    }
}

std::vector<uint8_t> ZipReader::read(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("zip entry not found: " + name);
    const Entry& e = it->second;
    if (e.offset + 30 > bytes_.size() || get_u32(bytes_, e.offset) != kLocalHeaderSig) {
        throw FormatError("bad zip local header for: " + name);
    }
    uint16_t name_len = get_u16(bytes_, e.offset + 26);
    uint16_t extra_len = get_u16(bytes_, e.offset + 28);
    size_t data_start = e.offset + 30 + name_len + extra_len;
    if (data_start + e.size > bytes_.size()) {
        throw FormatError("zip entry data out of bounds: " + name);
    }
    std::vector<uint8_t> data(bytes_.begin() + static_cast<ptrdiff_t>(data_start),
                              bytes_.begin() + static_cast<ptrdiff_t>(data_start + e.size));
    if (crc_of(data) != e.crc) throw FormatError("zip CRC mismatch for: " + name);
    return data;
}

std::vector<std::string> ZipReader::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, entry] : entries_) out.push_back(name);
    return out;
}

}  // namespace mscript
