#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mscript {

// Deterministic zip writer: entries are stored uncompressed with zeroed
// timestamps and written in sorted name order, so identical inputs produce
// byte-identical archives. The final file appears atomically (temp + rename).
class ZipWriter {
public:
    // Duplicate names are an error.
    void add(const std::string& name, std::vector<uint8_t> data);
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    void write(const std::filesystem::path& path) const;

private:
    std::map<std::string, std::vector<uint8_t>> entries_;
};

// In-memory zip reader for archives produced by ZipWriter (stored entries
// only). CRCs are verified on read. Throws FormatError on malformed input and
// IoError on filesystem failures.
class ZipReader {
public:
    explicit ZipReader(const std::filesystem::path& path);
    explicit ZipReader(std::vector<uint8_t> bytes);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    std::vector<uint8_t> read(const std::string& name) const;
    std::vector<std::string> names() const;

private:
    void parse();

    struct Entry {
        size_t offset;  // of the local header
        uint32_t size;
        uint32_t crc;
    };

    std::vector<uint8_t> bytes_;
    std::map<std::string, Entry> entries_;
};

}  // namespace mscript
