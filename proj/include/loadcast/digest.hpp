#pragma once

#include "loadcast/errors.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

namespace loadcast {

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
class Fnv1a {
public:
    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            hash_ ^= c;
            hash_ *= 0x100000001B3ULL;
        }
    }

    void update(const void* data, std::size_t size) {
        update(std::string_view(static_cast<const char*>(data), size));
    }

    std::uint64_t value() const { return hash_; }

    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
        return buf;
    }

private:
    std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

inline std::string digest_of(std::string_view bytes) {
    Fnv1a h;
    h.update(bytes);
    return h.hex();
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string file_digest(const std::filesystem::path& path) { return digest_of(read_file(path)); }

} // namespace loadcast
