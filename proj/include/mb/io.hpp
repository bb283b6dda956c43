#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mb/error.hpp"
#include "mb/tensor.hpp"

namespace mb {

// CRC-32 (IEEE 802.3), table-driven.
inline std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc = 0) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const std::uint8_t*>(data);
    crc = ~crc;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
    return ~crc;
}

template <class T>
std::uint32_t crc32_tensor(const Tensor<T>& t) {
    return crc32(t.data.data(), t.data.size() * sizeof(T));
}

inline void write_file_bytes(const std::filesystem::path& path, const void* data, std::size_t len) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for writing: " + path.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!f) throw DataError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw MissingFileError("missing file: " + path.string());
    const auto size = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
    f.read(reinterpret_cast<char*>(buf.data()), size);
    if (!f) throw DataError("read failed: " + path.string());
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path, text.data(), text.size());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

// Little-endian scalar append/read helpers for binary formats. The library
// only targets little-endian hosts; this is checked once at load time.
inline bool host_is_little_endian() {
    const std::uint16_t probe = 1;
    std::uint8_t b;
    std::memcpy(&b, &probe, 1);
    return b == 1;
}

template <class T>
void append_pod(std::vector<std::uint8_t>& buf, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
}

template <class T>
T read_pod(const std::vector<std::uint8_t>& buf, std::size_t& off) {
    static_assert(std::is_trivially_copyable_v<T>);
    if (off + sizeof(T) > buf.size()) throw DataError("truncated binary payload");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace mb
