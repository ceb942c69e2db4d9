#pragma once
// Little-endian byte encoding helpers shared by the binary formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "groundprobe/error.hpp"

namespace groundprobe::detail {

using Bytes = std::vector<std::uint8_t>;

template <class UInt>
void put_le(Bytes& out, UInt value) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
}

inline void put_f32(Bytes& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }
inline void put_f64(Bytes& out, double value) { put_le(out, std::bit_cast<std::uint64_t>(value)); }

inline void put_raw(Bytes& out, std::string_view raw) { out.insert(out.end(), raw.begin(), raw.end()); }

// Bounds-checked sequential reader over a byte buffer.
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }
    [[nodiscard]] std::size_t position() const { return pos_; }

    template <class UInt>
    UInt get_le() {
        need(sizeof(UInt));
        UInt value = 0;
        for (std::size_t i = 0; i < sizeof(UInt); ++i) {
            value |= static_cast<UInt>(static_cast<UInt>(bytes_[pos_ + i]) << (8 * i));
        }
        pos_ += sizeof(UInt);
        return value;
    }

    float get_f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
    double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

    std::span<const std::uint8_t> get_raw(std::size_t n) {
        need(n);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n) fail(ErrorKind::truncation, "unexpected end of data");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline Bytes read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open for reading: " + path.string());
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorKind::io, "read failed: " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

inline std::string read_file_text(const std::filesystem::path& path) {
    const Bytes bytes = read_file_bytes(path);
    return {bytes.begin(), bytes.end()};
}

inline void write_file_text(const std::filesystem::path& path, std::string_view text) {
    write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace groundprobe::detail
