#pragma once

// Little-endian byte packing shared by the STL, IR bank and WAV codecs.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "echotrain/errors.hpp"

namespace echotrain {

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put_le(v); }
    void u32(std::uint32_t v) { put_le(v); }
    void i16(std::int16_t v) { put_le(static_cast<std::uint16_t>(v)); }
    void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }

    void raw(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
    void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    /// Writes exactly n bytes of s, zero padded or truncated.
    void padded(std::string_view s, std::size_t n)
    {
        for (std::size_t i = 0; i < n; ++i) {
            buf_.push_back(i < s.size() ? static_cast<std::uint8_t>(s[i]) : 0);
        }
    }

    std::size_t size() const { return buf_.size(); }
    const Bytes& bytes() const& { return buf_; }
    Bytes take() && { return std::move(buf_); }

private:
    template <typename U>
    void put_le(U v)
    {
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    Bytes buf_;
};

/// Bounds-checked little-endian reader. Every read past the end throws a
/// ParseError carrying the offset of the failed read.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data, std::size_t limit = SIZE_MAX)
        : data_(data), limit_(std::min(limit, data.size())) {}

    std::uint8_t u8() { return get_le<std::uint8_t>(); }
    std::uint16_t u16() { return get_le<std::uint16_t>(); }
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::int16_t i16() { return static_cast<std::int16_t>(get_le<std::uint16_t>()); }
    float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

    std::span<const std::uint8_t> raw(std::size_t n)
    {
        require(n);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    bool can_read(std::size_t n) const { return pos_ + n <= limit_; }
    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return limit_ - pos_; }

private:
    void require(std::size_t n) const
    {
        if (!can_read(n)) {
            throw ParseError("unexpected end of data", pos_);
        }
    }

    template <typename U>
    U get_le()
    {
        require(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            v = static_cast<U>(v | (static_cast<U>(data_[pos_ + i]) << (8 * i)));
        }
        pos_ += sizeof(U);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t limit_;
    std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline std::string read_text_file(const std::filesystem::path& path)
{
    auto b = read_file(path);
    return std::string(b.begin(), b.end());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text)
{
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace echotrain
