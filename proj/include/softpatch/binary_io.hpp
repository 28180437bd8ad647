#ifndef SOFTPATCH_BINARY_IO_HPP
#define SOFTPATCH_BINARY_IO_HPP

#include "error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace softpatch::binary {

/// Little-endian byte sink.
class Writer {
public:
    void bytes(std::string_view s) { buffer_.insert(buffer_.end(), s.begin(), s.end()); }

    void u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        }
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void f32s(std::span<const float> values) {
        buffer_.reserve(buffer_.size() + 4 * values.size());
        for (float v : values) {
            f32(v);
        }
    }

    const std::vector<char>& buffer() const { return buffer_; }

private:
    std::vector<char> buffer_;
};

inline void write_bytes(const std::filesystem::path& path, std::span<const char> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorKind::Io, "write failed for " + path.string());
    }
}

inline std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open " + path.string());
    }
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Little-endian cursor over a byte buffer. Running past the end throws
/// with the kind supplied by the caller (header vs payload sections).
class Reader {
public:
    explicit Reader(std::span<const char> data) : data_(data) {}

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t position() const { return pos_; }

    void require(std::size_t n, ErrorKind kind, std::string_view what) const {
        if (remaining() < n) {
            throw Error(kind, std::string(what) + ": need " + std::to_string(n) + " bytes, have " +
                                  std::to_string(remaining()));
        }
    }

    std::string bytes(std::size_t n, ErrorKind kind, std::string_view what) {
        require(n, kind, what);
        std::string s(data_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    std::uint8_t u8(ErrorKind kind, std::string_view what) {
        require(1, kind, what);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::uint32_t u32(ErrorKind kind, std::string_view what) {
        require(4, kind, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64(ErrorKind kind, std::string_view what) {
        require(8, kind, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    float f32(ErrorKind kind, std::string_view what) { return std::bit_cast<float>(u32(kind, what)); }
    double f64(ErrorKind kind, std::string_view what) { return std::bit_cast<double>(u64(kind, what)); }

    std::vector<float> f32s(std::size_t count, ErrorKind kind, std::string_view what) {
        if (count > remaining() / 4) {
            throw Error(kind, std::string(what) + ": need " + std::to_string(count) + " floats, have " +
                                  std::to_string(remaining() / 4));
        }
        std::vector<float> out(count);
        for (auto& v : out) {
            v = f32(kind, what);
        }
        return out;
    }

private:
    std::span<const char> data_;
    std::size_t pos_ = 0;
};

/// a * b with overflow detection, for sizes read from untrusted headers.
inline bool checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
    return !__builtin_mul_overflow(a, b, &out);
}

}

#endif
