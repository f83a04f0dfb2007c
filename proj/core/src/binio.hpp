#pragma once

// Little-endian binary readers/writers shared by the on-disk formats.
// Private to the library; every read failure reports the byte offset at
// which the stream stopped making sense.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "conceptdrive/errors.hpp"

namespace conceptdrive::detail {

class ByteReader {
public:
    explicit ByteReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw FormatError("cannot open " + path, 0);
    }

    std::uint64_t offset() const { return offset_; }

    void raw(void* dst, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError(path_ + ": truncated while reading " + std::string(what), offset_);
        offset_ += n;
    }

    std::uint32_t u32(const char* what) {
        std::uint8_t b[4];
        raw(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    std::uint64_t u64(const char* what) {
        const std::uint64_t lo = u32(what);
        const std::uint64_t hi = u32(what);
        return lo | (hi << 32);
    }

    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float out;
        std::memcpy(&out, &bits, 4);
        return out;
    }

    double f64(const char* what) {
        const std::uint64_t bits = u64(what);
        double out;
        std::memcpy(&out, &bits, 8);
        return out;
    }

    std::string str(std::size_t n, const char* what) {
        std::string s(n, '\0');
        if (n) raw(s.data(), n, what);
        return s;
    }

    void magic(const char (&expect)[5]) {
        const std::uint64_t at = offset_;
        char got[4];
        raw(got, 4, "magic");
        if (std::memcmp(got, expect, 4) != 0)
            throw FormatError(path_ + ": bad magic, expected \"" + std::string(expect, 4) + "\"",
                              at);
    }

    /// True once the stream is exactly exhausted.
    bool at_end() {
        return in_.peek() == std::char_traits<char>::eof();
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
    std::uint64_t offset_ = 0;
};

class ByteWriter {
public:
    explicit ByteWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw FormatError("cannot open " + path + " for writing", 0);
    }

    void raw(const void* src, std::size_t n) {
        out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
    }

    void u32(std::uint32_t v) {
        const std::uint8_t b[4] = {static_cast<std::uint8_t>(v),
                                   static_cast<std::uint8_t>(v >> 8),
                                   static_cast<std::uint8_t>(v >> 16),
                                   static_cast<std::uint8_t>(v >> 24)};
        raw(b, 4);
    }

    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }

    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }

    void str(const std::string& s) { raw(s.data(), s.size()); }

    void magic(const char (&m)[5]) { raw(m, 4); }

    void close() {
        out_.close();
        if (!out_) throw FormatError("write to " + path_ + " failed", 0);
    }

private:
    std::string path_;
    std::ofstream out_;
};

}  // namespace conceptdrive::detail
