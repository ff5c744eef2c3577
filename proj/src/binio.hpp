#pragma once

// Little-endian binary readers/writers shared by the checkpoint and dataset
// file formats. Readers track their byte offset so that format errors can
// point at the offending position.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "modforge/errors.hpp"

namespace modforge::detail {

class BinWriter {
  public:
    explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open '" + path + "' for writing");
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed on '" + path_ + "'");
    }

    void magic(const char (&m)[5]) { bytes(m, 4); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { put_le(v); }
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_le(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_le(bits);
    }
    void str(const std::string& s) { bytes(s.data(), s.size()); }

    void close() {
        out_.close();
        if (!out_) throw IoError("close failed on '" + path_ + "'");
    }

  private:
    template <typename T>
    void put_le(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(buf, sizeof(T));
    }

    std::string path_;
    std::ofstream out_;
};

class BinReader {
  public:
    explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open '" + path + "' for reading");
    }

    std::size_t offset() const { return offset_; }

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError("'" + path_ + "': " + what + " at byte offset " + std::to_string(offset_));
    }

    void bytes(void* p, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            fail(std::string("truncated file while reading ") + what);
        }
        offset_ += n;
    }

    void expect_magic(const char (&m)[5]) {
        char got[4];
        bytes(got, 4, "magic");
        if (std::memcmp(got, m, 4) != 0) {
            offset_ -= 4;
            fail(std::string("bad magic, expected '") + m + "'");
        }
    }

    std::uint8_t u8(const char* what) {
        std::uint8_t v;
        bytes(&v, 1, what);
        return v;
    }
    std::uint16_t u16(const char* what) { return get_le<std::uint16_t>(what); }
    std::uint32_t u32(const char* what) { return get_le<std::uint32_t>(what); }
    std::uint64_t u64(const char* what) { return get_le<std::uint64_t>(what); }
    float f32(const char* what) {
        const std::uint32_t bits = get_le<std::uint32_t>(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64(const char* what) {
        const std::uint64_t bits = get_le<std::uint64_t>(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        std::string s(n, '\0');
        if (n) bytes(s.data(), n, what);
        return s;
    }

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

  private:
    template <typename T>
    T get_le(const char* what) {
        unsigned char buf[sizeof(T)];
        bytes(buf, sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }

    std::string path_;
    std::ifstream in_;
    std::size_t offset_ = 0;
};

}  // namespace modforge::detail
