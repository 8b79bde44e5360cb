#pragma once

// Little-endian byte helpers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "crisp/errors.hpp"

namespace crisp::detail {

class ByteWriter {
public:
    void raw(std::string_view bytes) { out_.append(bytes); }

    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }

    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class ByteReader {
public:
    ByteReader(std::string_view bytes, std::string context)
        : bytes_(bytes), context_(std::move(context)) {}

    std::string_view raw(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::uint8_t u8() { return static_cast<std::uint8_t>(raw(1)[0]); }

    std::uint32_t u32() {
        auto s = raw(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        auto s = raw(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(s[i])) << (8 * i);
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void expect_magic(std::string_view magic) {
        if (bytes_.size() < magic.size() || bytes_.substr(0, magic.size()) != magic) {
            throw FormatError(context_ + ": bad magic bytes (expected " + std::string(magic) + ")");
        }
        pos_ = magic.size();
    }

    void expect_end() const {
        if (remaining() != 0) {
            throw FormatError(context_ + ": " + std::to_string(remaining()) + " trailing bytes");
        }
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError(context_ + ": truncated payload");
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
    std::string context_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

} // namespace crisp::detail
