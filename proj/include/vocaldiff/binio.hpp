#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "vocaldiff/errors.hpp"

// Little-endian byte packing shared by the VLAT and VDIF formats.
namespace vocaldiff::binio {

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    template <typename U>
    void le(U value) {
        static_assert(std::is_unsigned_v<U>);
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            buf_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
        }
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        le(bits);
    }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(std::span<const std::uint8_t> data, std::string format)
        : data_(data), format_(std::move(format)) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError(format_ + ": truncated at offset " + std::to_string(pos_) +
                              " reading " + what + " (need " + std::to_string(n) + " bytes, have " +
                              std::to_string(remaining()) + ")");
        }
    }
    void magic(const char (&expected)[5]) {
        need(4, "magic");
        if (std::memcmp(data_.data() + pos_, expected, 4) != 0) {
            throw FormatError(format_ + ": bad magic at offset " + std::to_string(pos_) +
                              ", expected \"" + expected + "\"");
        }
        pos_ += 4;
    }
    template <typename U>
    U le(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
        }
        pos_ += sizeof(U);
        return v;
    }
    std::vector<float> f32s(std::size_t n, const char* what) {
        if (n > remaining() / 4) {
            need(n * 4, what);
        }
        std::vector<float> out(n);
        for (auto& v : out) {
            auto bits = le<std::uint32_t>(what);
            std::memcpy(&v, &bits, sizeof(v));
        }
        return out;
    }
    std::string text(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void finish() const {
        if (remaining() != 0) {
            throw FormatError(format_ + ": " + std::to_string(remaining()) +
                              " unexpected trailing bytes at offset " + std::to_string(pos_));
        }
    }
    [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
        throw FormatError(format_ + ": " + msg + " at offset " + std::to_string(at));
    }

private:
    std::span<const std::uint8_t> data_;
    std::string format_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace vocaldiff::binio
