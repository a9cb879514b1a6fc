#pragma once

#include "moodpipe/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moodpipe::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
            std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        }
        std::memcpy(&value, bytes, sizeof(T));
    }
    return value;
}

/// Appends little-endian scalars to a byte buffer.
class byte_writer {
  public:
    void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

    void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) { put(to_little(v)); }
    void f64(double v) { put(to_little(std::bit_cast<std::uint64_t>(v))); }

    void f64s(std::span<const double> values) {
        for (const double v : values) {
            f64(v);
        }
    }

    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }

    [[nodiscard]] const std::string &bytes() const noexcept { return bytes_; }
    [[nodiscard]] std::string take() && { return std::move(bytes_); }

  private:
    template <typename T>
    void put(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        bytes_.append(buf, sizeof(T));
    }

    std::string bytes_;
};

/// Reads little-endian scalars; running off the end raises truncated_payload_error.
class byte_reader {
  public:
    byte_reader(std::string_view bytes, std::string_view what) : bytes_{bytes}, what_{what} {}

    void expect_magic(std::string_view tag) {
        if (bytes_.size() < tag.size() && tag.starts_with(bytes_)) {
            throw truncated_payload_error(std::string(what_) + ": truncated before the magic bytes");
        }
        if (bytes_.substr(0, tag.size()) != tag) {
            throw bad_magic_error(std::string(what_) + ": bad magic, expected \"" + std::string(tag) + "\"");
        }
        pos_ = tag.size();
    }

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() { return to_little(get<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(to_little(get<std::uint64_t>())); }

    void f64s(std::span<double> out) {
        need(out.size() * sizeof(double));
        for (double &v : out) {
            v = f64();
        }
    }

    std::string str() {
        const std::uint32_t n = u32();
        return std::string(take(n));
    }

    [[nodiscard]] bool at_end() const noexcept { return pos_ == bytes_.size(); }
    [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void expect_end() const {
        if (!at_end()) {
            throw format_error(std::string(what_) + ": " + std::to_string(remaining()) + " trailing bytes after payload");
        }
    }

  private:
    void need(std::size_t n) const {
        if (remaining() < n) {
            throw truncated_payload_error(std::string(what_) + ": truncated payload at byte " + std::to_string(pos_));
        }
    }

    std::string_view take(std::size_t n) {
        need(n);
        const std::string_view out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    template <typename T>
    T get() {
        const std::string_view raw = take(sizeof(T));
        T v;
        std::memcpy(&v, raw.data(), sizeof(T));
        return v;
    }

    std::string_view bytes_;
    std::string_view what_;
    std::size_t pos_{0};
};

}  // namespace moodpipe::detail
