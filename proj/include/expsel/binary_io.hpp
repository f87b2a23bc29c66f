#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "expsel/error.hpp"

namespace expsel::io {

namespace detail {

template <typename T>
using UintOf = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                  std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;

}  // namespace detail

/// Appends little-endian encoded scalars to a byte buffer.
class ByteWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    using U = detail::UintOf<T>;
    static_assert(sizeof(T) == sizeof(U));
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buffer_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
    }
  }

  template <typename T>
  void put_all(std::span<const T> values) {
    buffer_.reserve(buffer_.size() + values.size() * sizeof(T));
    for (const T& v : values) put(v);
  }

  void put_bytes(std::string_view bytes) { buffer_.append(bytes); }

  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }

  const std::string& bytes() const& { return buffer_; }
  std::string take() && { return std::move(buffer_); }

 private:
  std::string buffer_;
};

/// Reads little-endian scalars from a byte view. Running past the end throws
/// TruncatedPayload.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    using U = detail::UintOf<T>;
    require(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  template <typename T>
  void get_all(std::span<T> out) {
    require(out.size() * sizeof(T));
    for (T& v : out) v = get<T>();
  }

  std::string_view get_bytes(std::size_t n) {
    require(n);
    auto view = bytes_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  std::string get_string() { return std::string(get_bytes(get<std::uint32_t>())); }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void require(std::size_t n) const {
    if (n > remaining()) {
      fail(ErrorCode::TruncatedPayload, "need " + std::to_string(n) + " bytes at offset " +
                                            std::to_string(pos_) + ", have " +
                                            std::to_string(remaining()));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::Io, "read failed for " + path.string());
  return data;
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace expsel::io
