// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "molmix/error.hpp"
#include "molmix/matrix.hpp"

namespace molmix {

// Little-endian host assumed; payloads are only read back on the machine
// family that wrote them.
class ByteWriter {
 public:
  template <class T>
    requires std::is_trivially_copyable_v<T>
  void put(const T &value) {
    const auto *p = reinterpret_cast<const std::byte *>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }

  template <class T>
  void put_vector(const std::vector<T> &values) {
    put<std::uint64_t>(values.size());
    const auto *p = reinterpret_cast<const std::byte *>(values.data());
    buf_.insert(buf_.end(), p, p + values.size() * sizeof(T));
  }

  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    const auto *p = reinterpret_cast<const std::byte *>(s.data());
    buf_.insert(buf_.end(), p, p + s.size());
  }

  void put_matrix(const Matrix &m) {
    put<std::uint64_t>(m.rows);
    put<std::uint64_t>(m.cols);
    put_vector(m.data);
  }

  const std::vector<std::byte> &bytes() const { return buf_; }
  std::vector<std::byte> take() { return std::move(buf_); }

 private:
  std::vector<std::byte> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> bytes): bytes_(bytes) { }

  template <class T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  template <class T>
  std::vector<T> get_vector() {
    const auto n = get<std::uint64_t>();
    if (n > bytes_.size()) {
      throw DataError("corrupted payload: vector length");
    }
    need(n * sizeof(T));
    std::vector<T> out(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return out;
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string out(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return out;
  }

  Matrix get_matrix() {
    Matrix m;
    m.rows = get<std::uint64_t>();
    m.cols = get<std::uint64_t>();
    m.data = get_vector<double>();
    if (m.data.size() != m.rows * m.cols) {
      throw DataError("corrupted payload: matrix shape");
    }
    return m;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) {
      throw DataError("corrupted payload: truncated");
    }
  }

  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace molmix
