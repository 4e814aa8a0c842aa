#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "voxgrasp/error.hpp"

namespace voxgrasp::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order, which must be little-endian");

/// Write `bytes` to a temporary sibling and rename it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
/// Whole file as bytes; throws InputError if it cannot be opened.
std::string read_file(const std::filesystem::path& path);

template <class T>
void put(std::string& out, const T& value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

/// Sequential reader over a byte buffer; running off the end is a FormatError.
class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void read(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated file");
  }

  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace voxgrasp::io
