#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace yor::wire {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t,
             std::conditional_t<sizeof(T) == 4, std::uint32_t,
             std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;

class Writer {
 public:
  template <typename T>
  void le(T v) { put(std::bit_cast<Bits<T>>(v), false); }
  template <typename T>
  void be(T v) { put(std::bit_cast<Bits<T>>(v), true); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t>& buffer() { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  template <typename U>
  void put(U u, bool big) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      const std::size_t shift = 8 * (big ? sizeof(U) - 1 - i : i);
      buf_.push_back(static_cast<std::uint8_t>(u >> shift));
    }
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : buf_(b) {}

  template <typename T>
  T le() { return std::bit_cast<T>(get<Bits<T>>(false)); }
  template <typename T>
  T be() { return std::bit_cast<T>(get<Bits<T>>(true)); }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto out = buf_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw DecodeError("incomplete frame");
  }
  template <typename U>
  U get(bool big) {
    need(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      const std::size_t shift = 8 * (big ? sizeof(U) - 1 - i : i);
      u |= static_cast<U>(static_cast<U>(buf_[pos_ + i]) << shift);
    }
    pos_ += sizeof(U);
    return u;
  }
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace yor::wire
