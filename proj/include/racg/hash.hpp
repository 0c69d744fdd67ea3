#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace racg {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffset) {
  for (char c : bytes) {
    state ^= static_cast<std::uint8_t>(c);
    state *= kFnvPrime;
  }
  return state;
}

/// Incremental FNV-1a with length-prefixed fields, so that ("ab","c") and
/// ("a","bc") hash differently.
class ContentHasher {
 public:
  ContentHasher& add(std::string_view field) {
    const std::uint64_t n = field.size();
    for (int i = 0; i < 8; ++i) {
      state_ ^= static_cast<std::uint8_t>(n >> (8 * i));
      state_ *= kFnvPrime;
    }
    state_ = fnv1a64(field, state_);
    return *this;
  }
  ContentHasher& add(std::uint64_t value) { return add(std::to_string(value)); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = kFnvOffset;
};

std::string to_hex(std::uint64_t value);

}  // namespace racg
