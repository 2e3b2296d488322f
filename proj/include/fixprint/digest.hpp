//===- digest.hpp - 128-bit structural content digests ---------*- C++ -*-===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#ifndef FIXPRINT_DIGEST_HPP
#define FIXPRINT_DIGEST_HPP

#include <cstdint>
#include <string>
#include <string_view>

namespace fixprint {

/// 128-bit FNV-1a digest. Wide enough that distinct canonical serializations
/// colliding is treated as impossible by the rest of the toolkit.
struct Digest128 {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  friend bool operator==(const Digest128 &, const Digest128 &) = default;
  friend auto operator<=>(const Digest128 &, const Digest128 &) = default;

  std::string hex() const;
};

class Fnv128 {
public:
  Fnv128() = default;

  void update(std::string_view bytes);
  void update_byte(unsigned char b);
  /// Length-prefixed field update; unambiguous concatenation of fields.
  void update_field(std::string_view bytes);
  void update_u32(std::uint32_t v);

  Digest128 finish() const;

private:
  // FNV-1a 128-bit offset basis.
  unsigned __int128 state_ = (static_cast<unsigned __int128>(0x6c62272e07bb0142ULL) << 64) |
                             0x62b821756295c58dULL;
};

Digest128 digest_bytes(std::string_view bytes);

} // namespace fixprint

#endif // FIXPRINT_DIGEST_HPP
