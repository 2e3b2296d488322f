//===- digest.cpp - 128-bit structural content digests --------------------===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/digest.hpp"

namespace fixprint {

namespace {
// FNV prime for the 128-bit variant: 2^88 + 2^8 + 0x3b.
constexpr unsigned __int128 kFnvPrime =
    (static_cast<unsigned __int128>(1) << 88) | (1 << 8) | 0x3b;

char hex_digit(unsigned v) { return "0123456789abcdef"[v & 0xf]; }
} // namespace

std::string Digest128::hex() const {
  std::string out(32, '0');
  for (int i = 0; i < 16; ++i)
    out[15 - i] = hex_digit(static_cast<unsigned>(hi >> (4 * i)));
  for (int i = 0; i < 16; ++i)
    out[31 - i] = hex_digit(static_cast<unsigned>(lo >> (4 * i)));
  return out;
}

void Fnv128::update_byte(unsigned char b) {
  state_ ^= b;
  state_ *= kFnvPrime;
}

void Fnv128::update(std::string_view bytes) {
  for (unsigned char c : bytes)
    update_byte(c);
}

void Fnv128::update_u32(std::uint32_t v) {
  update_byte(static_cast<unsigned char>(v >> 24));
  update_byte(static_cast<unsigned char>(v >> 16));
  update_byte(static_cast<unsigned char>(v >> 8));
  update_byte(static_cast<unsigned char>(v));
}

void Fnv128::update_field(std::string_view bytes) {
  update_u32(static_cast<std::uint32_t>(bytes.size()));
  update(bytes);
}

Digest128 Fnv128::finish() const {
  return Digest128{static_cast<std::uint64_t>(state_ >> 64),
                   static_cast<std::uint64_t>(state_)};
}

Digest128 digest_bytes(std::string_view bytes) {
  Fnv128 h;
  h.update(bytes);
  return h.finish();
}

} // namespace fixprint
