//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_HASH_H_
#define TAGMOL_HASH_H_

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace tagmol {

// FNV-1a 64-bit; pass a previous digest as `seed` to chain.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c: bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
std::uint64_t fnv1a_pod(const T *data, std::size_t count, std::uint64_t seed) {
  return fnv1a(std::string_view(reinterpret_cast<const char *>(data),
                                count * sizeof(T)),
               seed);
}

} // namespace tagmol

#endif // TAGMOL_HASH_H_
