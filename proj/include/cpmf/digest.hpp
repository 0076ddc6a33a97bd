#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cpmf {

// 64-bit FNV-1a; used for input/output fingerprints in run manifests.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a_file(const std::string& path);
std::string digest_hex(std::uint64_t digest);

}  // namespace cpmf
