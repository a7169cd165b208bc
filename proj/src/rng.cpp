#include "codeal/rng.hpp"

namespace codeal {

namespace {

// FNV-1a, 64-bit.
std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t SeedSequence::derive(std::string_view name, std::uint64_t a,
                                   std::uint64_t b) const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv1a(h, name.data(), name.size());
  std::uint64_t words[2] = {a, b};
  h = fnv1a(h, words, sizeof(words));
  return splitmix64(h ^ splitmix64(master_));
}

}  // namespace codeal
