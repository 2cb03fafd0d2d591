#include "dape/hashing.hpp"

#include <cstdio>

namespace dape {

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed) {
  return fnv1a(std::as_bytes(std::span(text.data(), text.size())), seed);
}

std::uint64_t hash_tensor(const Tensor& t, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::size_t d : t.shape()) {
    const auto v = static_cast<std::uint64_t>(d);
    h = fnv1a(std::as_bytes(std::span(&v, 1)), h);
  }
  return fnv1a(std::as_bytes(t.data()), h);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace dape
