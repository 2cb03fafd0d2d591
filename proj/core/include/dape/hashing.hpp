#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "dape/tensor.hpp"

namespace dape {

/// 64-bit FNV-1a, chainable through `seed`.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_tensor(const Tensor& t, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

}  // namespace dape
