#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dimma {

// Every random draw in the library goes through an explicit engine owned by
// the caller.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Stable derivation of a module seed from the master seed and a role name.
std::uint64_t derive_seed(std::uint64_t master, std::string_view role) noexcept;
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

}  // namespace dimma
