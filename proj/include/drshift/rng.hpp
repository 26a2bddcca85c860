#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace drshift {

using Rng = std::mt19937_64;

/// Stream derivation.
///
/// Every random stream is keyed by (master seed, purpose, index a, index b).
/// The purpose string is hashed with FNV-1a, then all four words are folded
/// through the splitmix64 finalizer. Distinct keys give statistically
/// independent mt19937_64 streams, so the result of a replication never
/// depends on which thread ran it or in which order.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                          std::uint64_t a = 0, std::uint64_t b = 0);
Rng make_rng(std::uint64_t master, std::string_view purpose,
             std::uint64_t a = 0, std::uint64_t b = 0);

} // namespace drshift
