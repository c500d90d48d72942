#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace layerforge {

using Rng = std::mt19937_64;

/// splitmix64 finaliser; derives independent child streams from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

/// FNV-1a 64-bit. Content hashing for manifests and checkpoints, not security.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(std::string_view text);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace layerforge
