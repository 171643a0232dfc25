#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace cotalign {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);

/// Seed of the per-record random stream: first 8 bytes (big-endian) of
/// SHA-256("<global_seed>\x1f<qa_id>"). Independent of processing order.
std::uint64_t derive_stream_seed(std::uint64_t global_seed, std::string_view qa_id);

/// Uniform index in [0, n) by rejection sampling. Unlike
/// std::uniform_int_distribution the draw sequence is identical across
/// standard libraries.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform_unit(std::mt19937_64& rng);

}  // namespace cotalign
