#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace cfpo {

// 64-bit FNV-1a. Used for content fingerprints, replay keys and seed
// derivation; must stay stable across platforms and releases.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a(std::string_view data, std::uint64_t state = kFnvOffset) {
  for (unsigned char c : data) {
    state ^= c;
    state *= kFnvPrime;
  }
  return state;
}

std::string to_hex(std::uint64_t value);

/// Deterministic seed derivation: mixes a base seed with any number of
/// string tags so independent sampling sites never share a stream.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> tags);

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

/// Uniform draw in [0, bound) by rejection; portable unlike
/// std::uniform_int_distribution.
std::uint64_t rng_below(std::mt19937_64& rng, std::uint64_t bound);

/// Uniform double in [0, 1).
double rng_unit(std::mt19937_64& rng);

/// k distinct indices drawn uniformly from [0, n), order randomized.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng);

std::string trim(std::string_view text);
std::string rtrim(std::string_view text);
std::string ltrim(std::string_view text);
std::string to_lower(std::string_view text);
std::string to_upper(std::string_view text);
std::string title_case(std::string_view text);
bool starts_with(std::string_view text, std::string_view prefix);
std::string replace_all(std::string text, std::string_view from, std::string_view to);
std::vector<std::string> split_lines(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace cfpo
