#pragma once

#include <cstdint>
#include <string_view>

namespace dynflow {

// SplitMix64 finalizer. Every seeded quantity in the project routes through
// this mixer so that planted tables are reproducible across implementations.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Key derivation: chain-mix a seed with labels/integers. Order-sensitive.
constexpr std::uint64_t derive_key(std::uint64_t h) noexcept { return h; }

template <typename... Rest>
constexpr std::uint64_t derive_key(std::uint64_t h, std::string_view part, Rest... rest) noexcept;
template <typename... Rest>
constexpr std::uint64_t derive_key(std::uint64_t h, std::uint64_t part, Rest... rest) noexcept;

template <typename... Rest>
constexpr std::uint64_t derive_key(std::uint64_t h, std::string_view part, Rest... rest) noexcept {
  return derive_key(mix64(h ^ fnv1a64(part)), rest...);
}

template <typename... Rest>
constexpr std::uint64_t derive_key(std::uint64_t h, std::uint64_t part, Rest... rest) noexcept {
  return derive_key(mix64(h ^ part), rest...);
}

// Top 53 bits -> [0, 1).
constexpr double to_unit01(std::uint64_t k) noexcept {
  return static_cast<double>(k >> 11) * 0x1.0p-53;
}

// hash01(seed, parts...): deterministic uniform draw in [0, 1).
template <typename... Parts>
constexpr double hash01(std::uint64_t seed, Parts... parts) noexcept {
  return to_unit01(mix64(derive_key(mix64(seed), parts...)));
}

// Counter-free sequential generator over the same mixer. Substreams are
// derived by key chaining, which keeps parallel rollouts schedule-independent.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  double next_unit01() noexcept { return to_unit01(next_u64()); }

  bool bernoulli(double p) noexcept { return next_unit01() < p; }

  // Lemire multiply-shift; unbiased enough for sampling candidate indices.
  std::size_t uniform_index(std::size_t n) noexcept {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  template <typename... Parts>
  SplitMix64 split(Parts... parts) const noexcept {
    return SplitMix64(derive_key(mix64(state_), parts...));
  }

 private:
  std::uint64_t state_;
};

}  // namespace dynflow
