#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace ipsw {

// Stable stream labels for derived RNG seeds. Every random draw in a study is
// reachable from (master_seed, scenario, scale, rep) so replications can be
// executed in any order, on any number of workers, with identical results.

namespace detail {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

class SeedHasher {
 public:
  SeedHasher& feed(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (v >> (8 * i)) & 0xffu;
      state_ *= detail::kFnvPrime;
    }
    return *this;
  }

  SeedHasher& feed(std::string_view s) {
    for (unsigned char c : s) {
      state_ ^= c;
      state_ *= detail::kFnvPrime;
    }
    // length terminator keeps ("ab","c") distinct from ("a","bc")
    return feed(static_cast<std::uint64_t>(s.size()));
  }

  SeedHasher& feed(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    return feed(bits);
  }

  std::uint64_t digest() const { return detail::splitmix64(state_); }

 private:
  std::uint64_t state_ = detail::kFnvOffset;
};

// Root seed for one replication of one (scenario, effect scale) cell.
inline std::uint64_t child_seed(std::uint64_t master_seed, std::string_view scenario,
                                double effect_scale, int rep_index) {
  return SeedHasher{}
      .feed(master_seed)
      .feed(scenario)
      .feed(effect_scale)
      .feed(static_cast<std::uint64_t>(rep_index))
      .digest();
}

// Seed for sampling one named population within a replication.
inline std::uint64_t population_seed(std::uint64_t replication_seed, std::string_view population) {
  return SeedHasher{}.feed(replication_seed).feed(std::string_view("pop")).feed(population).digest();
}

// Seed for the outcome error draws of the analytic sample within a replication.
inline std::uint64_t outcome_seed(std::uint64_t replication_seed) {
  return SeedHasher{}.feed(replication_seed).feed(std::string_view("outcomes")).digest();
}

}  // namespace ipsw
