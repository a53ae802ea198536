#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace spdl {

// xoshiro256** seeded through splitmix64.
//
// All derived variates (uniform, normal, Rademacher, integers) are computed
// with integer arithmetic plus sqrt/log, so equal seeds give equal streams
// independent of the standard library in use.
class Rng {
 public:
  static constexpr std::string_view algorithm = "xoshiro256**/splitmix64";

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();
  double rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  std::vector<double> normal_vector(std::size_t n, double scale = 1.0);
  std::vector<double> rademacher_vector(std::size_t n);

  // Independent child stream; the parent advances by one draw.
  Rng split();

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace spdl
