#pragma once

#include <cstdint>
#include <string_view>

namespace gwad {

// One root seed drives every random stream in a run. Sub-streams are derived
// by hashing a text label (and optionally an index) into the root, so the
// order in which modules draw has no effect on what they draw.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label);
std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                          std::uint64_t index);

// Small self-contained generator (splitmix64 stream). The standard library's
// distributions are implementation-defined, which would make "same seed,
// same bytes" depend on the toolchain; this keeps the mapping pinned.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (no cached spare, so draws stay aligned).
  double gaussian();

  // Uniform integer in [0, n), n > 0.
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

}  // namespace gwad
