#pragma once

#include <cstdint>
#include <string_view>

namespace xlab {

// Deterministic RNG used everywhere randomness is needed. splitmix64 state
// transition plus an explicit Box-Muller gaussian, so streams are
// reproducible bit-for-bit from a seed independent of the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in (0, 1], 53-bit resolution.
  double next_unit();

  // Standard normal via Box-Muller; consumes two uniforms per pair.
  float gaussian();

  // Uniform integer in [0, bound), bound >= 1. Unbiased via rejection.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  float spare_ = 0.0f;
};

// Labeled substream derivation: hashes the label into the seed so
// independent parts of the pipeline ("corpus", "model", "noise:fra", ...)
// draw from unrelated streams of one master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

// FNV-1a over raw bytes; used for checksums and config hashes.
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace xlab
