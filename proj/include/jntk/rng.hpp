#pragma once

#include <array>
#include <cstdint>

namespace jntk {

/// Philox4x32-10 counter-based generator (Salmon et al. 2011). The key is the
/// 64-bit seed; the counter is (stream, position). Any (seed, stream) pair is
/// an independent, reproducible sequence regardless of evaluation order.
class Philox {
 public:
  using Block = std::array<std::uint32_t, 4>;

  Philox(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  // Four 32-bit words for counter position `pos`.
  Block block(std::uint64_t pos) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// Standard-normal draws from one Philox stream (Box-Muller, two normals per
/// counter block).
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream) : gen_(seed, stream) {}
  double next();

 private:
  Philox gen_;
  std::uint64_t pos_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Uniform in [0, 1) from the same stream family; used for bootstrap indices.
class UniformStream {
 public:
  UniformStream(std::uint64_t seed, std::uint64_t stream) : gen_(seed, stream) {}
  double next();
  std::uint64_t next_below(std::uint64_t n);

 private:
  Philox gen_;
  std::uint64_t pos_ = 0;
  std::uint64_t spare_ = 0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

// Seed for the k-th independent replicate derived from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) {
  return splitmix64(base ^ splitmix64(k + 0x9e3779b97f4a7c15ULL));
}

}  // namespace jntk
