#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>

namespace tsinfer {

// Counter-based generator: Philox 4x32 with 10 rounds.  Every 128-bit output
// block is a pure function of (key, counter), so draws can be indexed rather
// than sequenced and results never depend on thread scheduling.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 2> key,
                                        std::array<std::uint32_t, 4> counter);

// splitmix64 finalizer; used to hash identifiers into stream labels.
std::uint64_t mix64(std::uint64_t x);

// Names one independent random stream: a master seed plus a 64-bit stream
// label.  Sub-streams are indexed explicitly, e.g. one per simulation draw,
// so draw s is reproducible in isolation.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  // A distinct stream derived deterministically from this one.
  [[nodiscard]] StreamKey derived(std::uint64_t tag) const;
};

class RngStream {
 public:
  RngStream(StreamKey key, std::uint32_t substream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform strictly inside (0, 1): never 0, never 1.
  double uniform();
  // Standard normal via Box-Muller (second value cached).
  double normal();
  // Exponential with rate 1.
  double exponential();
  // Gamma(shape, 1), Marsaglia-Tsang; shape > 0.
  double gamma(double shape);

  Eigen::VectorXd normal_vector(Eigen::Index size);

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int available_ = 0;
  double cached_normal_ = 0.0;
  bool have_cached_normal_ = false;

  void refill();
};

}  // namespace tsinfer
