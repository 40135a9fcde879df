#include "tsinfer/rng.hpp"

#include <cmath>
#include <numbers>

#include "tsinfer/errors.hpp"

namespace tsinfer {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 2> key,
                                        std::array<std::uint32_t, 4> counter) {
  std::uint32_t k0 = key[0];
  std::uint32_t k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * counter[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * counter[2];
    const std::array<std::uint32_t, 4> next = {
        static_cast<std::uint32_t>(p1 >> 32) ^ counter[1] ^ k0,
        static_cast<std::uint32_t>(p1),
        static_cast<std::uint32_t>(p0 >> 32) ^ counter[3] ^ k1,
        static_cast<std::uint32_t>(p0),
    };
    counter = next;
    k0 += kW0;
    k1 += kW1;
  }
  return counter;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

StreamKey StreamKey::derived(std::uint64_t tag) const {
  return StreamKey{seed, mix64(stream + mix64(tag))};
}

RngStream::RngStream(StreamKey key, std::uint32_t substream)
    : key_{static_cast<std::uint32_t>(key.seed),
           static_cast<std::uint32_t>(key.seed >> 32)},
      counter_{0, substream, static_cast<std::uint32_t>(key.stream),
               static_cast<std::uint32_t>(key.stream >> 32)} {}

void RngStream::refill() {
  block_ = philox4x32(key_, counter_);
  ++counter_[0];  // 2^32 blocks per (stream, substream) before wrap-around
  available_ = 4;
}

std::uint32_t RngStream::next_u32() {
  if (available_ == 0) {
    refill();
  }
  return block_[4 - available_--];
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t lo = next_u32();
  const std::uint64_t hi = next_u32();
  return lo | (hi << 32);
}

double RngStream::uniform() {
  // 53-bit mantissa, offset by half an ulp so the result stays in (0, 1).
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (have_cached_normal_) {
    have_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  have_cached_normal_ = true;
  return radius * std::cos(angle);
}

double RngStream::exponential() { return -std::log(uniform()); }

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) {
    throw DomainError("gamma shape must be positive");
  }
  if (shape < 1.0) {
    const double boost = std::pow(uniform(), 1.0 / shape);
    return gamma(shape + 1.0) * boost;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return d * v;
    }
  }
}

Eigen::VectorXd RngStream::normal_vector(Eigen::Index size) {
  Eigen::VectorXd out(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    out[i] = normal();
  }
  return out;
}

}  // namespace tsinfer
