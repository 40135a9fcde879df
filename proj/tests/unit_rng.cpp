#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <set>

#include <tsinfer/rng.hpp>

using namespace tsinfer;

TEST_CASE("philox4x32 matches the published reference vectors") {
  // Known-answer vectors for Philox-4x32 with 10 rounds.
  const std::array<std::uint32_t, 2> key0{0u, 0u};
  const std::array<std::uint32_t, 4> ctr0{0u, 0u, 0u, 0u};
  const auto out0 = philox4x32(key0, ctr0);
  CHECK(out0[0] == 0x6627e8d5u);
  CHECK(out0[1] == 0xe169c58du);
  CHECK(out0[2] == 0xbc57ac4cu);
  CHECK(out0[3] == 0x9b00dbd8u);

  const std::array<std::uint32_t, 2> keyf{0xffffffffu, 0xffffffffu};
  const std::array<std::uint32_t, 4> ctrf{0xffffffffu, 0xffffffffu,
                                          0xffffffffu, 0xffffffffu};
  const auto outf = philox4x32(keyf, ctrf);
  CHECK(outf[0] == 0x408f276du);
  CHECK(outf[1] == 0x41c83b0eu);
  CHECK(outf[2] == 0xa20bc7c6u);
  CHECK(outf[3] == 0x6d5451fdu);

  const std::array<std::uint32_t, 2> keyp{0xa4093822u, 0x299f31d0u};
  const std::array<std::uint32_t, 4> ctrp{0x243f6a88u, 0x85a308d3u,
                                          0x13198a2eu, 0x03707344u};
  const auto outp = philox4x32(keyp, ctrp);
  CHECK(outp[0] == 0xd16cfe09u);
  CHECK(outp[1] == 0x94fdccebu);
  CHECK(outp[2] == 0x5001e420u);
  CHECK(outp[3] == 0x24126ea1u);
}

TEST_CASE("streams replay exactly and distinct labels decorrelate") {
  const StreamKey key{42, 7};
  RngStream a(key, 3);
  RngStream b(key, 3);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u32() == b.next_u32());
  }

  // Different substreams and different derived streams must diverge.
  RngStream c(key, 4);
  RngStream d(key.derived(1), 3);
  RngStream e(key.derived(2), 3);
  RngStream base(key, 3);
  bool c_differs = false;
  bool d_differs = false;
  bool e_differs = false;
  bool de_differ = false;
  RngStream d2(key.derived(1), 3);
  for (int i = 0; i < 16; ++i) {
    const std::uint32_t r = base.next_u32();
    const std::uint32_t rd = d.next_u32();
    c_differs = c_differs || (c.next_u32() != r);
    d_differs = d_differs || (rd != r);
    const std::uint32_t re = e.next_u32();
    e_differs = e_differs || (re != r);
    de_differ = de_differ || (re != rd);
  }
  CHECK(c_differs);
  CHECK(d_differs);
  CHECK(e_differs);
  CHECK(de_differ);

  // derived() is itself deterministic.
  CHECK(key.derived(9).seed == key.derived(9).seed);
  CHECK(key.derived(9).stream == key.derived(9).stream);
  for (int i = 0; i < 8; ++i) {
    (void)d2.next_u32();
  }
}

TEST_CASE("mix64 is a bijection on a sample and not the identity") {
  std::set<std::uint64_t> seen;
  bool moved = false;
  for (std::uint64_t x = 0; x < 4096; ++x) {
    const std::uint64_t y = mix64(x);
    seen.insert(y);
    moved = moved || (y != x);
  }
  CHECK(seen.size() == 4096);
  CHECK(moved);
}

TEST_CASE("uniform draws stay strictly inside the unit interval") {
  RngStream s(StreamKey{1, 2}, 0);
  const int n = 100000;
  double sum = 0.0;
  double sum2 = 0.0;
  double lo = 1.0;
  double hi = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum2 += u * u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.05));
  CHECK(lo < 0.001);  // the sample actually explores both ends
  CHECK(hi > 0.999);
}

TEST_CASE("uniform sample quantile matches the population quantile") {
  RngStream s(StreamKey{11, 0}, 0);
  const int n = 100000;
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) {
    u[i] = s.uniform();
  }
  std::sort(u.begin(), u.end());
  const auto rank = static_cast<Eigen::Index>(std::ceil(0.975 * n)) - 1;
  CHECK(u[rank] == doctest::Approx(0.975).epsilon(0.005 / 0.975));
}

TEST_CASE("normal draws have standard moments") {
  RngStream s(StreamKey{3, 4}, 1);
  const int n = 100000;
  double sum = 0.0;
  double sum2 = 0.0;
  double sum3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sum2 += z * z;
    sum3 += z * z * z;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.03));
  CHECK(std::abs(sum3 / n) < 0.1);
}

TEST_CASE("exponential and gamma draws match their first two moments") {
  RngStream s(StreamKey{5, 6}, 2);
  const int n = 100000;
  double esum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = s.exponential();
    REQUIRE(x >= 0.0);
    esum += x;
  }
  CHECK(esum / n == doctest::Approx(1.0).epsilon(0.02));

  for (const double shape : {0.5, 3.0}) {
    RngStream g(StreamKey{5, 7}, static_cast<std::uint32_t>(shape * 2));
    double sum = 0.0;
    double sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = g.gamma(shape);
      REQUIRE(x > 0.0);
      sum += x;
      sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(mean == doctest::Approx(shape).epsilon(0.03));
    CHECK(var == doctest::Approx(shape).epsilon(0.08));
  }
}

TEST_CASE("normal_vector replays deterministically with correct length") {
  const StreamKey key{8, 9};
  RngStream a(key, 0);
  RngStream b(key, 0);
  const Eigen::VectorXd va = a.normal_vector(17);
  const Eigen::VectorXd vb = b.normal_vector(17);
  REQUIRE(va.size() == 17);
  CHECK((va - vb).cwiseAbs().maxCoeff() == 0.0);

  // Moments over many stacked vectors.
  double sum = 0.0;
  double sum2 = 0.0;
  RngStream c(key, 1);
  const int blocks = 4000;
  for (int i = 0; i < blocks; ++i) {
    const Eigen::VectorXd v = c.normal_vector(25);
    sum += v.sum();
    sum2 += v.squaredNorm();
  }
  const double n = 25.0 * blocks;
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("next_u64 draws cover both 32-bit halves") {
  RngStream s(StreamKey{10, 11}, 0);
  std::uint64_t acc_or = 0;
  for (int i = 0; i < 64; ++i) {
    acc_or |= s.next_u64();
  }
  CHECK((acc_or >> 32) != 0u);
  CHECK((acc_or & 0xffffffffu) != 0u);
}
