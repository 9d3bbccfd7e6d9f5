#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dsct/rng.hpp"

using namespace dsct;

TEST(Philox, KnownAnswerVectors) {
  using W = std::array<std::uint32_t, 4>;
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}), (W{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (W{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (W{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RngStream, ReproducibleAndAddressed) {
  RngStream a(7, StreamPurpose::noise, {1, 2, 3});
  RngStream b(7, StreamPurpose::noise, {1, 2, 3});
  RngStream other_addr(7, StreamPurpose::noise, {1, 2, 4});
  RngStream other_purpose(7, StreamPurpose::augment, {1, 2, 3});
  RngStream other_seed(8, StreamPurpose::noise, {1, 2, 3});
  int differs_addr = 0, differs_purpose = 0, differs_seed = 0;
  for (int i = 0; i < 64; ++i) {
    const auto v = a.next_u32();
    EXPECT_EQ(v, b.next_u32());
    differs_addr += v != other_addr.next_u32();
    differs_purpose += v != other_purpose.next_u32();
    differs_seed += v != other_seed.next_u32();
  }
  EXPECT_GT(differs_addr, 60);
  EXPECT_GT(differs_purpose, 60);
  EXPECT_GT(differs_seed, 60);
}

TEST(RngStream, UniformAndBelowRanges) {
  RngStream s(1, StreamPurpose::test);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const auto k = s.below(8);
    ASSERT_LT(k, 8u);
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 8u);
}

TEST(RngStream, NormalMoments) {
  RngStream s(2, StreamPurpose::test);
  const int n = 200000;
  double m = 0, m2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    m += z;
    m2 += z * z;
  }
  m /= n;
  EXPECT_NEAR(m, 0.0, 0.01);
  EXPECT_NEAR(m2 / n - m * m, 1.0, 0.015);
}
