#include <gtest/gtest.h>

#include <map>
#include <set>

#include "oracles.hpp"

using namespace hydra2;

TEST(Draw, FullSamplingIsDeterministic) {
  const auto p = partition_uniform(6, 2);
  for (std::uint64_t k = 0; k < 5; ++k) {
    const auto smp = draw(p, 3, 99, k);
    EXPECT_EQ(smp.coords, (std::vector<Index>{0, 1, 2, 3, 4, 5}));
  }
}

TEST(Draw, StructureInvariants) {
  const auto p = partition_uniform(40, 4);
  DistributedSampler sampler(p, 3, 5);
  for (std::uint64_t k = 0; k < 200; ++k) {
    const auto smp = sampler.draw(k);
    ASSERT_EQ(smp.size(), 12u);
    for (std::size_t l = 0; l < 4; ++l) {
      const auto node = smp.node(l);
      std::set<Index> uniq(node.begin(), node.end());
      EXPECT_EQ(uniq.size(), 3u);
      for (auto i : node) EXPECT_EQ(p.node_of(i), l);
      EXPECT_TRUE(std::is_sorted(node.begin(), node.end()));
    }
  }
}

TEST(Draw, Frequencies) {
  const auto p = partition_uniform(2, 1);
  DistributedSampler sampler(p, 1, 7);
  std::size_t hits = 0;
  const std::size_t draws = 100000;
  for (std::uint64_t k = 0; k < draws; ++k) hits += sampler.draw(k).coords[0] == 0;
  EXPECT_NEAR(double(hits) / draws, 0.5, 0.01);
}

TEST(Draw, InclusionProbabilityTauOverS) {
  const auto p = partition_uniform(21, 3);
  DistributedSampler sampler(p, 2, 8);
  std::vector<std::size_t> hits(21, 0);
  const std::size_t draws = 70000;
  for (std::uint64_t k = 0; k < draws; ++k) {
    for (auto i : sampler.draw(k).coords) ++hits[i];
  }
  // 6 sigma binomial band around 2/7.
  const double pr = 2.0 / 7.0, sd = std::sqrt(pr * (1 - pr) / draws);
  for (auto h : hits) EXPECT_NEAR(double(h) / draws, pr, 6 * sd);
}

TEST(Draw, EmpiricalMatchesEnumeration) {
  const auto p = partition_uniform(4, 2);
  const auto all = enumerate_all(p, 1);
  ASSERT_EQ(all.size(), 4u);
  std::map<std::vector<Index>, std::size_t> counts;
  DistributedSampler sampler(p, 1, 9);
  const std::size_t draws = 100000;
  for (std::uint64_t k = 0; k < draws; ++k) ++counts[sampler.draw(k).coords];
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& ws : all) EXPECT_NEAR(double(counts[ws.sample.coords]) / draws, ws.probability, 0.01);
}

TEST(Draw, SameSeedSameSequence) {
  const auto p = partition_uniform(30, 3);
  DistributedSampler a(p, 4, 123), b(p, 4, 123), c(p, 4, 124);
  bool differs = false;
  for (std::uint64_t k = 0; k < 50; ++k) {
    EXPECT_EQ(a.draw(k).coords, b.draw(k).coords);
    differs = differs || a.draw(k).coords != c.draw(k).coords;
  }
  EXPECT_TRUE(differs);
  // A node's subset depends only on (seed, node, iteration), not on call order.
  std::vector<Index> x(4), y(4);
  a.draw_node(2, 17, x);
  b.draw_node(0, 3, y);
  b.draw_node(2, 17, y);
  EXPECT_EQ(x, y);
}

TEST(Draw, TauOutOfRange) {
  const auto p = partition_uniform(6, 2);
  EXPECT_THROW(DistributedSampler(p, 0, 1), Error);
  try {
    draw(p, 4, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TauOutOfRange);
  }
}

TEST(Enumerate, Examples) {
  auto a = enumerate_all(partition_uniform(3, 1), 2);
  ASSERT_EQ(a.size(), 3u);
  for (const auto& ws : a) EXPECT_DOUBLE_EQ(ws.probability, 1.0 / 3.0);
  EXPECT_EQ(enumerate_all(partition_uniform(4, 2), 1).size(), 4u);
  EXPECT_EQ(enumerate_all(partition_uniform(6, 2), 2).size(), 9u);
  try {
    enumerate_all(partition_uniform(40, 4), 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooLargeToEnumerate);
  }
}

TEST(Enumerate, ExactMoments) {
  for (std::size_t c = 1; c <= 3; ++c) {
    for (std::size_t s = 1; s <= 4; ++s) {
      for (std::size_t tau = 1; tau <= s; ++tau) {
        const auto p = partition_uniform(c * s, c);
        const auto all = enumerate_all(p, tau);
        const auto masks = oracle::all_samples(c, s, tau);
        ASSERT_EQ(all.size(), masks.size());
        CompensatedSum total, size;
        std::vector<double> incl(c * s, 0.0);
        std::set<std::vector<Index>> seen;
        for (const auto& ws : all) {
          total.add(ws.probability);
          size.add(ws.probability * double(ws.sample.size()));
          for (auto i : ws.sample.coords) incl[i] += ws.probability;
          seen.insert(ws.sample.coords);
        }
        EXPECT_EQ(seen.size(), all.size());
        EXPECT_NEAR(total.value(), 1.0, 1e-12);
        EXPECT_NEAR(size.value(), double(c * tau), 1e-12);
        for (double v : incl) EXPECT_NEAR(v, double(tau) / double(s), 1e-12);
      }
    }
  }
}

TEST(SplitMix, BelowIsInRangeAndUniformIsHalfOpen) {
  SplitMix64 rng(1);
  for (int k = 0; k < 10000; ++k) {
    EXPECT_LT(rng.below(7), 7u);
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}
