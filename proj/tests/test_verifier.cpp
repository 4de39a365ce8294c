#include <gtest/gtest.h>

#include "flawmap/verifier.hpp"
#include "test_util.hpp"

using namespace flawmap;

TEST(Verifier, UniformWeightsPickHighestMean) {
  const std::vector<ScoreVector> c{{0.5, 0.5, 0.5, 0.5}, {0.9, 0.8, 0.7, 0.6}, {0.1, 0.1, 0.1, 0.1}};
  EXPECT_EQ(select_best(c), 1u);
  EXPECT_EQ(rank_candidates(c), (std::vector<std::size_t>{1, 0, 2}));
}

TEST(Verifier, TieBreaks) {
  // Equal aggregates: higher overall wins, then the lower index.
  const std::vector<ScoreVector> c{{0.5, 0.5, 0.5, 0.5}, {0.6, 0.5, 0.4, 0.5}, {0.4, 0.5, 0.5, 0.6}};
  EXPECT_EQ(select_best(c), 2u);
  EXPECT_EQ(rank_candidates(c), (std::vector<std::size_t>{2, 0, 1}));
}

TEST(Verifier, Weights) {
  const std::vector<ScoreVector> c{{1, 0, 0, 0}, {0, 0, 0, 1}};
  EXPECT_EQ(select_best(c, SelectionPolicy({1, 0, 0, 0})), 0u);
  EXPECT_EQ(select_best(c, SelectionPolicy::normalized({0, 0, 0, 5})), 1u);
  EXPECT_THROW(SelectionPolicy({0.5, 0.5, 0.5, 0.5}), ValidationError);
  EXPECT_THROW(SelectionPolicy({-0.5, 0.5, 0.5, 0.5}), ValidationError);
  EXPECT_THROW(SelectionPolicy::normalized({0, 0, 0, 0}), ValidationError);
  EXPECT_THROW(select_best({}), ValidationError);
}

TEST(Verifier, RankingAgreesWithSelectionAndIsPermutationStable) {
  testutil::Rng rng(21);
  for (int n = 0; n < 300; ++n) {
    std::vector<ScoreVector> c(1 + rng.index(10));
    for (auto& s : c) {
      s = {rng.index(5) / 4.0, rng.index(5) / 4.0, rng.index(5) / 4.0, rng.index(5) / 4.0};
    }
    const auto ranking = rank_candidates(c);
    ASSERT_EQ(ranking.front(), select_best(c));
    // Moving the winner to the front keeps it the winner.
    auto moved = c;
    std::swap(moved[0], moved[ranking.front()]);
    const auto& w = c[ranking.front()];
    EXPECT_EQ(moved[select_best(moved)], w);
  }
}
