#include "activebc/dataset.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace activebc;

namespace {

Episode synthetic_episode(std::size_t len, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Episode ep;
  for (std::size_t t = 0; t < len; ++t) {
    Frame f;
    f.pixels[0] = static_cast<std::uint8_t>(t);
    f.pixels[1] = static_cast<std::uint8_t>(seed);
    ep.frames.push_back(f);
    JointConfig q;
    for (std::size_t j = 0; j < kGripper; ++j) q[j] = u(gen);
    q[kGripper] = 0.5 + u(gen);
    ep.joints.push_back(q);
  }
  return ep;
}

struct OracleSample {
  std::vector<Frame> history;
  JointConfig absolute;
  JointDelta delta;
};

// Materializes [f0 x (H-1)] + [f0 .. f_{T-1}] and slices one window per step.
std::vector<OracleSample> oracle_windows(const Episode& ep, std::size_t h) {
  std::vector<Frame> padded(h - 1, ep.frames.front());
  padded.insert(padded.end(), ep.frames.begin(), ep.frames.end());
  std::vector<OracleSample> out;
  for (std::size_t t = 0; t + 1 < ep.frames.size(); ++t) {
    OracleSample s;
    s.history.assign(padded.begin() + static_cast<std::ptrdiff_t>(t),
                     padded.begin() + static_cast<std::ptrdiff_t>(t + h));
    s.absolute = ep.joints[t + 1];
    for (std::size_t j = 0; j < kNumJoints; ++j) s.delta[j] = ep.joints[t + 1][j] - ep.joints[t][j];
    out.push_back(std::move(s));
  }
  return out;
}

TEST(BuildWindows, TwoStepsHistoryThree) {
  const Episode ep = synthetic_episode(2, 1);
  const auto w = build_windows(ep, 3);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].history, (std::vector<std::uint32_t>{0, 0, 0}));
  EXPECT_EQ(w[0].target_delta, difference(ep.joints[1], ep.joints[0]));
}

TEST(BuildWindows, FiveStepsHistoryTwo) {
  const Episode ep = synthetic_episode(5, 2);
  const auto w = build_windows(ep, 2);
  ASSERT_EQ(w.size(), 4u);
  EXPECT_EQ(w[2].history, (std::vector<std::uint32_t>{1, 2}));
  EXPECT_EQ(w[2].target_absolute, ep.joints[3]);
  EXPECT_EQ(w[2].base_joints, ep.joints[2]);
}

TEST(BuildWindows, MatchesMaterializedOracleExhaustively) {
  for (std::size_t len = 2; len <= 12; ++len)
    for (std::size_t h = 1; h <= 5; ++h) {
      const Episode ep = synthetic_episode(len, len * 10 + h);
      const auto got = build_windows(ep, static_cast<int>(h), 7);
      const auto want = oracle_windows(ep, h);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        ASSERT_EQ(got[i].episode, 7u);
        ASSERT_EQ(got[i].t, i);
        ASSERT_EQ(got[i].history.size(), h);
        for (std::size_t k = 0; k < h; ++k)
          ASSERT_EQ(ep.frames[got[i].history[k]], want[i].history[k]) << len << " " << h;
        ASSERT_EQ(got[i].target_absolute, want[i].absolute);
        ASSERT_EQ(got[i].target_delta, want[i].delta);
      }
    }
}

TEST(BuildWindows, RejectsBadInput) {
  EXPECT_THROW(build_windows(synthetic_episode(5, 1), 0), std::invalid_argument);
  EXPECT_THROW(build_windows(synthetic_episode(1, 1), 2), std::invalid_argument);
}

std::vector<Side> balanced_sides(std::size_t n) {
  std::vector<Side> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(i % 2 ? Side::right : Side::left);
  return s;
}

std::size_t count_side(const SplitSpec& s, const std::vector<std::size_t>& ids, Side side) {
  return static_cast<std::size_t>(
      std::count_if(ids.begin(), ids.end(), [&](auto id) { return s.pool_sides[id] == side; }));
}

TEST(Splits, EightyEpisodePool) {
  const auto sides = balanced_sides(80);
  const SplitSpec s = make_splits(std::span<const Side>(sides), 1);
  EXPECT_EQ(s.train_pool_ids.size(), 64u);
  EXPECT_EQ(s.val_ids.size(), 8u);
  EXPECT_EQ(s.test_ids.size(), 8u);
  EXPECT_EQ(count_side(s, s.val_ids, Side::left), 4u);
  EXPECT_EQ(count_side(s, s.test_ids, Side::left), 4u);
  EXPECT_EQ(count_side(s, s.train_pool_ids, Side::left), 32u);
  std::set<std::size_t> all;
  for (const auto* v : {&s.train_pool_ids, &s.val_ids, &s.test_ids}) all.insert(v->begin(), v->end());
  EXPECT_EQ(all.size(), 80u);
}

TEST(Splits, DeterministicAndSeedDependent) {
  const auto sides = balanced_sides(80);
  EXPECT_EQ(make_splits(std::span<const Side>(sides), 1), make_splits(std::span<const Side>(sides), 1));
  EXPECT_NE(make_splits(std::span<const Side>(sides), 1).test_ids,
            make_splits(std::span<const Side>(sides), 2).test_ids);
}

TEST(Splits, Preconditions) {
  const std::vector<Side> all_left(10, Side::left);
  EXPECT_THROW(make_splits(std::span<const Side>(all_left), 1), std::invalid_argument);
  const auto odd = balanced_sides(30);
  EXPECT_THROW(make_splits(std::span<const Side>(odd), 1), std::invalid_argument);
}

TEST(Splits, TextRoundTrip) {
  const auto sides = balanced_sides(40);
  const SplitSpec s = subsample_train(make_splits(std::span<const Side>(sides), 3), 8, 3);
  EXPECT_EQ(decode_splits(encode_splits(s)), s);
  EXPECT_THROW(decode_splits("train: 1 2\n"), FormatError);
  EXPECT_THROW(decode_splits("sides: L R\nbogus: 1\n"), FormatError);
}

TEST(Subsample, TwoFromSixtyFourIsBalanced) {
  const auto sides = balanced_sides(80);
  const SplitSpec base = make_splits(std::span<const Side>(sides), 1);
  const SplitSpec s = subsample_train(base, 2, 1);
  ASSERT_EQ(s.train_ids.size(), 2u);
  EXPECT_EQ(count_side(s, s.train_ids, Side::left), 1u);
  EXPECT_EQ(s.demo_count, 2u);
  EXPECT_EQ(s.test_ids, base.test_ids);
}

TEST(Subsample, Nested) {
  const auto sides = balanced_sides(80);
  const SplitSpec base = make_splits(std::span<const Side>(sides), 1);
  std::vector<std::size_t> prev;
  for (std::size_t n : {2, 4, 8, 16, 32, 64}) {
    auto ids = subsample_train(base, n, 1).train_ids;
    std::sort(ids.begin(), ids.end());
    EXPECT_TRUE(std::includes(ids.begin(), ids.end(), prev.begin(), prev.end())) << n;
    prev = ids;
  }
}

TEST(Subsample, Preconditions) {
  const auto sides = balanced_sides(80);
  const SplitSpec base = make_splits(std::span<const Side>(sides), 1);
  EXPECT_THROW(subsample_train(base, 128, 1), std::invalid_argument);
  EXPECT_THROW(subsample_train(base, 3, 1), std::invalid_argument);
  EXPECT_THROW(subsample_train(base, 0, 1), std::invalid_argument);
}

TEST(Representation, Names) {
  EXPECT_EQ(representation_from_string("delta"), Representation::delta);
  EXPECT_EQ(representation_from_string("absolute"), Representation::absolute);
  EXPECT_EQ(representation_from_string("position"), Representation::absolute);
  EXPECT_THROW(representation_from_string("velocity"), std::invalid_argument);
}

}  // namespace
