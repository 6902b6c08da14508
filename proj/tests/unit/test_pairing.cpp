#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "relit/pairing.hpp"

using namespace relit;
using relit::test::TempDir;

namespace {

KeypointVector random_kp(std::mt19937_64& rng, int k, double spread = 1.0) {
  std::uniform_real_distribution<double> u(0.0, spread);
  KeypointVector v;
  for (int i = 0; i < 2 * k; ++i) v.coords.push_back(u(rng));
  return v;
}

/// Frames in a few sequences, poses clustered so some pairs fall under tau.
std::vector<PairingFrame> random_frames(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::vector<KeypointVector> centers;
  for (int i = 0; i < 4; ++i) centers.push_back(random_kp(rng, 5));
  std::normal_distribution<double> jitter(0.0, 0.01);
  std::vector<PairingFrame> frames;
  for (int i = 0; i < n; ++i) {
    PairingFrame f;
    f.seq_id = "s" + std::to_string(i % 3);
    f.split = i % 5 == 0 ? Split::Test : Split::Train;
    f.keypoints = centers[rng() % centers.size()];
    for (auto& c : f.keypoints.coords) c += jitter(rng);
    f.light = test::random_raster<MonitorTag>(2, 4, rng());
    if (i % 4 == 0) f.light = MonitorLight(2, 4, 0.5f);
    frames.push_back(std::move(f));
  }
  return frames;
}

/// Quadratic reference: filter every ordered pair, then rank per source.
std::vector<FramePair> brute_force(const std::vector<PairingFrame>& frames, const PairParams& p) {
  std::vector<FramePair> out;
  for (std::size_t a = 0; a < frames.size(); ++a) {
    std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
    for (std::size_t b = 0; b < frames.size(); ++b) {
      if (a == b || frames[a].split != frames[b].split) continue;
      if (!p.cross_sequence && frames[a].seq_id != frames[b].seq_id) continue;
      double acc = 0;
      const auto& x = frames[a].keypoints.coords;
      const auto& y = frames[b].keypoints.coords;
      for (std::size_t i = 0; i < x.size(); i += 2) acc += std::pow(x[i] - y[i], 2) + std::pow(x[i + 1] - y[i + 1], 2);
      const double d = std::sqrt(acc / (x.size() / 2));
      double lacc = 0;
      for (std::size_t i = 0; i < frames[a].light.size(); ++i)
        lacc += std::pow(frames[a].light.values()[i] - frames[b].light.values()[i], 2);
      const double lr = std::sqrt(lacc / frames[a].light.size());
      if (d <= p.tau && lr >= p.lambda_min) cand.emplace_back(d, a > b ? a - b : b - a, b);
    }
    std::sort(cand.begin(), cand.end());
    for (std::size_t k = 0; k < cand.size() && k < std::size_t(p.max_pairs_per_frame); ++k)
      out.push_back({a, std::get<2>(cand[k]), std::get<0>(cand[k])});
  }
  return out;
}

}  // namespace

TEST(KeypointDistance, Basics) {
  const KeypointVector a{{0.1, 0.2, 0.3, 0.4}};
  EXPECT_EQ(keypoint_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(keypoint_distance(KeypointVector{{0, 0}}, KeypointVector{{3, 4}}), 5.0);
  EXPECT_THROW(keypoint_distance(a, KeypointVector{{0, 0}}), InvalidArgument);
}

TEST(KeypointDistance, MatchesDirectSummationAndIsSymmetric) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_kp(rng, 14), b = random_kp(rng, 14);
    double acc = 0;
    for (int k = 0; k < 14; ++k) acc += std::hypot(a.coords[2 * k] - b.coords[2 * k], a.coords[2 * k + 1] - b.coords[2 * k + 1]) *
                                        std::hypot(a.coords[2 * k] - b.coords[2 * k], a.coords[2 * k + 1] - b.coords[2 * k + 1]);
    EXPECT_NEAR(keypoint_distance(a, b), std::sqrt(acc / 14), 1e-12);
    EXPECT_EQ(keypoint_distance(a, b), keypoint_distance(b, a));
    EXPECT_GT(keypoint_distance(a, b), 0.0);
  }
}

TEST(BuildPairs, SingleLightSequenceYieldsNothing) {
  std::vector<PairingFrame> frames(6);
  for (auto& f : frames) {
    f.seq_id = "s";
    f.keypoints = KeypointVector{{0.5, 0.5}};
    f.light = MonitorLight(2, 4, 0.3f);
  }
  EXPECT_TRUE(build_pairs(frames, PairParams{}).pairs.empty());
}

TEST(BuildPairs, MatchesBruteForceOracle) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto frames = random_frames(seed, 60);
    for (bool cross : {false, true}) {
      PairParams p;
      p.tau = 0.02;
      p.lambda_min = 0.05;
      p.max_pairs_per_frame = 3;
      p.cross_sequence = cross;
      const auto got = build_pairs(frames, p).pairs;
      const auto want = brute_force(frames, p);
      ASSERT_EQ(got.size(), want.size()) << "seed " << seed << " cross " << cross;
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].src, want[i].src);
        EXPECT_EQ(got[i].trg, want[i].trg);
        EXPECT_NEAR(got[i].distance, want[i].distance, 1e-12);
      }
      EXPECT_FALSE(got.empty());
    }
  }
}

TEST(BuildPairs, EveryPairSatisfiesThresholds) {
  const auto frames = random_frames(8, 80);
  PairParams p;
  const auto index = build_pairs(frames, p);
  for (const auto& pr : index.pairs) {
    EXPECT_NE(pr.src, pr.trg);
    EXPECT_LE(keypoint_distance(frames[pr.src].keypoints, frames[pr.trg].keypoints), p.tau);
    EXPECT_GE(light_rmse(frames[pr.src].light, frames[pr.trg].light), p.lambda_min);
    EXPECT_EQ(frames[pr.src].seq_id, frames[pr.trg].seq_id);
    EXPECT_EQ(frames[pr.src].split, frames[pr.trg].split);
  }
}

TEST(BuildPairs, ShrinkingTauGivesSubset) {
  const auto frames = random_frames(9, 60);
  PairParams big;
  big.tau = 0.05;
  big.max_pairs_per_frame = 1000;
  PairParams small = big;
  small.tau = 0.015;
  const auto a = build_pairs(frames, big).pairs;
  const auto b = build_pairs(frames, small).pairs;
  EXPECT_LT(b.size(), a.size());
  for (const auto& p : b) EXPECT_NE(std::find(a.begin(), a.end(), p), a.end());
}

TEST(BuildPairs, DeterministicAndEmitsBothDirections) {
  const auto frames = random_frames(10, 50);
  PairParams p;
  p.max_pairs_per_frame = 1000;
  const auto a = build_pairs(frames, p).pairs;
  EXPECT_EQ(a, build_pairs(frames, p).pairs);
  for (const auto& pr : a) {
    const auto rev = std::find_if(a.begin(), a.end(), [&](const FramePair& q) { return q.src == pr.trg && q.trg == pr.src; });
    EXPECT_NE(rev, a.end());
  }
}

TEST(BuildPairs, TiesPreferSmallerGapThenLowerId) {
  std::vector<PairingFrame> frames(5);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    frames[i].seq_id = "s";
    frames[i].keypoints = KeypointVector{{0.5, 0.5}};
    frames[i].light = MonitorLight(1, 1, 0.2f * i);
  }
  PairParams p;
  p.max_pairs_per_frame = 4;
  const auto pairs = build_pairs(frames, p).pairs;
  std::vector<std::size_t> from2;
  for (const auto& pr : pairs)
    if (pr.src == 2) from2.push_back(pr.trg);
  EXPECT_EQ(from2, (std::vector<std::size_t>{1, 3, 0, 4}));
}

TEST(BuildPairs, Errors) {
  EXPECT_THROW(build_pairs(std::vector<PairingFrame>{}, PairParams{}), InvalidArgument);
  std::vector<PairingFrame> one(1);
  one[0].keypoints = KeypointVector{{0, 0}};
  one[0].light = MonitorLight(1, 1);
  PairParams bad;
  bad.tau = 0.0;
  EXPECT_THROW(build_pairs(one, bad), InvalidArgument);
}

TEST(PairIndexFile, RoundTrip) {
  TempDir dir("pairs");
  const auto frames = random_frames(11, 40);
  PairParams p;
  p.tau = 0.03;
  p.max_pairs_per_frame = 5;
  p.cross_sequence = true;
  const auto index = build_pairs(frames, p);
  write_pairs(index, dir / "pairs.txt");
  const auto back = read_pairs(dir / "pairs.txt");
  EXPECT_EQ(back.pairs, index.pairs);
  EXPECT_EQ(back.params.tau, p.tau);
  EXPECT_EQ(back.params.lambda_min, p.lambda_min);
  EXPECT_EQ(back.params.max_pairs_per_frame, 5);
  EXPECT_TRUE(back.params.cross_sequence);
  EXPECT_THROW(read_pairs(dir / "missing.txt"), IoError);
}

TEST(UnorderedPairs, Collapses) {
  PairIndex idx;
  idx.pairs = {{0, 1, 0.0}, {1, 0, 0.0}, {2, 0, 0.1}, {0, 2, 0.1}, {3, 1, 0.0}};
  const auto u = unordered_pairs(idx);
  EXPECT_EQ(u, (std::vector<FramePair>{{0, 1, 0.0}, {0, 2, 0.1}, {1, 3, 0.0}}));
}
