#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "relit/dataset.hpp"

using namespace relit;
using relit::test::TempDir;

namespace {

FrameRecord record(const std::string& seq, int t, Split split, std::vector<double> kp) {
  FrameRecord r;
  r.seq_id = seq;
  r.timestamp = t;
  r.split = split;
  r.image_path = seq + "/frame_" + std::to_string(t) + ".png";
  r.light_path = seq + "/light_" + std::to_string(t) + ".png";
  r.pose = {0.1 * t, -0.05, 0.3};
  r.keypoints.coords = std::move(kp);
  return r;
}

}  // namespace

TEST(Split, StringRoundTrip) {
  for (auto s : {Split::Train, Split::Test, Split::Grid}) EXPECT_EQ(parse_split(to_string(s)), s);
  EXPECT_THROW(parse_split("validation"), InvalidArgument);
}

TEST(Manifest, WriteReadRoundTripKeepsFullPrecision) {
  TempDir dir("man");
  DatasetManifest m;
  m.meta = {64, 16, 32, 42};
  m.frames.push_back(record("a", 0, Split::Train, {0.1234567890123, 1.0 / 3.0}));
  m.frames.push_back(record("a", 3, Split::Train, {0.2, 0.7}));
  m.frames.push_back(record("z", 0, Split::Grid, {0.9, 0.1}));
  write_manifest(m, dir / "manifest");
  const auto back = read_manifest(dir / "manifest");
  EXPECT_EQ(back.root, dir.path());
  EXPECT_EQ(back.meta.resolution, 64);
  EXPECT_EQ(back.meta.monitor_height, 16);
  EXPECT_EQ(back.meta.monitor_width, 32);
  EXPECT_EQ(back.meta.seed, 42u);
  ASSERT_EQ(back.frames.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.frames[i].seq_id, m.frames[i].seq_id);
    EXPECT_EQ(back.frames[i].timestamp, m.frames[i].timestamp);
    EXPECT_EQ(back.frames[i].split, m.frames[i].split);
    EXPECT_EQ(back.frames[i].image_path, m.frames[i].image_path);
    EXPECT_EQ(back.frames[i].pose.yaw, m.frames[i].pose.yaw);
    EXPECT_EQ(back.frames[i].keypoints, m.frames[i].keypoints);
  }
  EXPECT_EQ(back.image_file(2), dir.path() / "z/frame_0.png");
  EXPECT_EQ(back.ids_in_split(Split::Train), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(back.ids_in_split(Split::Grid), (std::vector<std::size_t>{2}));
}

TEST(Manifest, ValidateRejectsNonIncreasingTimestamps) {
  DatasetManifest m;
  m.frames.push_back(record("a", 2, Split::Train, {0, 0}));
  m.frames.push_back(record("b", 1, Split::Train, {0, 0}));
  EXPECT_NO_THROW(m.validate());
  m.frames.push_back(record("a", 2, Split::Train, {0, 0}));
  EXPECT_THROW(m.validate(), InvalidArgument);
}

TEST(Manifest, ValidateRejectsMixedKeypointLengths) {
  DatasetManifest m;
  m.frames.push_back(record("a", 0, Split::Train, {0, 0}));
  m.frames.push_back(record("a", 1, Split::Train, {0, 0, 1, 1}));
  EXPECT_THROW(m.validate(), InvalidArgument);
}

TEST(Manifest, MalformedFilesThrow) {
  TempDir dir("man");
  EXPECT_THROW(read_manifest(dir / "none"), IoError);
  {
    std::ofstream os(dir / "m1");
    os << "# relit-manifest v1\nseq 0 train a.png\n";
  }
  EXPECT_THROW(read_manifest(dir / "m1"), IoError);
  {
    std::ofstream os(dir / "m2");
    os << "# relit-manifest v1\nseq 0 train a.png b.png 0 0 0 0.5 x\n";
  }
  EXPECT_THROW(read_manifest(dir / "m2"), IoError);
  {
    std::ofstream os(dir / "m3");
    os << "# relit-manifest v1\nseq 0 holdout a.png b.png 0 0 0 0.5 0.5\n";
  }
  EXPECT_ANY_THROW(read_manifest(dir / "m3"));
}
