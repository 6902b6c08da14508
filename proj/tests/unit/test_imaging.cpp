#include <gtest/gtest.h>
#include <png.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "helpers.hpp"
#include "relit/imaging.hpp"

using namespace relit;
using relit::test::TempDir;

namespace {

void write_gray_png(const std::filesystem::path& file, int w, int h) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = w;
  img.height = h;
  img.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(w * h, 128);
  ASSERT_TRUE(png_image_write_to_file(&img, file.c_str(), 0, buf.data(), 0, nullptr));
}

double mean(const MonitorLight& m) {
  return std::accumulate(m.values().begin(), m.values().end(), 0.0) / m.size();
}

}  // namespace

TEST(Image, ZeroFileLoadsAsZeros) {
  TempDir dir("img");
  save_image(Image(4, 4, 0.0f), dir / "z.png");
  const auto img = load_image(dir / "z.png");
  ASSERT_EQ(img.height(), 4);
  ASSERT_EQ(img.width(), 4);
  for (float v : img.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Image, SaturatedFileLoadsAsOnes) {
  TempDir dir("img");
  save_image(Image(3, 5, 1.0f), dir / "o.png");
  const auto img = load_image(dir / "o.png");
  EXPECT_EQ(img.height(), 3);
  EXPECT_EQ(img.width(), 5);
  for (float v : img.values()) EXPECT_EQ(v, 1.0f);
}

TEST(Image, PayloadBytesMatchValues) {
  TempDir dir("img");
  save_image(Image(2, 2, 1.0f), dir / "o.png");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  ASSERT_TRUE(png_image_begin_read_from_file(&img, (dir / "o.png").c_str()));
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  ASSERT_TRUE(png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr));
  for (auto b : buf) EXPECT_EQ(b, 255);
}

TEST(Image, RandomRoundTripWithinHalfQuantum) {
  TempDir dir("img");
  const auto src = test::random_raster<ImageTag>(17, 23, 5);
  save_image(src, dir / "r.png");
  const auto back = load_image(dir / "r.png");
  ASSERT_TRUE(back.same_shape(src));
  for (std::size_t i = 0; i < src.size(); ++i) {
    // oracle: nearest 8-bit code
    const double expected = std::round(src.values()[i] * 255.0) / 255.0;
    EXPECT_NEAR(back.values()[i], expected, 1e-6);
    EXPECT_LE(std::abs(back.values()[i] - src.values()[i]), 1.0 / 510 + 1e-6);
  }
}

TEST(Image, LoadErrors) {
  TempDir dir("img");
  EXPECT_THROW(load_image(dir / "missing.png"), IoError);
  {
    std::ofstream(dir / "junk.png") << "not a png";
  }
  EXPECT_THROW(load_image(dir / "junk.png"), IoError);
  write_gray_png(dir / "gray.png", 4, 4);
  EXPECT_THROW(load_image(dir / "gray.png"), IoError);
}

TEST(Image, SaveToUnwritablePathThrows) {
  EXPECT_THROW(save_image(Image(2, 2), "/nonexistent_dir_xyz/a.png"), IoError);
}

TEST(Image, RangeCheck) {
  Image img(2, 2, 0.5f);
  EXPECT_NO_THROW(img.check_range());
  img(1, 1, 2) = 1.5f;
  EXPECT_THROW(img.check_range(), InvalidArgument);
  img(1, 1, 2) = std::nanf("");
  EXPECT_THROW(img.check_range(), InvalidArgument);
  EXPECT_THROW(Image(0, 3), InvalidArgument);
}

TEST(Resize, ConstantStaysConstant) {
  const Image c(7, 5, 0.5f);
  for (auto [h, w] : {std::pair{1, 1}, {3, 11}, {14, 10}, {64, 2}}) {
    const auto out = resize_bilinear(c, h, w);
    ASSERT_EQ(out.height(), h);
    ASSERT_EQ(out.width(), w);
    for (float v : out.values()) EXPECT_EQ(v, 0.5f);
  }
}

TEST(Resize, IdentityIsBitExact) {
  const auto src = test::random_raster<ImageTag>(9, 13, 3);
  EXPECT_EQ(resize_bilinear(src, 9, 13), src);
}

TEST(Resize, CheckerboardUpsampleMatchesHandOracle) {
  Image board(2, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c) board(y, x, c) = static_cast<float>((x + y) % 2);
  const auto out = resize_bilinear(board, 4, 4);
  // Align-corners-false taps at -0.25, 0.25, 0.75, 1.25 (edges clamped):
  // interpolating [0,1] gives [0, 0.25, 0.75, 1].
  const double a[4] = {0.0, 0.25, 0.75, 1.0};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double expected = (1 - a[y]) * a[x] + a[y] * (1 - a[x]);
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(out(y, x, c), expected, 1e-7) << y << "," << x;
    }
}

TEST(Resize, StaysInRangeAndRejectsBadSizes) {
  const auto src = test::random_raster<MonitorTag>(16, 32, 9);
  const auto out = resize_bilinear(src, 5, 7);
  EXPECT_NO_THROW(out.check_range());
  EXPECT_THROW(resize_bilinear(src, 0, 4), InvalidArgument);
  EXPECT_THROW(resize_bilinear(src, 4, -1), InvalidArgument);
}

TEST(EnvMap, RequiresTwoToOneAspect) {
  EXPECT_NO_THROW(EnvMap(8, 16));
  EXPECT_THROW(EnvMap(8, 15), InvalidArgument);
}

TEST(EnvMap, FileRoundTrip) {
  TempDir dir("env");
  EnvMap env(4, 8);
  for (std::size_t i = 0; i < env.values().size(); ++i) env.values()[i] = 0.25f * i;
  save_envmap(env, dir / "e.envf");
  const auto back = load_envmap(dir / "e.envf");
  ASSERT_EQ(back.height(), 4);
  ASSERT_EQ(back.width(), 8);
  for (std::size_t i = 0; i < env.values().size(); ++i) EXPECT_EQ(back.values()[i], env.values()[i]);
  std::ofstream(dir / "bad.envf") << "ENVX";
  EXPECT_THROW(load_envmap(dir / "bad.envf"), IoError);
}

TEST(EnvToMonitor, HalfLitFrontHemisphereHasMeanHalf) {
  // Columns left of the forward meridian lit, right dark.
  EnvMap env(16, 32);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) env(y, x, c) = 1.0f;
  const auto m = env_to_monitor(env, 180.0, 16, 32);
  EXPECT_NEAR(mean(m), 0.5, 1e-6);
  EXPECT_NO_THROW(m.check_range());
}

TEST(EnvToMonitor, ConstantMapBothModes) {
  const EnvMap env(8, 16, 0.3f);
  const auto norm = env_to_monitor(env, 180.0, 4, 8);
  for (float v : norm.values()) EXPECT_NEAR(v, 1.0, 1e-6);
  MonitorConversion raw;
  raw.normalize = false;
  const auto clamped = env_to_monitor(env, 180.0, 4, 8, raw);
  for (float v : clamped.values()) EXPECT_NEAR(v, 0.3, 1e-6);
}

TEST(EnvToMonitor, FullSphereIncludesEveryColumn) {
  MonitorConversion raw;
  raw.normalize = false;
  for (int col : {0, 31}) {
    EnvMap env(16, 32);
    for (int y = 0; y < 16; ++y) env(y, col, 0) = 1.0f;
    EXPECT_GT(mean(env_to_monitor(env, 360.0, 8, 16, raw)), 0.0) << col;
    EXPECT_EQ(mean(env_to_monitor(env, 180.0, 8, 16, raw)), 0.0) << col;
  }
}

TEST(EnvToMonitor, SmallerFovSupportIsSubset) {
  MonitorConversion raw;
  raw.normalize = false;
  const double fovs[] = {45, 90, 180, 270, 360};
  for (int col = 0; col < 64; ++col) {
    EnvMap env(32, 64);
    for (int y = 0; y < 32; ++y) env(y, col, 1) = 1.0f;
    bool inside_smaller = false;
    for (double f : fovs) {
      const bool inside = mean(env_to_monitor(env, f, 4, 8, raw)) > 0.0;
      if (inside_smaller) EXPECT_TRUE(inside) << "col " << col << " fov " << f;
      inside_smaller = inside_smaller || inside;
    }
  }
}

TEST(EnvToMonitor, IgnoresPolarRows) {
  MonitorConversion raw;
  raw.normalize = false;
  EnvMap env(16, 32);
  for (int x = 0; x < 32; ++x) env(0, x, 0) = env(15, x, 0) = 1.0f;
  EXPECT_EQ(mean(env_to_monitor(env, 360.0, 8, 16, raw)), 0.0);
}

TEST(EnvToMonitor, ClipsAtPercentile) {
  EnvMap env(16, 32, 0.5f);
  env(8, 16, 0) = 100.0f;  // one HDR outlier
  const auto m = env_to_monitor(env, 180.0, 16, 32);
  EXPECT_NO_THROW(m.check_range());
  EXPECT_GT(mean(m), 0.9);
}

TEST(EnvToMonitor, RejectsBadArguments) {
  const EnvMap env(8, 16, 1.0f);
  EXPECT_THROW(env_to_monitor(env, 0.0, 4, 8), InvalidArgument);
  EXPECT_THROW(env_to_monitor(env, 361.0, 4, 8), InvalidArgument);
  EXPECT_THROW(env_to_monitor(env, 90.0, 0, 8), InvalidArgument);
  EXPECT_THROW(env_to_monitor(EnvMap{}, 90.0, 4, 8), InvalidArgument);
}
