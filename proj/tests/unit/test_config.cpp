#include <gtest/gtest.h>

#include <fstream>

#include "helpers.hpp"
#include "relit/config.hpp"

using namespace relit;
using relit::test::TempDir;

TEST(Config, DefaultsFinalize) {
  GlobalConfig c;
  EXPECT_NO_THROW(c.finalize());
  EXPECT_EQ(c.train.weights.cycle, 0.5);
  EXPECT_EQ(c.train.weights.adversarial, 0.05);
  EXPECT_EQ(c.train.lr_g, 2e-4);
  EXPECT_EQ(c.train.beta1, 0.5);
  EXPECT_EQ(c.smoothing.alpha, 0.7);
  EXPECT_EQ(c.arch.light_embed_dim, 256);
}

TEST(Config, UnknownKeyIsNamed) {
  GlobalConfig c;
  try {
    c.merge_json(R"({"train": {"lamda_l1": 2}})");
    FAIL() << "no throw";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.lamda_l1"), std::string::npos) << e.what();
  }
  try {
    c.apply_override("arch.depth=3");
    FAIL() << "no throw";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("arch.depth"), std::string::npos);
  }
  EXPECT_THROW(c.merge_json(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(c.merge_json(R"({"arch": {"resolution": "big"}})"), ConfigError);
  EXPECT_THROW(c.merge_json("{not json"), ConfigError);
  EXPECT_THROW(c.apply_override("no_equals_sign"), ConfigError);
}

TEST(Config, OverridesAndPropagation) {
  GlobalConfig c;
  c.apply_override("seed=17");
  c.apply_override("arch.widths=[8,16,32]");
  c.apply_override("arch.strides=[1,2,2]");
  c.apply_override("arch.resolution=32");
  c.apply_override("arch.monitor_height=8");
  c.apply_override("arch.monitor_width=16");
  c.apply_override("arch.predictor_grid_height=4");
  c.apply_override("arch.predictor_grid_width=8");
  c.apply_override("train.perceptual=pyramid_l1");
  c.apply_override("smoothing.light_avg=false");
  c.finalize();
  EXPECT_EQ(c.arch.widths, (std::vector<int>{8, 16, 32}));
  EXPECT_EQ(c.train.seed, 17u);
  EXPECT_EQ(c.synth.seed, 17u);
  EXPECT_EQ(c.synth.monitor_height, 8);
  EXPECT_FALSE(c.smoothing.light_avg);
}

TEST(Config, InvalidValuesFailAtFinalize) {
  GlobalConfig c;
  c.apply_override("smoothing.alpha=1.5");
  EXPECT_THROW(c.finalize(), ConfigError);
  GlobalConfig d;
  d.apply_override("train.batch_size=0");
  EXPECT_THROW(d.finalize(), ConfigError);
}

TEST(Config, JsonRoundTripAndFileLoading) {
  TempDir dir("cfg");
  GlobalConfig c;
  c.apply_override("train.steps=77");
  c.apply_override("pairing.tau=0.03");
  {
    std::ofstream(dir / "c.json") << c.to_json();
  }
  const auto back = load_config(dir / "c.json", {"train.batch_size=3"});
  EXPECT_EQ(back.train.steps, 77);
  EXPECT_EQ(back.pairing.tau, 0.03);
  EXPECT_EQ(back.train.batch_size, 3);
  EXPECT_EQ(back.to_json(), [&] {
    auto x = c;
    x.apply_override("train.batch_size=3");
    x.finalize();
    return x.to_json();
  }());
  EXPECT_THROW(load_config(dir / "missing.json", {}), IoError);
  const auto keys = c.keys();
  EXPECT_NE(std::find(keys.begin(), keys.end(), "smoothing.beta"), keys.end());
}
