#include <gtest/gtest.h>
#include <torch/torch.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "relit/training.hpp"

using namespace relit;
using relit::test::TempDir;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.resolution = 8;
  a.widths = {4, 6, 8};
  a.strides = {1, 2, 2};
  a.light_embed_dim = 5;
  a.light_hidden_dim = 7;
  a.monitor_height = 4;
  a.monitor_width = 8;
  a.predictor_first_level = 2;
  a.predictor_grid_height = 2;
  a.predictor_grid_width = 4;
  a.predictor_channels = 3;
  a.disc_layers = 3;
  a.disc_width = 4;
  return a;
}

Batch random_batch(std::uint64_t seed, int b = 2, torch::Dtype dtype = torch::kFloat32) {
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(seed);
  const auto opts = torch::TensorOptions().dtype(dtype);
  return {torch::rand({b, 3, 8, 8}, gen, opts), torch::rand({b, 3, 4, 8}, gen, opts),
          torch::rand({b, 3, 8, 8}, gen, opts), torch::rand({b, 3, 4, 8}, gen, opts)};
}

/// Elementwise 5x5 binomial blur with clamped indices, then even samples.
torch::Tensor reference_blur_downsample(const torch::Tensor& x) {
  const double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  const auto a = x.to(torch::kFloat64).contiguous();
  const int64_t n = a.size(0), c = a.size(1), h = a.size(2), w = a.size(3);
  const int64_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  auto out = torch::zeros({n, c, oh, ow}, torch::kFloat64);
  auto A = a.accessor<double, 4>();
  auto O = out.accessor<double, 4>();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t xx = 0; xx < ow; ++xx) {
          double acc = 0;
          for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx) {
              const int64_t sy = std::clamp<int64_t>(2 * y + dy, 0, h - 1);
              const int64_t sx = std::clamp<int64_t>(2 * xx + dx, 0, w - 1);
              acc += k[dy + 2] * k[dx + 2] * A[b][ch][sy][sx];
            }
          O[b][ch][y][xx] = acc;
        }
  return out;
}

std::string without_wall(const StepRecord& r) {
  auto copy = r;
  copy.wall_seconds = 0;
  return copy.to_json();
}

}  // namespace

TEST(Perceptual, BlurMatchesElementwiseOracle) {
  const auto x = torch::rand({2, 3, 9, 12}, torch::kFloat64);
  EXPECT_LT((blur_downsample(x) - reference_blur_downsample(x)).abs().max().item<double>(), 1e-12);
}

TEST(Perceptual, PyramidMatchesOracleAndIsAMetricLikeDistance) {
  const auto a = torch::rand({2, 3, 16, 16}, torch::kFloat64), b = torch::rand({2, 3, 16, 16}, torch::kFloat64);
  double expected = 0;
  auto x = a, y = b;
  for (int l = 0; l < 4; ++l) {
    expected += (x - y).abs().mean().item<double>() / 4;
    x = reference_blur_downsample(x);
    y = reference_blur_downsample(y);
  }
  EXPECT_NEAR(pyramid_l1(a, b).item<double>(), expected, 1e-12);
  EXPECT_EQ(pyramid_l1(a, a).item<double>(), 0.0);
  EXPECT_NEAR(pyramid_l1(a, b).item<double>(), pyramid_l1(b, a).item<double>(), 1e-15);
  // constant offsets survive every blur level unchanged
  EXPECT_NEAR(pyramid_l1(a, a + 0.125).item<double>(), 0.125, 1e-12);
  auto metric = make_perceptual_metric("pyramid_l1");
  EXPECT_EQ(metric->name(), "pyramid_l1");
  EXPECT_NEAR(metric->distance(a, b).item<double>(), expected, 1e-12);
  EXPECT_THROW(make_perceptual_metric("vgg"), ConfigError);
  EXPECT_ANY_THROW(make_perceptual_metric("torchscript:/nonexistent/model.pt"));
}

TEST(Losses, DiscriminatorLossOracle) {
  const auto real = torch::zeros({1, 1}), fake = torch::ones({1, 1});
  const Critic perfect = [](const torch::Tensor& x) { return x.sum().eq(0).to(torch::kFloat32).view({1}); };
  EXPECT_EQ(discriminator_loss(perfect, real, fake).item<float>(), 0.0f);
  const Critic constant = [](const torch::Tensor& x) { return torch::full({1, 4}, 0.25, x.options()); };
  // (0.25 - 1)^2 + 0.25^2
  EXPECT_NEAR(discriminator_loss(constant, real, fake).item<float>(), 0.625, 1e-7);
  EXPECT_THROW(discriminator_loss(constant, real, torch::ones({2, 2})), InvalidArgument);
}

TEST(Losses, GeneratorTermsMatchDirectFormulas) {
  const auto batch = random_batch(1, 2, torch::kFloat64);
  GeneratorOutputs out;
  out.relit = torch::rand({2, 3, 8, 8}, torch::kFloat64);
  out.cycle_image = torch::rand({2, 3, 8, 8}, torch::kFloat64);
  const Critic critic = [](const torch::Tensor& x) { return x.mean({1, 2, 3}); };
  LossWeights w{0.3, 0.7, 1.1, 0.2, 2.0};
  auto metric = make_perceptual_metric("pyramid_l1");
  const auto t = generator_loss(batch, out, critic, w, *metric);
  const double l1 = (batch.trg_image - out.relit).abs().mean().item<double>();
  const double p = pyramid_l1(batch.trg_image, out.relit).item<double>();
  const double c = (batch.src_image - out.cycle_image).abs().mean().item<double>();
  const double adv = (out.relit.mean({1, 2, 3}) - 1).pow(2).mean().item<double>();
  EXPECT_NEAR(t.l1.item<double>(), l1, 1e-12);
  EXPECT_NEAR(t.perceptual.item<double>(), p, 1e-12);
  EXPECT_NEAR(t.cycle.item<double>(), c, 1e-12);
  EXPECT_NEAR(t.adversarial.item<double>(), adv, 1e-12);
  EXPECT_NEAR(t.total.item<double>(), 0.3 * l1 + 0.7 * p + 1.1 * c + 0.2 * adv, 1e-12);
}

TEST(Losses, PerfectPredictionsReachTheOptimum) {
  const auto batch = random_batch(2, 2, torch::kFloat64);
  GeneratorOutputs out{batch.trg_image, batch.src_light, batch.src_image, batch.trg_light};
  const Critic fooled = [](const torch::Tensor& x) { return torch::ones({x.size(0), 1, 1, 1}, x.options()); };
  auto metric = make_perceptual_metric("pyramid_l1");
  EXPECT_EQ(generator_loss(batch, out, fooled, {}, *metric).total.item<double>(), 0.0);
  EXPECT_EQ(monitor_loss(batch.src_light, out.src_light_hat, batch.trg_light, out.cycle_light, {}, *metric)
                .total.item<double>(),
            0.0);
}

TEST(Losses, MonitorTermsAndLinearityInWeights) {
  const auto batch = random_batch(3, 2, torch::kFloat64);
  const auto hat = torch::rand({2, 3, 4, 8}, torch::kFloat64), cyc = torch::rand({2, 3, 4, 8}, torch::kFloat64);
  auto metric = make_perceptual_metric("pyramid_l1");
  LossWeights w;
  const auto t = monitor_loss(batch.src_light, hat, batch.trg_light, cyc, w, *metric);
  EXPECT_NEAR(t.l1.item<double>(), (batch.src_light - hat).abs().mean().item<double>(), 1e-12);
  EXPECT_NEAR(t.cycle.item<double>(), (batch.trg_light - cyc).abs().mean().item<double>(), 1e-12);
  LossWeights w2 = w;
  w2.l1 *= 3;
  w2.perceptual *= 3;
  w2.cycle *= 3;
  const auto t2 = monitor_loss(batch.src_light, hat, batch.trg_light, cyc, w2, *metric);
  EXPECT_NEAR(t2.total.item<double>(), 3 * t.total.item<double>(), 1e-12);
  EXPECT_THROW(monitor_loss(batch.src_light, batch.src_image, batch.trg_light, cyc, w, *metric), InvalidArgument);
}

TEST(Losses, WeightValidation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.cycle = -0.1;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(Losses, GeneratorForwardRunsTheCyclePass) {
  auto g = init_generator(tiny_arch(), 4);
  const auto batch = random_batch(4);
  const auto out = generator_forward(g, batch);
  const auto first = g->relight(batch.src_image, batch.src_light, batch.trg_light);
  EXPECT_TRUE(torch::allclose(out.relit, first.image));
  EXPECT_TRUE(torch::allclose(out.src_light_hat, first.predicted_light));
  const auto back = g->relight(out.relit, batch.trg_light, batch.src_light);
  EXPECT_TRUE(torch::allclose(out.cycle_image, back.image));
  EXPECT_TRUE(torch::allclose(out.cycle_light, back.predicted_light));
}

TEST(GradientCheck, JointObjectiveMatchesCentralDifferences) {
  auto arch = tiny_arch();
  auto g = init_generator(arch, 9, torch::kFloat64);
  auto d = init_discriminator(arch, 9, torch::kFloat64);
  {
    torch::NoGradGuard ng;
    for (int l = 0; l < arch.levels(); ++l) g->delight_head(l)->weight.normal_(0.0, 0.2);
    for (int l = 0; l + 1 < arch.levels(); ++l) g->relight_head(l)->weight.normal_(0.0, 0.2);
  }
  const auto batch = random_batch(9, 2, torch::kFloat64);
  auto metric = make_perceptual_metric("pyramid_l1");
  auto params = g->parameters();
  for (auto& p : d->parameters()) params.push_back(p);
  for (auto& p : params) p.mutable_grad() = torch::Tensor();
  total_objective(g, d, batch, {}, *metric).backward();

  std::mt19937_64 rng(5);
  int checked = 0, good = 0;
  torch::NoGradGuard ng;
  for (auto& p : params) {
    auto flat = p.view(-1);
    for (int k = 0; k < 2; ++k) {
      const int64_t i = static_cast<int64_t>(rng() % flat.numel());
      const double orig = flat[i].item<double>(), h = 1e-6;
      flat[i] = orig + h;
      const double up = total_objective(g, d, batch, {}, *metric).item<double>();
      flat[i] = orig - h;
      const double down = total_objective(g, d, batch, {}, *metric).item<double>();
      flat[i] = orig;
      const double fd = (up - down) / (2 * h), an = p.grad().view(-1)[i].item<double>();
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-7});
      ++checked;
      good += rel < 1e-3;
    }
  }
  EXPECT_GE(good, checked * 95 / 100) << good << "/" << checked;
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr_g = 0.0;
  c.steps = 0;
  EXPECT_NO_THROW(c.validate());
  c.lr_d = -1e-4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Trainer, ZeroLearningRateLeavesWeightsUntouched) {
  TrainConfig cfg;
  cfg.lr_g = cfg.lr_d = 0.0;
  Trainer t(tiny_arch(), cfg);
  std::vector<torch::Tensor> before;
  for (auto& p : t.generator()->parameters()) before.push_back(p.detach().clone());
  for (auto& p : t.discriminator()->parameters()) before.push_back(p.detach().clone());
  const auto r = t.step(random_batch(6));
  EXPECT_EQ(r.step, 1);
  EXPECT_EQ(t.steps_done(), 1);
  std::size_t i = 0;
  for (auto& p : t.generator()->parameters()) EXPECT_TRUE(torch::equal(p, before[i++]));
  for (auto& p : t.discriminator()->parameters()) EXPECT_TRUE(torch::equal(p, before[i++]));
}

TEST(Trainer, StepsAreDeterministicAndReduceTheLoss) {
  TrainConfig cfg;
  cfg.lr_g = cfg.lr_d = 2e-3;
  Trainer a(tiny_arch(), cfg), b(tiny_arch(), cfg);
  const auto batch = random_batch(7, 4);
  std::vector<double> l1;
  for (int s = 0; s < 10; ++s) {
    const auto ra = a.step(batch), rb = b.step(batch);
    EXPECT_EQ(without_wall(ra), without_wall(rb));
    EXPECT_NEAR(ra.objective, ra.g_total + cfg.weights.monitor * ra.m_total, 1e-6);
    l1.push_back(ra.g_l1);
  }
  EXPECT_LT(l1.back(), l1.front());
}

TEST(Trainer, SaveLoadResumesBitExactly) {
  TempDir dir("trainer");
  TrainConfig cfg;
  cfg.lr_g = cfg.lr_d = 1e-3;
  Trainer straight(tiny_arch(), cfg), first(tiny_arch(), cfg);
  std::vector<Batch> batches;
  for (int s = 0; s < 6; ++s) batches.push_back(random_batch(20 + s));
  std::vector<std::string> want;
  for (const auto& b : batches) want.push_back(without_wall(straight.step(b)));
  for (int s = 0; s < 3; ++s) first.step(batches[s]);
  first.save(dir / "mid.ckpt");

  TrainConfig other = cfg;
  other.seed = 99;
  Trainer resumed(tiny_arch(), other);
  resumed.load(dir / "mid.ckpt");
  EXPECT_EQ(resumed.steps_done(), 3);
  for (int s = 3; s < 6; ++s) EXPECT_EQ(without_wall(resumed.step(batches[s])), want[s]) << s;

  auto wider = tiny_arch();
  wider.widths = {4, 6, 9};
  Trainer mismatched(wider, cfg);
  EXPECT_THROW(mismatched.load(dir / "mid.ckpt"), ConfigError);
  const auto g = load_generator(dir / "mid.ckpt");
  EXPECT_EQ(g->config(), tiny_arch());
}

TEST(Trainer, NonFiniteInputThrows) {
  Trainer t(tiny_arch(), TrainConfig{});
  auto batch = random_batch(8);
  batch.trg_image[0][0][0][0] = std::nanf("");
  EXPECT_THROW(t.step(batch), Error);
}

TEST(BatchForStep, EpochsArePermutationsAndDeterministic) {
  PairIndex idx;
  for (std::size_t i = 0; i < 10; ++i) idx.pairs.push_back({i, i + 1, 0.0});
  std::vector<FramePair> epoch;
  for (int s = 0; s < 5; ++s) {
    const auto b = batch_for_step(idx, 2, 3, s);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b, batch_for_step(idx, 2, 3, s));
    epoch.insert(epoch.end(), b.begin(), b.end());
  }
  auto sorted = epoch;
  std::sort(sorted.begin(), sorted.end(), [](const FramePair& a, const FramePair& b) { return a.src < b.src; });
  EXPECT_EQ(sorted, idx.pairs);
  EXPECT_NE(epoch, idx.pairs);
  std::vector<FramePair> other;
  for (int s = 0; s < 5; ++s) {
    const auto b = batch_for_step(idx, 2, 4, s);
    other.insert(other.end(), b.begin(), b.end());
  }
  EXPECT_NE(other, epoch);
  // the next epoch is a fresh permutation
  EXPECT_NE(batch_for_step(idx, 10, 3, 1), epoch);
  EXPECT_THROW(batch_for_step(PairIndex{}, 2, 3, 0), InvalidArgument);
}
