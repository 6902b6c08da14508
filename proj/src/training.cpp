#include "relit/training.hpp"

#include <torch/script.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <regex>

#include <json.hpp>

#include "relit/error.hpp"

namespace relit {

namespace F = torch::nn::functional;

// ---------------------------------------------------------------------------
// Perceptual distance
// ---------------------------------------------------------------------------

torch::Tensor blur_downsample(const torch::Tensor& x) {
  if (x.dim() != 4) throw InvalidArgument("blur_downsample expects [B,C,H,W]");
  const auto channels = x.size(1);
  auto taps = torch::tensor({1.0, 4.0, 6.0, 4.0, 1.0}, x.options()) / 16.0;
  auto kernel = torch::outer(taps, taps).expand({channels, 1, 5, 5}).contiguous();
  auto padded = F::pad(x, F::PadFuncOptions({2, 2, 2, 2}).mode(torch::kReplicate));
  return F::conv2d(padded, kernel, F::Conv2dFuncOptions().stride(2).groups(channels));
}

torch::Tensor pyramid_l1(const torch::Tensor& a, const torch::Tensor& b, int levels) {
  if (levels < 1) throw InvalidArgument("pyramid_l1 needs at least one level");
  if (a.sizes() != b.sizes()) throw InvalidArgument("perceptual distance: inputs differ in shape");
  torch::Tensor x = a, y = b;
  auto acc = (x - y).abs().mean();
  for (int l = 1; l < levels; ++l) {
    x = blur_downsample(x);
    y = blur_downsample(y);
    acc = acc + (x - y).abs().mean();
  }
  return acc / levels;
}

namespace {

class PyramidL1 final : public PerceptualMetric {
 public:
  std::string name() const override { return "pyramid_l1"; }
  torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b) override { return pyramid_l1(a, b); }
};

class ScriptedMetric final : public PerceptualMetric {
 public:
  explicit ScriptedMetric(const std::string& path) : path_(path) {
    try {
      module_ = torch::jit::load(path);
    } catch (const c10::Error& e) {
      throw ConfigError("cannot load perceptual metric '" + path + "': " + e.what_without_backtrace());
    }
    module_.eval();
  }
  std::string name() const override { return "torchscript:" + path_; }
  torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b) override {
    if (a.sizes() != b.sizes()) throw InvalidArgument("perceptual distance: inputs differ in shape");
    return module_.forward({a, b}).toTensor().mean();
  }

 private:
  std::string path_;
  torch::jit::script::Module module_;
};

}  // namespace

std::shared_ptr<PerceptualMetric> make_perceptual_metric(const std::string& id) {
  if (id == "pyramid_l1") return std::make_shared<PyramidL1>();
  const std::string prefix = "torchscript:";
  if (id.rfind(prefix, 0) == 0) return std::make_shared<ScriptedMetric>(id.substr(prefix.size()));
  throw ConfigError("unknown perceptual metric '" + id + "'");
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

void LossWeights::validate() const {
  for (double v : {l1, perceptual, cycle, adversarial, monitor})
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("loss weights must be finite and >= 0");
}

GeneratorOutputs generator_forward(Generator& g, const Batch& batch) {
  auto fwd = g->relight(batch.src_image, batch.src_light, batch.trg_light);
  auto cyc = g->relight(fwd.image, batch.trg_light, batch.src_light);
  return {fwd.image, fwd.predicted_light, cyc.image, cyc.predicted_light};
}

namespace {

void same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw InvalidArgument(std::string(what) + ": shape mismatch");
}

}  // namespace

GeneratorTerms generator_loss(const Batch& batch, const GeneratorOutputs& out, const Critic& critic,
                              const LossWeights& w, PerceptualMetric& metric) {
  same_shape(batch.trg_image, out.relit, "generator loss");
  same_shape(batch.src_image, out.cycle_image, "generator loss");
  GeneratorTerms t;
  t.l1 = (batch.trg_image - out.relit).abs().mean();
  t.perceptual = metric.distance(batch.trg_image, out.relit);
  t.cycle = (batch.src_image - out.cycle_image).abs().mean();
  t.adversarial = (critic(out.relit) - 1.0).pow(2).mean();
  t.total = w.l1 * t.l1 + w.perceptual * t.perceptual + w.cycle * t.cycle + w.adversarial * t.adversarial;
  return t;
}

torch::Tensor discriminator_loss(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake) {
  same_shape(real, fake, "discriminator loss");
  return (critic(real) - 1.0).pow(2).mean() + critic(fake).pow(2).mean();
}

MonitorTerms monitor_loss(const torch::Tensor& src_light, const torch::Tensor& src_light_hat,
                          const torch::Tensor& trg_light, const torch::Tensor& cycle_light,
                          const LossWeights& w, PerceptualMetric& metric) {
  same_shape(src_light, src_light_hat, "monitor loss");
  same_shape(trg_light, cycle_light, "monitor loss");
  MonitorTerms t;
  t.l1 = (src_light - src_light_hat).abs().mean();
  t.perceptual = metric.distance(src_light, src_light_hat);
  t.cycle = (trg_light - cycle_light).abs().mean();
  t.total = w.l1 * t.l1 + w.perceptual * t.perceptual + w.cycle * t.cycle;
  return t;
}

torch::Tensor total_objective(Generator& g, Discriminator& d, const Batch& batch, const LossWeights& w,
                              PerceptualMetric& metric) {
  const Critic critic = [&](const torch::Tensor& x) { return d(x); };
  const auto out = generator_forward(g, batch);
  const auto gi = generator_loss(batch, out, critic, w, metric);
  const auto ld = discriminator_loss(critic, batch.trg_image, out.relit);
  const auto gm = monitor_loss(batch.src_light, out.src_light_hat, batch.trg_light, out.cycle_light, w, metric);
  return gi.total + ld + w.monitor * gm.total;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  weights.validate();
  for (double lr : {lr_g, lr_d})
    if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("learning rates must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

std::string StepRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["d_loss"] = d_loss;
  j["g_total"] = g_total;
  j["g_l1"] = g_l1;
  j["g_perceptual"] = g_perceptual;
  j["g_cycle"] = g_cycle;
  j["g_adversarial"] = g_adversarial;
  j["m_total"] = m_total;
  j["m_l1"] = m_l1;
  j["m_perceptual"] = m_perceptual;
  j["m_cycle"] = m_cycle;
  j["objective"] = objective;
  j["wall"] = wall_seconds;
  return j.dump();
}

Trainer::Trainer(const ArchConfig& arch, const TrainConfig& cfg, torch::Dtype dtype)
    : arch_(arch), cfg_(cfg), dtype_(dtype) {
  arch_.validate();
  cfg_.validate();
  g_ = init_generator(arch_, cfg_.seed, dtype_);
  d_ = init_discriminator(arch_, cfg_.seed, dtype_);
  const auto betas = std::make_tuple(cfg_.beta1, cfg_.beta2);
  opt_g_ = std::make_unique<torch::optim::Adam>(g_->parameters(),
                                                torch::optim::AdamOptions(cfg_.lr_g).betas(betas));
  opt_d_ = std::make_unique<torch::optim::Adam>(d_->parameters(),
                                                torch::optim::AdamOptions(cfg_.lr_d).betas(betas));
  metric_ = make_perceptual_metric(cfg_.perceptual);
}

StepRecord Trainer::step(const Batch& batch) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& w = cfg_.weights;
  const Critic critic = [this](const torch::Tensor& x) { return d_(x); };

  const auto out = generator_forward(g_, batch);

  opt_d_->zero_grad();
  const auto ld = discriminator_loss(critic, batch.trg_image, out.relit.detach());
  const double ld_value = ld.item<double>();
  if (!std::isfinite(ld_value))
    throw Error("non-finite discriminator loss at step " + std::to_string(steps_done_ + 1));
  ld.backward();
  opt_d_->step();

  opt_g_->zero_grad();
  const auto gi = generator_loss(batch, out, critic, w, *metric_);
  const auto gm = monitor_loss(batch.src_light, out.src_light_hat, batch.trg_light, out.cycle_light, w, *metric_);
  const auto objective = gi.total + w.monitor * gm.total;
  const double obj_value = objective.item<double>();
  if (!std::isfinite(obj_value)) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "non-finite generator objective at step %lld (l1=%g perceptual=%g cycle=%g adv=%g monitor=%g)",
                  static_cast<long long>(steps_done_ + 1), gi.l1.item<double>(), gi.perceptual.item<double>(),
                  gi.cycle.item<double>(), gi.adversarial.item<double>(), gm.total.item<double>());
    throw Error(buf);
  }
  objective.backward();
  opt_g_->step();
  ++steps_done_;

  StepRecord r;
  r.step = steps_done_;
  r.d_loss = ld_value;
  r.g_total = gi.total.item<double>();
  r.g_l1 = gi.l1.item<double>();
  r.g_perceptual = gi.perceptual.item<double>();
  r.g_cycle = gi.cycle.item<double>();
  r.g_adversarial = gi.adversarial.item<double>();
  r.m_total = gm.total.item<double>();
  r.m_l1 = gm.l1.item<double>();
  r.m_perceptual = gm.perceptual.item<double>();
  r.m_cycle = gm.cycle.item<double>();
  r.objective = obj_value;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Checkpoint Trainer::snapshot() {
  Checkpoint c;
  c.arch = arch_;
  c.step = steps_done_;
  store_module(c, "G.", *g_);
  store_module(c, "D.", *d_);
  store_adam(c, "optG.", *opt_g_, *g_);
  store_adam(c, "optD.", *opt_d_, *d_);
  return c;
}

void Trainer::save(const std::filesystem::path& file) { write_checkpoint(snapshot(), file); }

void Trainer::load(const std::filesystem::path& file) {
  const auto c = read_checkpoint(file);
  require_arch(c, arch_);
  restore_module(c, "G.", *g_);
  restore_module(c, "D.", *d_);
  restore_adam(c, "optG.", *opt_g_, *g_);
  restore_adam(c, "optD.", *opt_d_, *d_);
  steps_done_ = c.step;
}

Generator load_generator(const std::filesystem::path& file, torch::Dtype dtype) {
  const auto c = read_checkpoint(file);
  Generator g(c.arch);
  restore_module(c, "G.", *g);
  g->to(dtype);
  g->eval();
  return g;
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

FrameCache FrameCache::load(const DatasetManifest& manifest, const ArchConfig& arch, torch::Dtype dtype) {
  const auto n = static_cast<std::int64_t>(manifest.frames.size());
  if (n == 0) throw InvalidArgument("manifest has no frames");
  FrameCache c;
  c.images = torch::empty({n, 3, arch.resolution, arch.resolution}, dtype);
  c.lights = torch::empty({n, 3, arch.monitor_height, arch.monitor_width}, dtype);
  for (std::int64_t i = 0; i < n; ++i) {
    auto img = load_image(manifest.image_file(i));
    if (img.height() != arch.resolution || img.width() != arch.resolution)
      img = resize_bilinear(img, arch.resolution, arch.resolution);
    const auto light = load_monitor_light(manifest.light_file(i));
    if (light.height() != arch.monitor_height || light.width() != arch.monitor_width)
      throw InvalidArgument("monitor light " + manifest.light_file(i).string() + " does not match the model's " +
                            std::to_string(arch.monitor_height) + "x" + std::to_string(arch.monitor_width));
    c.images[i] = to_tensor(img, dtype)[0];
    c.lights[i] = to_tensor(light, dtype)[0];
  }
  return c;
}

Batch FrameCache::gather(const std::vector<FramePair>& pairs) const {
  std::vector<std::int64_t> src, trg;
  for (const auto& p : pairs) {
    src.push_back(static_cast<std::int64_t>(p.src));
    trg.push_back(static_cast<std::int64_t>(p.trg));
  }
  const auto si = torch::tensor(src, torch::kLong), ti = torch::tensor(trg, torch::kLong);
  return {images.index_select(0, si), lights.index_select(0, si), images.index_select(0, ti),
          lights.index_select(0, ti)};
}

std::vector<FramePair> batch_for_step(const PairIndex& pairs, int batch_size, std::uint64_t seed,
                                      std::int64_t step) {
  const auto n = pairs.pairs.size();
  if (n == 0) throw InvalidArgument("cannot draw batches from an empty pair index");
  std::vector<FramePair> out;
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> perm(n);
  for (int k = 0; k < batch_size; ++k) {
    const auto q = static_cast<std::uint64_t>(step) * batch_size + k;
    const auto epoch = static_cast<std::int64_t>(q / n);
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(pairs.pairs[perm[q % n]]);
  }
  return out;
}

namespace {

std::filesystem::path newest_checkpoint(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "final.ckpt")) return dir / "final.ckpt";
  static const std::regex pattern(R"(step_(\d+)\.ckpt)");
  std::filesystem::path best;
  long long best_step = -1;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (std::regex_match(name, m, pattern) && std::stoll(m[1]) > best_step) {
      best_step = std::stoll(m[1]);
      best = e.path();
    }
  }
  return best;
}

/// Drops log records past `step`, e.g. after resuming from an older checkpoint.
void truncate_log(const std::filesystem::path& log, std::int64_t step) {
  std::vector<std::string> kept;
  {
    std::ifstream is(log);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (nlohmann::json::parse(line).at("step").get<std::int64_t>() <= step) kept.push_back(line);
    }
  }
  std::ofstream os(log, std::ios::trunc);
  for (const auto& l : kept) os << l << "\n";
}

}  // namespace

FitResult fit(const ArchConfig& arch, const TrainConfig& cfg, const PairIndex& pairs,
              const DatasetManifest& manifest, const std::filesystem::path& out_dir, bool resume,
              const std::function<void(const StepRecord&)>& on_step) {
  cfg.validate();
  const auto train = filter_split(pairs, manifest, Split::Train);
  if (train.pairs.empty()) throw InvalidArgument("no training pairs in the pair index");
  for (const auto& p : train.pairs)
    if (p.src >= manifest.frames.size() || p.trg >= manifest.frames.size())
      throw InvalidArgument("pair index refers to frames outside the manifest");

  std::filesystem::create_directories(out_dir);
  const auto log_path = out_dir / "train_log.jsonl";
  Trainer trainer(arch, cfg);
  if (resume) {
    const auto ckpt = newest_checkpoint(out_dir);
    if (ckpt.empty()) throw IoError("nothing to resume in " + out_dir.string());
    trainer.load(ckpt);
    truncate_log(log_path, trainer.steps_done());
  } else {
    std::ofstream(log_path, std::ios::trunc);
  }

  const auto cache = FrameCache::load(manifest, arch);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot write " + log_path.string());

  FitResult result;
  while (trainer.steps_done() < cfg.steps) {
    const auto batch = cache.gather(batch_for_step(train, cfg.batch_size, cfg.seed, trainer.steps_done()));
    const auto rec = trainer.step(batch);
    log << rec.to_json() << "\n";
    log.flush();
    result.records.push_back(rec);
    if (on_step) on_step(rec);
    if (cfg.checkpoint_every > 0 && rec.step % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "step_%08lld.ckpt", static_cast<long long>(rec.step));
      trainer.save(out_dir / name);
    }
  }
  if (!log) throw IoError("cannot write " + log_path.string());
  result.checkpoint = out_dir / "final.ckpt";
  trainer.save(result.checkpoint);
  return result;
}

}  // namespace relit
