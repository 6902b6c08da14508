#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "relit/checkpoint.hpp"
#include "relit/dataset.hpp"
#include "relit/model.hpp"
#include "relit/pairing.hpp"

namespace relit {

// ---------------------------------------------------------------------------
// Perceptual distance
// ---------------------------------------------------------------------------

/// Scalar distance between two [B,3,H,W] batches, averaged over the batch.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string name() const = 0;
  virtual torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b) = 0;
};

/// 5x5 binomial blur with replicate padding, then every second sample.
torch::Tensor blur_downsample(const torch::Tensor& x);

/// Mean over `levels` pyramid levels (the input itself plus levels-1
/// blur/downsample steps) of the mean absolute difference.
torch::Tensor pyramid_l1(const torch::Tensor& a, const torch::Tensor& b, int levels = 4);

/// "pyramid_l1" is built in. "torchscript:<path>" loads a scripted module
/// whose forward(a, b) returns a scalar, e.g. an exported LPIPS network.
std::shared_ptr<PerceptualMetric> make_perceptual_metric(const std::string& id);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossWeights {
  double l1 = 1.0;
  double perceptual = 1.0;
  double cycle = 0.5;
  double adversarial = 0.05;
  double monitor = 1.0;  ///< weight of the monitor loss in the total objective

  void validate() const;
};

/// Aligned training tuple, each [B,3,*,*].
struct Batch {
  torch::Tensor src_image, src_light, trg_image, trg_light;
};

/// Forward pass plus the cycle pass G(Î_trg, L_trg, L_src).
struct GeneratorOutputs {
  torch::Tensor relit;          ///< Î_trg
  torch::Tensor src_light_hat;  ///< L̂_src
  torch::Tensor cycle_image;    ///< Î_src^C
  torch::Tensor cycle_light;    ///< L̂^C, predicted light of Î_trg
};

GeneratorOutputs generator_forward(Generator& g, const Batch& batch);

using Critic = std::function<torch::Tensor(const torch::Tensor&)>;

struct GeneratorTerms {
  torch::Tensor l1, perceptual, cycle, adversarial;
  torch::Tensor total;  ///< weighted sum
};

GeneratorTerms generator_loss(const Batch& batch, const GeneratorOutputs& out, const Critic& critic,
                              const LossWeights& w, PerceptualMetric& metric);

/// Mean over patches of (D(real) - 1)^2 plus mean of D(fake)^2.
torch::Tensor discriminator_loss(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake);

struct MonitorTerms {
  torch::Tensor l1, perceptual, cycle;
  torch::Tensor total;
};

MonitorTerms monitor_loss(const torch::Tensor& src_light, const torch::Tensor& src_light_hat,
                          const torch::Tensor& trg_light, const torch::Tensor& cycle_light,
                          const LossWeights& w, PerceptualMetric& metric);

/// The joint objective L_G^I + L_D + λ_M·L_G^M as one differentiable scalar.
torch::Tensor total_objective(Generator& g, Discriminator& d, const Batch& batch, const LossWeights& w,
                              PerceptualMetric& metric);

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

struct TrainConfig {
  LossWeights weights;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 8;
  std::int64_t steps = 2000;
  std::uint64_t seed = 1;
  std::string perceptual = "pyramid_l1";
  std::int64_t checkpoint_every = 500;  ///< 0 disables periodic checkpoints

  /// Learning rates of exactly 0 are allowed so a step can be a no-op.
  void validate() const;
};

struct StepRecord {
  std::int64_t step = 0;  ///< 1-based index of the completed step
  double d_loss = 0;
  double g_total = 0, g_l1 = 0, g_perceptual = 0, g_cycle = 0, g_adversarial = 0;
  double m_total = 0, m_l1 = 0, m_perceptual = 0, m_cycle = 0;
  double objective = 0;  ///< g_total + weights.monitor * m_total
  double wall_seconds = 0;

  /// One JSON object, no trailing newline. Doubles keep full precision.
  std::string to_json() const;
};

/// Generator, discriminator and both optimizers.
class Trainer {
 public:
  Trainer(const ArchConfig& arch, const TrainConfig& cfg, torch::Dtype dtype = torch::kFloat32);

  /// One discriminator update on L_D, then one generator update on the
  /// generator objective. Throws on a non-finite loss.
  StepRecord step(const Batch& batch);

  std::int64_t steps_done() const { return steps_done_; }
  Generator& generator() { return g_; }
  Discriminator& discriminator() { return d_; }
  const ArchConfig& arch() const { return arch_; }
  PerceptualMetric& metric() { return *metric_; }

  Checkpoint snapshot();
  void save(const std::filesystem::path& file);
  /// Restores weights, optimizer moments and the step counter.
  void load(const std::filesystem::path& file);

 private:
  ArchConfig arch_;
  TrainConfig cfg_;
  torch::Dtype dtype_;
  Generator g_{nullptr};
  Discriminator d_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
  std::shared_ptr<PerceptualMetric> metric_;
  std::int64_t steps_done_ = 0;
};

/// Loads a generator for inference; the architecture comes from the file.
Generator load_generator(const std::filesystem::path& file, torch::Dtype dtype = torch::kFloat32);

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// All frames of a manifest decoded into tensors, images resized to the
/// model resolution when the dataset was rendered at another size.
struct FrameCache {
  torch::Tensor images;  ///< [N,3,H,W]
  torch::Tensor lights;  ///< [N,3,mh,mw]

  static FrameCache load(const DatasetManifest& manifest, const ArchConfig& arch,
                         torch::Dtype dtype = torch::kFloat32);
  Batch gather(const std::vector<FramePair>& pairs) const;
};

/// Pair order for a step: consecutive epochs are independent permutations
/// seeded from (seed, epoch), so any step's batch is computable directly.
std::vector<FramePair> batch_for_step(const PairIndex& pairs, int batch_size, std::uint64_t seed,
                                      std::int64_t step);

struct FitResult {
  std::filesystem::path checkpoint;
  std::vector<StepRecord> records;  ///< records of this invocation only
};

/// Trains on the train-split pairs. Writes `train_log.jsonl`, periodic
/// `step_%08d.ckpt` files and `final.ckpt` into out_dir. With `resume`, the
/// newest checkpoint in out_dir is loaded and training continues from it.
FitResult fit(const ArchConfig& arch, const TrainConfig& cfg, const PairIndex& pairs,
              const DatasetManifest& manifest, const std::filesystem::path& out_dir, bool resume = false,
              const std::function<void(const StepRecord&)>& on_step = {});

}  // namespace relit
