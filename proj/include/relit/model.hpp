#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include "relit/imaging.hpp"

namespace relit {

/// Generator/discriminator hyperparameters. Levels are 1-based in the docs
/// and 0-based in the vectors.
struct ArchConfig {
  int resolution = 128;
  std::vector<int> widths{16, 32, 64, 128, 256, 256, 256};
  std::vector<int> strides{1, 2, 2, 2, 2, 2, 2};
  int light_embed_dim = 256;
  int light_hidden_dim = 256;
  int monitor_height = kDefaultMonitorHeight;
  int monitor_width = kDefaultMonitorWidth;
  int predictor_first_level = 3;
  int predictor_grid_height = 8;
  int predictor_grid_width = 16;
  int predictor_channels = 32;
  int disc_layers = 4;
  int disc_width = 32;
  bool use_lcfn = true;
  bool use_light_prediction = true;

  int levels() const { return static_cast<int>(widths.size()); }
  /// Spatial size of each pyramid level.
  std::vector<int> level_sizes() const;
  void validate() const;

  /// `key=value` lines; stable, used by checkpoints for exact matching.
  std::string serialize() const;
  static ArchConfig deserialize(const std::string& text);

  bool operator==(const ArchConfig&) const = default;
};

/// Encoder features f^1..f^L, each [B, C_l, H_l, W_l].
struct FeaturePyramid {
  std::vector<torch::Tensor> levels;

  std::size_t size() const { return levels.size(); }
  FeaturePyramid detach() const;
};

struct LightPrediction {
  torch::Tensor light;                     ///< [B, 3, mh, mw] in [0,1]
  std::vector<torch::Tensor> confidences;  ///< per tapped level, [B, 1, gh, gw]; sum to 1
};

struct RelightOutput {
  torch::Tensor image;            ///< [B, 3, H, W]
  torch::Tensor predicted_light;  ///< [B, 3, mh, mw]
};

/// Instance normalization followed by the affine (1 + dgamma(e), beta(e))
/// from a linear head producing 2C values.
torch::Tensor adain(const torch::Tensor& features, const torch::Tensor& embedding,
                    torch::nn::Linear head);

inline constexpr double kInstanceNormEps = 1e-5;

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(ArchConfig cfg);

  const ArchConfig& config() const { return cfg_; }

  FeaturePyramid encode(const torch::Tensor& image);
  torch::Tensor embed_light(const torch::Tensor& light);
  FeaturePyramid delight(const FeaturePyramid& pyr, const torch::Tensor& src_embedding);
  LightPrediction predict_source_light(const FeaturePyramid& pyr);
  torch::Tensor decode(const FeaturePyramid& delit, const torch::Tensor& trg_embedding);

  /// Full forward pass. Without a source light the predicted one is used.
  RelightOutput relight(const torch::Tensor& src_image, const std::optional<torch::Tensor>& src_light,
                        const torch::Tensor& trg_light);

  torch::nn::Linear& delight_head(int level) { return delight_heads_.at(level); }
  torch::nn::Linear& relight_head(int level) { return relight_heads_.at(level); }

 private:
  void check_image(const torch::Tensor& image) const;
  void check_light(const torch::Tensor& light) const;

  ArchConfig cfg_;
  std::vector<torch::nn::Conv2d> encoder_;
  torch::nn::Linear light_fc1_{nullptr}, light_fc2_{nullptr};
  std::vector<torch::nn::Linear> delight_heads_;
  std::vector<torch::nn::Linear> relight_heads_;  ///< index l = decoder step producing level l
  std::vector<torch::nn::Conv2d> decoder_;
  torch::nn::Conv2d output_{nullptr};
  std::vector<torch::nn::Conv2d> predictor_proj_;
  std::vector<torch::nn::Conv2d> predictor_conf_;
  torch::nn::Conv2d fuse1_{nullptr}, fuse2_{nullptr};
};
TORCH_MODULE(Generator);

/// PatchGAN: stride-2 4x4 convolutions, no output activation.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const ArchConfig& cfg);
  torch::Tensor forward(const torch::Tensor& image);

 private:
  int resolution_;
  std::vector<torch::nn::Conv2d> layers_;
};
TORCH_MODULE(Discriminator);

/// Seeds the global torch generator, builds both networks and zeroes the
/// AdaIN heads so normalization is the identity affine at step 0.
Generator init_generator(const ArchConfig& cfg, std::uint64_t seed,
                         torch::Dtype dtype = torch::kFloat32);
Discriminator init_discriminator(const ArchConfig& cfg, std::uint64_t seed,
                                 torch::Dtype dtype = torch::kFloat32);

std::int64_t parameter_count(torch::nn::Module& module);

// ---------------------------------------------------------------------------
// Raster <-> tensor
// ---------------------------------------------------------------------------

/// [1, 3, H, W] float tensor from an HWC raster.
template <class Tag>
torch::Tensor to_tensor(const Raster<Tag>& r, torch::Dtype dtype = torch::kFloat32);

/// First batch element of a [B, 3, H, W] tensor, clamped to [0,1].
template <class Tag>
Raster<Tag> from_tensor(const torch::Tensor& t);

}  // namespace relit
