#pragma once

#include <torch/torch.h>

#include <deque>
#include <optional>

#include "relit/model.hpp"

namespace relit {

struct SmootherConfig {
  double alpha = 0.7;  ///< weight of the current frame's de-lit features
  double beta = 0.6;   ///< decay of older source lights
  int window = 3;      ///< number of source lights averaged
  bool feature_ema = true;
  bool light_avg = true;

  void validate() const;
};

/// Per-stream history. One state per video; not shared between threads.
class SmootherState {
 public:
  explicit SmootherState(SmootherConfig cfg = {});

  const SmootherConfig& config() const { return cfg_; }

  /// Recursive EMA against the previously returned pyramid. The first frame
  /// passes through. Always applied; the feature_ema flag is consulted by
  /// stream_step.
  FeaturePyramid ema_features(const FeaturePyramid& pyr);

  /// Pushes the light and returns the beta-weighted mean of the buffered
  /// lights, most recent weighted 1.
  torch::Tensor avg_light(const torch::Tensor& light);

  /// Clears history; flags and constants stay.
  void reset();

  bool has_history() const { return prev_delit_.has_value() || !lights_.empty(); }
  std::size_t buffered_lights() const { return lights_.size(); }

 private:
  SmootherConfig cfg_;
  std::optional<FeaturePyramid> prev_delit_;
  std::deque<torch::Tensor> lights_;  ///< most recent first
};

/// Relights one video frame. Without a source light the predicted one is
/// used; averaging and EMA follow the state's flags.
torch::Tensor stream_step(SmootherState& state, Generator& g, const torch::Tensor& frame,
                          const std::optional<torch::Tensor>& src_light, const torch::Tensor& trg_light);

}  // namespace relit
