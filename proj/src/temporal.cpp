#include "relit/temporal.hpp"

#include <cmath>

#include "relit/error.hpp"

namespace relit {

void SmootherConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("smoothing alpha must lie in (0, 1]");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("smoothing beta must lie in (0, 1]");
  if (window < 1) throw ConfigError("smoothing window must be >= 1");
}

SmootherState::SmootherState(SmootherConfig cfg) : cfg_(cfg) { cfg_.validate(); }

FeaturePyramid SmootherState::ema_features(const FeaturePyramid& pyr) {
  if (!prev_delit_) {
    prev_delit_ = pyr.detach();
    return pyr;
  }
  const auto& prev = *prev_delit_;
  if (prev.size() != pyr.size()) throw InvalidArgument("pyramid changed mid-stream; reset the smoother");
  FeaturePyramid out;
  for (std::size_t l = 0; l < pyr.size(); ++l) {
    if (prev.levels[l].sizes() != pyr.levels[l].sizes())
      throw InvalidArgument("pyramid changed mid-stream; reset the smoother");
    out.levels.push_back(cfg_.alpha * pyr.levels[l] + (1.0 - cfg_.alpha) * prev.levels[l]);
  }
  prev_delit_ = out.detach();
  return out;
}

torch::Tensor SmootherState::avg_light(const torch::Tensor& light) {
  if (!lights_.empty() && lights_.front().sizes() != light.sizes())
    throw InvalidArgument("monitor light size changed mid-stream");
  lights_.push_front(light.detach());
  while (static_cast<int>(lights_.size()) > cfg_.window) lights_.pop_back();
  torch::Tensor acc = torch::zeros_like(light);
  double norm = 0.0, wi = 1.0;
  for (const auto& l : lights_) {
    acc = acc + wi * l;
    norm += wi;
    wi *= cfg_.beta;
  }
  return acc / norm;
}

void SmootherState::reset() {
  prev_delit_.reset();
  lights_.clear();
}

torch::Tensor stream_step(SmootherState& state, Generator& g, const torch::Tensor& frame,
                          const std::optional<torch::Tensor>& src_light, const torch::Tensor& trg_light) {
  const auto& cfg = state.config();
  const auto pyr = g->encode(frame);
  torch::Tensor source = src_light ? *src_light : g->predict_source_light(pyr).light;
  if (cfg.light_avg) source = state.avg_light(source);
  auto delit = g->delight(pyr, g->embed_light(source));
  if (cfg.feature_ema) delit = state.ema_features(delit);
  return g->decode(delit, g->embed_light(trg_light));
}

}  // namespace relit
