#pragma once

#include <torch/torch.h>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "relit/imaging.hpp"
#include "relit/model.hpp"
#include "relit/pairing.hpp"
#include "relit/training.hpp"

namespace relit {

enum class RmseScale { Unit, Byte };

double rmse(const Image& a, const Image& b, RmseScale scale = RmseScale::Unit);
/// Over every element of two equally shaped tensors.
double rmse(const torch::Tensor& a, const torch::Tensor& b, RmseScale scale = RmseScale::Unit);

/// Mean absolute difference in [0,1] units.
double mae_light(const MonitorLight& a, const MonitorLight& b);
double mae_light(const torch::Tensor& a, const torch::Tensor& b);

// ---------------------------------------------------------------------------
// Temporal consistency
// ---------------------------------------------------------------------------

inline const std::vector<double> kTemporalThresholds{0.2, 0.3, 0.4};

struct TemporalReport {
  std::vector<double> adjacent;  ///< unit-scale RMSE of frames (t, t+1)
  double mean = 0.0;           ///< unit scale
  double mean_byte = 0.0;      ///< the same on the 0..255 scale
  std::vector<double> thresholds;
  std::vector<double> rates;   ///< percent of adjacent pairs with RMSE strictly above each threshold

  std::string to_json() const;
  std::string to_table() const;
};

TemporalReport temporal_consistency(std::span<const Image> frames,
                                    const std::vector<double>& thresholds = kTemporalThresholds);
/// Frames as [1,3,H,W] tensors.
TemporalReport temporal_consistency(std::span<const torch::Tensor> frames,
                                    const std::vector<double>& thresholds = kTemporalThresholds);

// ---------------------------------------------------------------------------
// Paired evaluation
// ---------------------------------------------------------------------------

/// (src_image, src_light, trg_light) -> relit image, all batched.
using Relighter =
    std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&, const torch::Tensor&)>;

Relighter generator_relighter(Generator g, bool predict_source = false);

struct PairScore {
  std::size_t src = 0, trg = 0;
  double rmse = 0, rmse_copy = 0;              ///< unit scale
  double perceptual = 0, perceptual_copy = 0;  ///< built-in proxy unless configured otherwise
  std::vector<double> extra;                   ///< one per extra metric
};

struct PairReport {
  std::string name;
  std::string perceptual_name;
  std::vector<std::string> extra_names;
  std::vector<PairScore> pairs;
  double mean_rmse = 0, mean_rmse_copy = 0;
  double mean_perceptual = 0, mean_perceptual_copy = 0;
  std::vector<double> mean_extra;
  double fraction_improved = 0;  ///< share of pairs with rmse < rmse_copy

  std::string to_table() const;
  /// One JSON record per pair followed by a summary record.
  std::string to_jsonl() const;
};

/// Relights src with trg's light and scores against trg's image, plus the
/// copy-input baseline, for every pair given.
PairReport eval_pairs(const Relighter& relight, std::span<const FramePair> pairs, const FrameCache& cache,
                      PerceptualMetric& perceptual,
                      std::span<const std::shared_ptr<PerceptualMetric>> extra = {}, int chunk = 36);

/// Unordered grid-split pairs of the index.
std::vector<FramePair> grid_pairs(const PairIndex& index, const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Source-light prediction
// ---------------------------------------------------------------------------

struct LightReport {
  std::size_t frames = 0;
  double mae_model = 0;
  double mae_baseline = 0;  ///< constant dataset-mean light
  double improvement = 0;   ///< 1 - mae_model / mae_baseline

  std::string to_json() const;
};

/// Mean light over the given frames, shape [1,3,mh,mw].
torch::Tensor mean_light(const FrameCache& cache, std::span<const std::size_t> ids);

LightReport eval_light(Generator& g, const FrameCache& cache, std::span<const std::size_t> ids,
                       const torch::Tensor& baseline_light, int chunk = 32);

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

struct MetricOrdering {
  std::string metric;
  std::vector<std::string> ranked;             ///< best (lowest) first
  std::vector<std::vector<std::string>> ties;  ///< groups with equal values
};

struct AblationSummary {
  std::vector<MetricOrdering> orderings;
  std::string to_table() const;
};

struct NamedValue {
  std::string name;
  double value = 0.0;
};

/// Orders names by value, lowest first; exact equality is a tie. Stable for ties.
MetricOrdering order_metric(const std::string& metric, std::span<const NamedValue> values);

/// Orderings on mean RMSE and mean perceptual distance.
AblationSummary ablation_compare(std::span<const PairReport> reports);

/// `values` listed best-expected first. Holds when the first entry is
/// strictly lowest and at most `allowed_inversions` adjacent pairs are out
/// of order.
bool ordering_holds(std::span<const double> values, int allowed_inversions);

}  // namespace relit
