#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relit/dataset.hpp"
#include "relit/imaging.hpp"
#include "relit/keypoints.hpp"

namespace relit {

/// Root-mean-square Euclidean distance between corresponding landmarks.
double keypoint_distance(const KeypointVector& a, const KeypointVector& b);

/// RMSE between two monitor lights in [0,1] units.
double light_rmse(const MonitorLight& a, const MonitorLight& b);

struct PairParams {
  double tau = 0.02;          ///< max keypoint distance
  double lambda_min = 0.05;   ///< min light RMSE between the two frames
  int max_pairs_per_frame = 8;
  bool cross_sequence = false;

  void validate() const;
};

struct FramePair {
  std::size_t src = 0;
  std::size_t trg = 0;
  double distance = 0.0;

  bool operator==(const FramePair&) const = default;
};

struct PairIndex {
  PairParams params;
  std::vector<FramePair> pairs;
};

/// What pairing needs to know about a frame.
struct PairingFrame {
  std::string seq_id;
  Split split = Split::Train;
  KeypointVector keypoints;
  MonitorLight light;
};

/// Exhaustive scan over ordered pairs sharing a split (and a sequence unless
/// cross_sequence). Per source frame the closest `max_pairs_per_frame`
/// candidates are kept; ties go to the smaller frame-id gap, then the lower
/// target id. Output is sorted by source id, then rank.
PairIndex build_pairs(std::span<const PairingFrame> frames, const PairParams& params);

/// Loads the monitor lights referenced by the manifest and pairs them.
PairIndex build_pairs(const DatasetManifest& manifest, const PairParams& params);

/// Keeps pairs whose source frame belongs to `split`.
PairIndex filter_split(const PairIndex& index, const DatasetManifest& manifest, Split split);

/// Collapses (a,b)/(b,a) duplicates into one pair with src < trg.
std::vector<FramePair> unordered_pairs(const PairIndex& index);

/// Header line with parameters, then `src trg distance` per line.
void write_pairs(const PairIndex& index, const std::filesystem::path& file);
PairIndex read_pairs(const std::filesystem::path& file);

}  // namespace relit
