#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "relit/keypoints.hpp"

namespace relit {

enum class Split { Train, Test, Grid };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct FramePose {
  double yaw = 0.0;
  double pitch = 0.0;
  double expression = 0.0;
};

/// One captured (or rendered) frame: portrait, monitor content, pose.
struct FrameRecord {
  std::string seq_id;
  int timestamp = 0;
  Split split = Split::Train;
  std::filesystem::path image_path;  ///< relative to the manifest root
  std::filesystem::path light_path;
  FramePose pose;
  KeypointVector keypoints;
};

struct ManifestMeta {
  int resolution = 0;
  int monitor_height = 0;
  int monitor_width = 0;
  std::uint64_t seed = 0;
};

/// Ordered frame list; the position of a record in `frames` is its frame id.
struct DatasetManifest {
  std::filesystem::path root;
  ManifestMeta meta;
  std::vector<FrameRecord> frames;

  /// Throws if timestamps are not strictly increasing within a sequence or
  /// keypoint lengths differ.
  void validate() const;

  std::filesystem::path image_file(std::size_t id) const { return root / frames.at(id).image_path; }
  std::filesystem::path light_file(std::size_t id) const { return root / frames.at(id).light_path; }

  std::vector<std::size_t> ids_in_split(Split s) const;
};

/// Text format, one record per line:
///   seq_id timestamp split image_path light_path yaw pitch expression k...
/// preceded by `#` metadata lines. Numbers use round-trip precision.
void write_manifest(const DatasetManifest& m, const std::filesystem::path& file);

/// Reads a manifest; `root` becomes the file's directory.
DatasetManifest read_manifest(const std::filesystem::path& file);

}  // namespace relit
