#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "relit/model.hpp"
#include "relit/pairing.hpp"
#include "relit/synthstage.hpp"
#include "relit/temporal.hpp"
#include "relit/training.hpp"

namespace relit {

/// Everything a CLI run can configure. Stored as JSON with the sections
/// "arch", "train", "smoothing", "synth", "pairing" and a top-level "seed"
/// shared by data generation and training.
struct GlobalConfig {
  std::uint64_t seed = 1;
  ArchConfig arch;
  TrainConfig train;
  SmootherConfig smoothing;
  SynthConfig synth;
  PairParams pairing;

  /// Merges a JSON document; unknown keys and ill-typed values throw
  /// ConfigError naming the key.
  void merge_json(const std::string& text);
  /// `section.key=value` where value is JSON (bare words count as strings).
  void apply_override(const std::string& assignment);
  /// Propagates the shared seed and monitor size, then validates each part.
  void finalize();

  std::string to_json() const;
  /// Every settable dotted key.
  std::vector<std::string> keys() const;
};

/// Defaults, then the file (if any), then the overrides in order.
GlobalConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

}  // namespace relit
