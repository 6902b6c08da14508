#pragma once

#include <vector>

namespace relit {

/// K two-dimensional landmarks flattened as (u0, v0, u1, v1, ...), each
/// coordinate normalized to [0,1] by the image width/height.
struct KeypointVector {
  std::vector<double> coords;

  int landmark_count() const { return static_cast<int>(coords.size() / 2); }
  bool operator==(const KeypointVector&) const = default;
};

}  // namespace relit
