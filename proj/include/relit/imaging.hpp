#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "relit/error.hpp"

namespace relit {

/// Three-channel raster with values in [0,1], stored row-major as HWC.
///
/// The tag parameter keeps portraits and monitor lights from being mixed up
/// at call sites even though they share a representation.
template <class Tag>
class Raster {
 public:
  static constexpr int kChannels = 3;

  Raster() = default;
  Raster(int height, int width, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator()(int y, int x, int c) { return data_[index(y, x, c)]; }
  float operator()(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  bool same_shape(const Raster& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Throws InvalidArgument unless every value is finite and in [0,1].
  void check_range() const;

  bool operator==(const Raster&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

struct ImageTag {};
struct MonitorTag {};

/// Portrait frame (source, target or relit).
using Image = Raster<ImageTag>;
/// Low-resolution LDR content shown on the monitor; default 16x32.
using MonitorLight = Raster<MonitorTag>;

inline constexpr int kDefaultMonitorHeight = 16;
inline constexpr int kDefaultMonitorWidth = 32;

/// Reinterprets the pixels of one raster kind as another.
template <class To, class From>
Raster<To> raster_cast(const Raster<From>& src) {
  Raster<To> out(src.height(), src.width());
  std::copy(src.values().begin(), src.values().end(), out.values().begin());
  return out;
}

/// Equirectangular HDR panorama, width == 2 * height, values >= 0.
///
/// Column 0 is longitude -180 degrees, the forward direction sits at the
/// horizontal center. Row 0 is the zenith.
class EnvMap {
 public:
  EnvMap() = default;
  EnvMap(int height, int width, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  float& operator()(int y, int x, int c) { return data_[index(y, x, c)]; }
  float operator()(int y, int x, int c) const { return data_[index(y, x, c)]; }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3 + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

/// Reads an 8-bit RGB PNG; values are mapped to [0,1] by /255.
Image load_image(const std::filesystem::path& path);
MonitorLight load_monitor_light(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG, rounding to the nearest code value.
void save_image(const Image& img, const std::filesystem::path& path);
void save_monitor_light(const MonitorLight& light, const std::filesystem::path& path);

/// ENVF container: "ENVF", u32 height, u32 width, float32 RGB row-major.
/// All integers and floats little-endian.
EnvMap load_envmap(const std::filesystem::path& path);
void save_envmap(const EnvMap& env, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// Bilinear resampling, align-corners-false (pixel centers at i + 0.5).
template <class Tag>
Raster<Tag> resize_bilinear(const Raster<Tag>& img, int height, int width);

struct MonitorConversion {
  /// Values above this percentile of the cropped region are clipped.
  double clip_percentile = 99.0;
  /// Divide by the clip value so the result spans [0,1]. When false the
  /// HDR values are clamped to [0,1] directly.
  bool normalize = true;
};

/// Crops the frontal `fov_deg` horizontal slice (central half of the
/// latitude rows) of an equirectangular map and area-resamples it into a
/// monitor light.
MonitorLight env_to_monitor(const EnvMap& env, double fov_deg, int out_height,
                            int out_width, const MonitorConversion& conv = {});

}  // namespace relit
