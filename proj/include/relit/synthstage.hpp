#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "relit/dataset.hpp"
#include "relit/imaging.hpp"
#include "relit/keypoints.hpp"

namespace relit {

using Rgb = std::array<float, 3>;

struct PoseParams {
  double yaw = 0.0;         ///< radians, [-0.6, 0.6]
  double pitch = 0.0;       ///< radians, [-0.4, 0.4]
  double expression = 0.0;  ///< mouth bulge amplitude, [0, 1]

  void validate() const;
  bool operator==(const PoseParams&) const = default;
};

struct MaterialParams {
  Image albedo_texture;  ///< spherical UV map of the head
  double specular_strength = 0.15;
  double shininess = 16.0;
  Rgb ambient{0.06f, 0.06f, 0.06f};

  void validate() const;
};

/// Superellipsoid head |x/a|^p + |y/b|^p + |z/c|^p = 1 with Gaussian bumps
/// for the nose, eye sockets and an expression-driven mouth bulge. The face
/// looks down +z in its local frame.
struct ProxyGeometry {
  double semi_x = 0.72;
  double semi_y = 0.95;
  double semi_z = 0.78;
  double exponent = 2.4;
  double nose_amplitude = 0.40;
  double nose_sigma = 0.16;
  double eye_amplitude = -0.18;
  double eye_sigma = 0.13;
  double mouth_amplitude = 0.35;  ///< scaled by PoseParams::expression
  double mouth_sigma = 0.15;
};

/// Orthographic camera looking down -z at the head; the monitor is a plane
/// at z = monitor_distance facing the head, one point emitter per monitor
/// pixel. Monitor column 0 sits on the image's left.
struct StageGeometry {
  ProxyGeometry head;
  double view_extent = 1.1;  ///< half-width of the image in world units
  double monitor_distance = 2.2;
  double monitor_width = 3.2;
  double monitor_height = 1.6;
  double monitor_center_y = 0.1;
  float background = 0.2f;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

/// Ray-cast sample of the posed proxy at one image pixel.
struct SurfaceHit {
  bool hit = false;
  Vec3 position;  ///< world space
  Vec3 normal;    ///< world space, unit length
  Vec3 local;     ///< head frame
};

/// Implicit function of the unposed head; negative inside.
double proxy_implicit(const ProxyGeometry& g, double expression, const Vec3& local);

/// Ray-casts every pixel of a res x res frame, row-major.
std::vector<SurfaceHit> trace_proxy(const PoseParams& pose, int res,
                                    const StageGeometry& stage = {});

/// World position of the emitter for monitor pixel (row, col).
Vec3 emitter_position(int row, int col, int monitor_height, int monitor_width,
                      const StageGeometry& stage = {});

/// Scale such that a uniform white monitor gives diffuse 0.8 at the frontal
/// apex of the unposed head.
double diffuse_normalizer(int monitor_height, int monitor_width, const StageGeometry& stage = {});

/// Closed-form shading of the proxy under a monitor light.
Image render_proxy(const PoseParams& pose, const MonitorLight& light, const MaterialParams& mat,
                   int res, const StageGeometry& stage = {});

/// Number of landmarks produced by keypoints_of.
inline constexpr int kLandmarkCount = 14;

/// Orthographic projection of fixed head landmarks, normalized to [0,1].
KeypointVector keypoints_of(const PoseParams& pose, const StageGeometry& stage = {});

/// Default skin/hair/eyes/lips albedo texture.
Image default_albedo_texture(int size = 64);

/// Room light presets: neutral, warm, cool, dim.
std::array<Rgb, 4> ambient_presets();

// ---------------------------------------------------------------------------
// Procedural monitor content
// ---------------------------------------------------------------------------

MonitorLight solid_light(int h, int w, const Rgb& color);

/// Soft-edged disk (center and radius in units of the monitor width) over a
/// solid background.
MonitorLight disk_light(int h, int w, const Rgb& base, double cu, double cv, double radius,
                        const Rgb& disk);

/// Sum of random low-frequency cosines per channel, remapped to [0,1].
MonitorLight noise_light(int h, int w, std::uint64_t seed);

/// Sky/ground gradient with one sun lobe; HDR, values >= 0.
EnvMap procedural_envmap(int height, std::uint64_t seed);

enum class LightKind { Solid, Disk, Noise, EnvCrop };

/// Draws one independent random light of the given kind.
MonitorLight sample_light(LightKind kind, int h, int w, std::mt19937_64& rng,
                          double env_fov_deg = 180.0);

/// Smoothly animated monitor content with occasional hard cuts.
class LightScript {
 public:
  LightScript(int h, int w, int frames, std::uint64_t seed);
  MonitorLight at(int frame) const;

 private:
  struct Segment {
    int start = 0;
    int kind = 0;  ///< 0 disk, 1 noise, 2 panning env crop, 3 solid
    Rgb base_a{}, base_b{}, disk{};
    double period_base = 10, period_u = 10, period_v = 10;
    double phase_base = 0, phase_u = 0, phase_v = 0;
    double radius = 0.25;
    double noise_weight = 0.0;
    std::uint64_t noise_seed = 0;
  };
  const Segment& segment_for(int frame) const;

  int h_, w_;
  std::vector<Segment> segments_;
};

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::filesystem::path root;
  int n_sequences = 8;
  int n_holdout = 1;
  int frames_per_sequence = 72;
  int resolution = 64;
  int monitor_height = kDefaultMonitorHeight;
  int monitor_width = kDefaultMonitorWidth;
  int pose_period = 12;       ///< frames between pose revisits
  double pose_jitter = 0.004; ///< per-frame pose noise, radians
  int grid_poses = 9;
  int grid_lights = 9;
  double grid_pose_scale = 0.8;  ///< grid poses drawn from this fraction of the pose box
  double env_fraction = 0.25;    ///< share of grid lights taken from env-map crops
  double env_fov_deg = 180.0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Renders every sequence plus the 9x9 evaluation grid, writes the frames
/// and lights under cfg.root and finally the manifest.
DatasetManifest gen_dataset(const SynthConfig& cfg, const StageGeometry& stage = {});

/// A fixed-pose clip whose monitor flips between a few random lights. The
/// camera integrates over the monitor refresh, so frame t is lit by
/// (1 - latency) * L_t + latency * L_{t-1} while L_t is the recorded light.
struct FlickerConfig {
  int frames = 60;
  int resolution = 64;
  int monitor_height = kDefaultMonitorHeight;
  int monitor_width = kDefaultMonitorWidth;
  int distinct_lights = 4;
  int min_hold = 1;  ///< frames a light stays on screen
  int max_hold = 3;
  double latency = 0.4;
  PoseParams pose{0.1, 0.05, 0.2};
  double sway = 0.01;  ///< amplitude of slow yaw sway, radians
  std::uint64_t seed = 7;

  void validate() const;
};

struct FlickerVideo {
  std::vector<Image> frames;
  std::vector<MonitorLight> lights;  ///< recorded source light per frame
};

FlickerVideo flicker_video(const FlickerConfig& cfg, const StageGeometry& stage = {});

}  // namespace relit
