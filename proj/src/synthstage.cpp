#include "relit/synthstage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "relit/error.hpp"
#include "relit/pairing.hpp"

namespace relit {

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 normalized(Vec3 a) {
  const double n = std::sqrt(dot(a, a));
  return n > 0 ? (1.0 / n) * a : a;
}

// Head orientation: R = Ry(yaw) * Rx(pitch); world = R * local.
struct Rotation {
  double m[3][3];

  explicit Rotation(const PoseParams& pose) {
    const double cy = std::cos(pose.yaw), sy = std::sin(pose.yaw);
    const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
    // Ry * Rx
    m[0][0] = cy;  m[0][1] = sy * sp;  m[0][2] = sy * cp;
    m[1][0] = 0;   m[1][1] = cp;       m[1][2] = -sp;
    m[2][0] = -sy; m[2][1] = cy * sp;  m[2][2] = cy * cp;
  }
  Vec3 apply(Vec3 v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
  Vec3 inverse(Vec3 v) const {
    return {m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z};
  }
};

struct Bump {
  Vec3 center;
  double amplitude;
  double sigma;
};

// z of the bare superellipsoid front surface at (x, y)
double base_front_z(const ProxyGeometry& g, double x, double y) {
  const double r = 1.0 - std::pow(std::abs(x / g.semi_x), g.exponent) -
                   std::pow(std::abs(y / g.semi_y), g.exponent);
  return r > 0 ? g.semi_z * std::pow(r, 1.0 / g.exponent) : 0.0;
}

std::array<Bump, 4> bumps(const ProxyGeometry& g, double expression) {
  return {{
      {{0.0, -0.05, base_front_z(g, 0.0, -0.05)}, g.nose_amplitude, g.nose_sigma},
      {{-0.30, 0.26, base_front_z(g, -0.30, 0.26)}, g.eye_amplitude, g.eye_sigma},
      {{0.30, 0.26, base_front_z(g, 0.30, 0.26)}, g.eye_amplitude, g.eye_sigma},
      {{0.0, -0.50, base_front_z(g, 0.0, -0.50)}, g.mouth_amplitude * expression, g.mouth_sigma},
  }};
}

double implicit_with(const ProxyGeometry& g, const std::array<Bump, 4>& bs, const Vec3& q) {
  double f = std::pow(std::abs(q.x / g.semi_x), g.exponent) +
             std::pow(std::abs(q.y / g.semi_y), g.exponent) +
             std::pow(std::abs(q.z / g.semi_z), g.exponent) - 1.0;
  for (const auto& b : bs) {
    const Vec3 d = q - b.center;
    f -= b.amplitude * std::exp(-dot(d, d) / (b.sigma * b.sigma));
  }
  return f;
}

Vec3 implicit_gradient(const ProxyGeometry& g, const std::array<Bump, 4>& bs, const Vec3& q) {
  auto axis = [&](double v, double s) {
    const double a = std::abs(v / s);
    const double sign = v < 0 ? -1.0 : 1.0;
    return g.exponent * std::pow(a, g.exponent - 1.0) * sign / s;
  };
  Vec3 grad{axis(q.x, g.semi_x), axis(q.y, g.semi_y), axis(q.z, g.semi_z)};
  for (const auto& b : bs) {
    const Vec3 d = q - b.center;
    const double s2 = b.sigma * b.sigma;
    const double e = b.amplitude * std::exp(-dot(d, d) / s2);
    grad = grad + (2.0 * e / s2) * d;
  }
  return grad;
}

constexpr double kBoundRadius = 1.5;
constexpr int kMarchSteps = 160;
constexpr int kBisectSteps = 50;

// First crossing of the implicit surface along o + t d with |d| = 1.
bool intersect(const ProxyGeometry& g, const std::array<Bump, 4>& bs, Vec3 o, Vec3 d, Vec3& out) {
  const double b = dot(o, d);
  const double c = dot(o, o) - kBoundRadius * kBoundRadius;
  const double disc = b * b - c;
  if (disc <= 0) return false;
  const double t0 = -b - std::sqrt(disc);
  const double t1 = -b + std::sqrt(disc);
  const double dt = (t1 - t0) / kMarchSteps;
  double prev_t = t0;
  for (int i = 1; i <= kMarchSteps; ++i) {
    const double t = t0 + i * dt;
    if (implicit_with(g, bs, o + t * d) < 0.0) {
      double lo = prev_t, hi = t;
      for (int k = 0; k < kBisectSteps; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (implicit_with(g, bs, o + mid * d) < 0.0) hi = mid;
        else lo = mid;
      }
      out = o + hi * d;
      return true;
    }
    prev_t = t;
  }
  return false;
}

float sample_bilinear(const Image& tex, double u, double v, int c) {
  const double x = std::clamp(u * tex.width() - 0.5, 0.0, tex.width() - 1.0);
  const double y = std::clamp(v * tex.height() - 0.5, 0.0, tex.height() - 1.0);
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, tex.width() - 1), y1 = std::min(y0 + 1, tex.height() - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = tex(y0, x0, c) + fx * (tex(y0, x1, c) - tex(y0, x0, c));
  const double bot = tex(y1, x0, c) + fx * (tex(y1, x1, c) - tex(y1, x0, c));
  return static_cast<float>(top + fy * (bot - top));
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Rgb random_rgb(std::mt19937_64& rng, double lo, double hi) {
  return {static_cast<float>(uniform(rng, lo, hi)), static_cast<float>(uniform(rng, lo, hi)),
          static_cast<float>(uniform(rng, lo, hi))};
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

MonitorLight noise_field(int h, int w, std::uint64_t seed, double shift) {
  std::mt19937_64 rng(seed);
  MonitorLight out(h, w);
  for (int c = 0; c < 3; ++c) {
    struct Wave {
      double fx, fy, phase, amp;
    };
    std::array<Wave, 3> waves{};
    const double offset = uniform(rng, 0.25, 0.55);
    for (auto& wv : waves) {
      wv.fx = uniform(rng, -3.0, 3.0);
      wv.fy = uniform(rng, -1.5, 1.5);
      wv.phase = uniform(rng, 0.0, 2 * kPi);
      wv.amp = uniform(rng, 0.05, 0.2);
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double u = (x + 0.5) / w, v = (y + 0.5) / h;
        double val = offset;
        for (const auto& wv : waves)
          val += wv.amp * std::cos(2 * kPi * (wv.fx * u + wv.fy * v) + wv.phase + shift);
        out(y, x, c) = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
  return out;
}

// Rolls the panorama so that longitude `deg` becomes the forward direction.
EnvMap roll_envmap(const EnvMap& env, double deg) {
  EnvMap out(env.height(), env.width());
  const int w = env.width();
  const int shift = static_cast<int>(std::lround(deg / 360.0 * w));
  for (int y = 0; y < env.height(); ++y)
    for (int x = 0; x < w; ++x) {
      const int sx = ((x + shift) % w + w) % w;
      for (int c = 0; c < 3; ++c) out(y, x, c) = env(y, sx, c);
    }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::mt19937_64 rng(seq);
  return rng();
}

}  // namespace

void PoseParams::validate() const {
  if (!(std::abs(yaw) <= 0.6 && std::abs(pitch) <= 0.4 && expression >= 0.0 && expression <= 1.0))
    throw InvalidArgument("pose outside yaw [-0.6,0.6], pitch [-0.4,0.4], expression [0,1]");
}

void MaterialParams::validate() const {
  if (albedo_texture.empty()) throw InvalidArgument("material needs an albedo texture");
  albedo_texture.check_range();
  if (!(specular_strength >= 0.0) || !(shininess >= 1.0))
    throw InvalidArgument("specular strength must be >= 0 and shininess >= 1");
  for (float a : ambient)
    if (!(a >= 0.0f && a <= 1.0f)) throw InvalidArgument("ambient must be in [0,1]");
}

double proxy_implicit(const ProxyGeometry& g, double expression, const Vec3& local) {
  return implicit_with(g, bumps(g, expression), local);
}

std::vector<SurfaceHit> trace_proxy(const PoseParams& pose, int res, const StageGeometry& stage) {
  pose.validate();
  if (res < 1) throw InvalidArgument("resolution must be positive");
  const Rotation rot(pose);
  const auto bs = bumps(stage.head, pose.expression);
  const Vec3 dir_local = rot.inverse({0.0, 0.0, -1.0});

  std::vector<SurfaceHit> hits(static_cast<std::size_t>(res) * res);
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const double wx = ((j + 0.5) / res * 2.0 - 1.0) * stage.view_extent;
      const double wy = (1.0 - (i + 0.5) / res * 2.0) * stage.view_extent;
      const Vec3 origin_local = rot.inverse({wx, wy, 4.0});
      Vec3 q;
      auto& h = hits[static_cast<std::size_t>(i) * res + j];
      if (!intersect(stage.head, bs, origin_local, dir_local, q)) continue;
      h.hit = true;
      h.local = q;
      h.position = rot.apply(q);
      h.normal = normalized(rot.apply(implicit_gradient(stage.head, bs, q)));
    }
  }
  return hits;
}

Vec3 emitter_position(int row, int col, int monitor_height, int monitor_width,
                      const StageGeometry& stage) {
  return {((col + 0.5) / monitor_width - 0.5) * stage.monitor_width,
          stage.monitor_center_y + (0.5 - (row + 0.5) / monitor_height) * stage.monitor_height,
          stage.monitor_distance};
}

double diffuse_normalizer(int monitor_height, int monitor_width, const StageGeometry& stage) {
  Vec3 apex;
  const auto bs = bumps(stage.head, 0.0);
  if (!intersect(stage.head, bs, {0.0, 0.0, 4.0}, {0.0, 0.0, -1.0}, apex))
    throw InvalidArgument("degenerate head geometry");
  const Vec3 n{0.0, 0.0, 1.0};
  double sum = 0.0;
  for (int r = 0; r < monitor_height; ++r)
    for (int c = 0; c < monitor_width; ++c) {
      const Vec3 d = emitter_position(r, c, monitor_height, monitor_width, stage) - apex;
      const double d2 = dot(d, d);
      sum += std::max(0.0, dot(n, normalized(d))) / d2;
    }
  return 0.8 / sum;
}

Image render_proxy(const PoseParams& pose, const MonitorLight& light, const MaterialParams& mat,
                   int res, const StageGeometry& stage) {
  mat.validate();
  light.check_range();
  const int mh = light.height(), mw = light.width();
  const double k_norm = diffuse_normalizer(mh, mw, stage);
  std::vector<Vec3> emitters;
  emitters.reserve(static_cast<std::size_t>(mh) * mw);
  for (int r = 0; r < mh; ++r)
    for (int c = 0; c < mw; ++c) emitters.push_back(emitter_position(r, c, mh, mw, stage));

  const auto hits = trace_proxy(pose, res, stage);
  const Vec3 view{0.0, 0.0, 1.0};
  Image out(res, res, stage.background);
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const auto& h = hits[static_cast<std::size_t>(i) * res + j];
      if (!h.hit) continue;
      std::array<double, 3> diffuse{}, specular{};
      for (std::size_t e = 0; e < emitters.size(); ++e) {
        const Vec3 d = emitters[e] - h.position;
        const double d2 = dot(d, d);
        const Vec3 w = normalized(d);
        const double cos_term = std::max(0.0, dot(h.normal, w)) / d2;
        const double n_h = std::max(0.0, dot(h.normal, normalized(w + view)));
        const double spec = n_h > 0 ? std::pow(n_h, mat.shininess) : 0.0;
        const int r = static_cast<int>(e) / mw, c = static_cast<int>(e) % mw;
        for (int ch = 0; ch < 3; ++ch) {
          const double l = light(r, c, ch);
          diffuse[ch] += l * cos_term;
          specular[ch] += l * spec;
        }
      }
      const double u = 0.5 + std::atan2(h.local.x, h.local.z) / (2 * kPi);
      const double v = std::acos(std::clamp(h.local.y / stage.head.semi_y, -1.0, 1.0)) / kPi;
      for (int ch = 0; ch < 3; ++ch) {
        const double albedo = sample_bilinear(mat.albedo_texture, u, v, ch);
        const double color = mat.ambient[ch] * albedo + albedo * k_norm * diffuse[ch] +
                             mat.specular_strength * k_norm * specular[ch];
        out(i, j, ch) = static_cast<float>(std::clamp(color, 0.0, 1.0));
      }
    }
  }
  return out;
}

KeypointVector keypoints_of(const PoseParams& pose, const StageGeometry& stage) {
  pose.validate();
  const double e = pose.expression;
  // left/right pairs are adjacent: (0,1) (2,3) (4,5) (7,8) (9,10)
  const std::array<std::array<double, 2>, kLandmarkCount> marks{{
      {-0.42, 0.27}, {0.42, 0.27},                       // outer eye corners
      {-0.17, 0.27}, {0.17, 0.27},                       // inner eye corners
      {-0.30, 0.48}, {0.30, 0.48},                       // brows
      {0.0, -0.05},                                      // nose tip
      {-0.12, -0.18}, {0.12, -0.18},                     // nostrils
      {-(0.24 + 0.04 * e), -0.50}, {0.24 + 0.04 * e, -0.50},  // mouth corners
      {0.0, -0.42},                                      // upper lip
      {0.0, -0.58 - 0.08 * e},                           // lower lip
      {0.0, -0.84},                                      // chin
  }};
  const auto bs = bumps(stage.head, e);
  const Rotation rot(pose);
  KeypointVector kp;
  kp.coords.reserve(2 * kLandmarkCount);
  for (const auto& m : marks) {
    Vec3 q;
    if (!intersect(stage.head, bs, {m[0], m[1], 4.0}, {0.0, 0.0, -1.0}, q))
      q = {m[0], m[1], 0.0};
    const Vec3 w = rot.apply(q);
    kp.coords.push_back((w.x / stage.view_extent + 1.0) / 2.0);
    kp.coords.push_back((1.0 - w.y / stage.view_extent) / 2.0);
  }
  return kp;
}

Image default_albedo_texture(int size) {
  Image tex(size, size);
  auto ellipse = [](double dx, double dy, double rx, double ry) {
    return (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry);
  };
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double u = (j + 0.5) / size, v = (i + 0.5) / size;
      const double theta = (u - 0.5) * 2 * kPi;
      const double yv = std::cos(v * kPi);
      Rgb c{static_cast<float>(0.80 - 0.06 * yv), static_cast<float>(0.60 - 0.05 * yv),
            static_cast<float>(0.50 - 0.04 * yv)};
      if (yv > 0.62 || std::abs(theta) > 1.7) c = {0.22f, 0.15f, 0.10f};
      else if (std::abs(yv - 0.52) < 0.04 && std::abs(theta) > 0.15 && std::abs(theta) < 0.65)
        c = {0.30f, 0.20f, 0.15f};
      else if (ellipse(std::abs(theta) - 0.40, yv - 0.28, 0.13, 0.06) < 1.0) {
        c = ellipse(std::abs(theta) - 0.40, yv - 0.28, 0.05, 0.05) < 1.0 ? Rgb{0.20f, 0.14f, 0.10f}
                                                                         : Rgb{0.90f, 0.90f, 0.88f};
      } else if (ellipse(theta, yv + 0.53, 0.26, 0.06) < 1.0)
        c = {0.72f, 0.32f, 0.32f};
      for (int ch = 0; ch < 3; ++ch) tex(i, j, ch) = c[ch];
    }
  }
  return tex;
}

std::array<Rgb, 4> ambient_presets() {
  return {{{0.06f, 0.06f, 0.06f}, {0.09f, 0.07f, 0.05f}, {0.05f, 0.06f, 0.09f},
           {0.03f, 0.03f, 0.03f}}};
}

MonitorLight solid_light(int h, int w, const Rgb& color) {
  MonitorLight out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out(y, x, c) = std::clamp(color[c], 0.0f, 1.0f);
  return out;
}

MonitorLight disk_light(int h, int w, const Rgb& base, double cu, double cv, double radius,
                        const Rgb& disk) {
  MonitorLight out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = (x + 0.5) / w - cu;
      const double dy = ((y + 0.5) / h - cv) * h / w;
      const double dist = std::sqrt(dx * dx + dy * dy);
      const double a = 1.0 - smoothstep(0.75 * radius, radius, dist);
      for (int c = 0; c < 3; ++c)
        out(y, x, c) = static_cast<float>(std::clamp(base[c] + a * (disk[c] - base[c]), 0.0, 1.0));
    }
  }
  return out;
}

MonitorLight noise_light(int h, int w, std::uint64_t seed) { return noise_field(h, w, seed, 0.0); }

EnvMap procedural_envmap(int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EnvMap env(height, 2 * height);
  const Rgb zenith = random_rgb(rng, 0.05, 0.6);
  const Rgb horizon = random_rgb(rng, 0.3, 1.0);
  const Rgb ground = random_rgb(rng, 0.02, 0.3);
  const Rgb sun = random_rgb(rng, 0.6, 1.0);
  const double sun_lon = uniform(rng, -100.0, 100.0) * kPi / 180.0;
  const double sun_lat = uniform(rng, -5.0, 40.0) * kPi / 180.0;
  const double sun_gain = uniform(rng, 4.0, 25.0);
  const double sun_width = uniform(rng, 0.08, 0.25);
  const Vec3 sun_dir{std::cos(sun_lat) * std::sin(sun_lon), std::sin(sun_lat),
                     std::cos(sun_lat) * std::cos(sun_lon)};
  for (int y = 0; y < env.height(); ++y) {
    const double lat = kPi / 2 - (y + 0.5) / env.height() * kPi;
    for (int x = 0; x < env.width(); ++x) {
      const double lon = (x + 0.5) / env.width() * 2 * kPi - kPi;
      const Vec3 dir{std::cos(lat) * std::sin(lon), std::sin(lat), std::cos(lat) * std::cos(lon)};
      const double ang = std::acos(std::clamp(dot(dir, sun_dir), -1.0, 1.0));
      const double lobe = sun_gain * std::exp(-(ang * ang) / (sun_width * sun_width));
      for (int c = 0; c < 3; ++c) {
        double base;
        if (lat >= 0) base = horizon[c] + (zenith[c] - horizon[c]) * std::sin(lat);
        else base = ground[c];
        env(y, x, c) = static_cast<float>(base + lobe * sun[c]);
      }
    }
  }
  return env;
}

MonitorLight sample_light(LightKind kind, int h, int w, std::mt19937_64& rng, double env_fov_deg) {
  switch (kind) {
    case LightKind::Solid: return solid_light(h, w, random_rgb(rng, 0.05, 1.0));
    case LightKind::Disk: {
      const Rgb base = random_rgb(rng, 0.0, 0.5);
      const Rgb disk = random_rgb(rng, 0.5, 1.0);
      const double cu = uniform(rng, 0.1, 0.9), cv = uniform(rng, 0.15, 0.85);
      return disk_light(h, w, base, cu, cv, uniform(rng, 0.12, 0.35), disk);
    }
    case LightKind::Noise: return noise_light(h, w, rng());
    case LightKind::EnvCrop: {
      const EnvMap env = procedural_envmap(32, rng());
      return env_to_monitor(env, env_fov_deg, h, w);
    }
  }
  return solid_light(h, w, {0.5f, 0.5f, 0.5f});
}

// ---------------------------------------------------------------------------
// LightScript
// ---------------------------------------------------------------------------

LightScript::LightScript(int h, int w, int frames, std::uint64_t seed) : h_(h), w_(w) {
  std::mt19937_64 rng(seed);
  int start = 0;
  while (start < std::max(frames, 1)) {
    Segment s;
    s.start = start;
    s.kind = static_cast<int>(std::uniform_int_distribution<int>(0, 3)(rng));
    s.base_a = random_rgb(rng, 0.05, 0.7);
    s.base_b = random_rgb(rng, 0.05, 0.7);
    s.disk = random_rgb(rng, 0.5, 1.0);
    s.period_base = uniform(rng, 6.0, 20.0);
    s.period_u = uniform(rng, 6.0, 20.0);
    s.period_v = uniform(rng, 6.0, 20.0);
    s.phase_base = uniform(rng, 0.0, 2 * kPi);
    s.phase_u = uniform(rng, 0.0, 2 * kPi);
    s.phase_v = uniform(rng, 0.0, 2 * kPi);
    s.radius = uniform(rng, 0.12, 0.35);
    s.noise_weight = uniform(rng, 0.0, 1.0) < 0.3 ? uniform(rng, 0.2, 0.6) : 0.0;
    s.noise_seed = rng();
    segments_.push_back(s);
    start += std::uniform_int_distribution<int>(10, 24)(rng);
  }
}

const LightScript::Segment& LightScript::segment_for(int frame) const {
  const Segment* seg = &segments_.front();
  for (const auto& s : segments_)
    if (s.start <= frame) seg = &s;
  return *seg;
}

MonitorLight LightScript::at(int frame) const {
  const Segment& s = segment_for(frame);
  const double t = frame;
  const double m = 0.5 + 0.5 * std::sin(2 * kPi * t / s.period_base + s.phase_base);
  Rgb base;
  for (int c = 0; c < 3; ++c) base[c] = static_cast<float>(s.base_a[c] + m * (s.base_b[c] - s.base_a[c]));
  const double cu = 0.5 + 0.38 * std::sin(2 * kPi * t / s.period_u + s.phase_u);
  const double cv = 0.5 + 0.30 * std::sin(2 * kPi * t / s.period_v + s.phase_v);

  MonitorLight out;
  switch (s.kind) {
    case 0: out = disk_light(h_, w_, base, cu, cv, s.radius, s.disk); break;
    case 1: out = noise_field(h_, w_, s.noise_seed, 2 * kPi * t / s.period_u); break;
    case 2: {
      const EnvMap env = procedural_envmap(32, s.noise_seed);
      out = env_to_monitor(roll_envmap(env, 60.0 * std::sin(2 * kPi * t / s.period_u + s.phase_u)),
                           180.0, h_, w_);
      break;
    }
    default: out = solid_light(h_, w_, base); break;
  }
  if (s.noise_weight > 0.0 && s.kind != 1) {
    const MonitorLight noise = noise_field(h_, w_, s.noise_seed, 2 * kPi * t / s.period_v);
    for (std::size_t i = 0; i < out.size(); ++i)
      out.values()[i] = static_cast<float>((1.0 - s.noise_weight) * out.values()[i] +
                                           s.noise_weight * noise.values()[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  if (n_sequences < 1 || n_holdout < 0 || n_holdout >= n_sequences)
    throw InvalidArgument("synth: need n_sequences >= 1 and 0 <= n_holdout < n_sequences");
  if (frames_per_sequence < 1 || resolution < 1 || monitor_height < 1 || monitor_width < 1)
    throw InvalidArgument("synth: sizes must be positive");
  if (pose_period < 1 || grid_poses < 0 || grid_lights < 0 || pose_jitter < 0)
    throw InvalidArgument("synth: invalid pose or grid parameters");
  if (!(env_fraction >= 0.0 && env_fraction <= 1.0) || !(grid_pose_scale > 0 && grid_pose_scale <= 1))
    throw InvalidArgument("synth: fractions must be in [0,1]");
}

namespace {

std::string frame_name(const char* stem, int t) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06d.png", stem, t);
  return buf;
}

}  // namespace

DatasetManifest gen_dataset(const SynthConfig& cfg, const StageGeometry& stage) {
  cfg.validate();
  if (cfg.root.empty()) throw InvalidArgument("synth: output root is required");
  std::error_code ec;
  std::filesystem::create_directories(cfg.root, ec);
  if (ec) throw IoError("cannot create " + cfg.root.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.root = cfg.root;
  manifest.meta = {cfg.resolution, cfg.monitor_height, cfg.monitor_width, cfg.seed};

  MaterialParams mat;
  mat.albedo_texture = default_albedo_texture();
  const auto presets = ambient_presets();

  std::mt19937_64 top(mix_seed(cfg.seed, 0));
  std::vector<int> order(cfg.n_sequences);
  for (int i = 0; i < cfg.n_sequences; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), top);
  std::vector<bool> held_out(cfg.n_sequences, false);
  for (int i = 0; i < cfg.n_holdout; ++i) held_out[order[i]] = true;

  auto emit = [&](const std::string& seq, int t, Split split, const PoseParams& pose,
                  const MonitorLight& light) {
    const std::filesystem::path dir = cfg.root / seq;
    std::filesystem::create_directories(dir);
    FrameRecord rec;
    rec.seq_id = seq;
    rec.timestamp = t;
    rec.split = split;
    rec.image_path = std::filesystem::path(seq) / frame_name("frame", t);
    rec.light_path = std::filesystem::path(seq) / frame_name("light", t);
    rec.pose = {pose.yaw, pose.pitch, pose.expression};
    rec.keypoints = keypoints_of(pose, stage);
    save_image(render_proxy(pose, light, mat, cfg.resolution, stage), cfg.root / rec.image_path);
    save_monitor_light(light, cfg.root / rec.light_path);
    manifest.frames.push_back(std::move(rec));
  };

  for (int s = 0; s < cfg.n_sequences; ++s) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 100 + s));
    char seq[16];
    std::snprintf(seq, sizeof(seq), "seq_%02d", s);
    const double amp_yaw = uniform(rng, 0.25, 0.55);
    const double amp_pitch = uniform(rng, 0.10, 0.32);
    const double ph_yaw = uniform(rng, 0, 2 * kPi);
    const double ph_pitch = uniform(rng, 0, 2 * kPi);
    const double ph_expr = uniform(rng, 0, 2 * kPi);
    const LightScript script(cfg.monitor_height, cfg.monitor_width, cfg.frames_per_sequence, rng());
    std::normal_distribution<double> jitter(0.0, cfg.pose_jitter > 0 ? cfg.pose_jitter : 1.0);
    mat.ambient = presets[s % presets.size()];
    for (int t = 0; t < cfg.frames_per_sequence; ++t) {
      const double phase = 2 * kPi * t / cfg.pose_period;
      const double jy = cfg.pose_jitter > 0 ? jitter(rng) : 0.0;
      const double jp = cfg.pose_jitter > 0 ? jitter(rng) : 0.0;
      PoseParams pose;
      pose.yaw = std::clamp(amp_yaw * std::sin(phase + ph_yaw) + jy, -0.6, 0.6);
      pose.pitch = std::clamp(amp_pitch * std::sin(2 * phase + ph_pitch) + jp, -0.4, 0.4);
      pose.expression = std::clamp(0.5 + 0.5 * std::sin(phase + ph_expr), 0.0, 1.0);
      emit(seq, t, held_out[s] ? Split::Test : Split::Train, pose, script.at(t));
    }
  }

  if (cfg.grid_poses > 0 && cfg.grid_lights > 0) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 7));
    mat.ambient = presets[0];
    int t = 0;
    for (int p = 0; p < cfg.grid_poses; ++p) {
      PoseParams pose;
      pose.yaw = uniform(rng, -0.6, 0.6) * cfg.grid_pose_scale;
      pose.pitch = uniform(rng, -0.4, 0.4) * cfg.grid_pose_scale;
      pose.expression = uniform(rng, 0.0, 1.0);
      std::vector<MonitorLight> lights;
      while (static_cast<int>(lights.size()) < cfg.grid_lights) {
        LightKind kind;
        if (uniform(rng, 0.0, 1.0) < cfg.env_fraction) kind = LightKind::EnvCrop;
        else kind = static_cast<LightKind>(std::uniform_int_distribution<int>(0, 2)(rng));
        MonitorLight candidate = sample_light(kind, cfg.monitor_height, cfg.monitor_width, rng,
                                              cfg.env_fov_deg);
        // keep lights within one pose clearly distinct
        bool distinct = true;
        for (const auto& l : lights) distinct = distinct && light_rmse(l, candidate) >= 0.08;
        if (distinct) lights.push_back(std::move(candidate));
      }
      for (const auto& l : lights) emit("grid", t++, Split::Grid, pose, l);
    }
  }

  const auto tmp = cfg.root / "manifest.tmp";
  write_manifest(manifest, tmp);
  std::filesystem::rename(tmp, cfg.root / "manifest");
  return manifest;
}

void FlickerConfig::validate() const {
  if (frames < 2 || resolution < 1 || monitor_height < 1 || monitor_width < 1)
    throw InvalidArgument("flicker: need >= 2 frames and positive sizes");
  if (distinct_lights < 2) throw InvalidArgument("flicker: need at least 2 distinct lights");
  if (min_hold < 1 || max_hold < min_hold) throw InvalidArgument("flicker: need 1 <= min_hold <= max_hold");
  if (!(latency >= 0.0 && latency <= 1.0)) throw InvalidArgument("flicker: latency must lie in [0,1]");
  if (sway < 0) throw InvalidArgument("flicker: sway must be >= 0");
  pose.validate();
}

FlickerVideo flicker_video(const FlickerConfig& cfg, const StageGeometry& stage) {
  cfg.validate();
  std::mt19937_64 rng(mix_seed(cfg.seed, 11));
  std::vector<MonitorLight> palette;
  while (static_cast<int>(palette.size()) < cfg.distinct_lights) {
    const auto kind = static_cast<LightKind>(std::uniform_int_distribution<int>(0, 2)(rng));
    auto candidate = sample_light(kind, cfg.monitor_height, cfg.monitor_width, rng);
    bool distinct = true;
    for (const auto& l : palette) distinct = distinct && light_rmse(l, candidate) >= 0.1;
    if (distinct) palette.push_back(std::move(candidate));
  }

  MaterialParams mat;
  mat.albedo_texture = default_albedo_texture();
  mat.ambient = ambient_presets()[0];

  FlickerVideo video;
  std::uniform_int_distribution<int> hold(cfg.min_hold, cfg.max_hold);
  std::uniform_int_distribution<int> pick(0, cfg.distinct_lights - 2);
  int current = 0, remaining = hold(rng);
  for (int t = 0; t < cfg.frames; ++t) {
    if (remaining == 0) {
      const int next = pick(rng);
      current = next >= current ? next + 1 : next;  // always a different light
      remaining = hold(rng);
    }
    --remaining;
    video.lights.push_back(palette[current]);
  }
  for (int t = 0; t < cfg.frames; ++t) {
    const auto& now = video.lights[t];
    const auto& before = video.lights[t > 0 ? t - 1 : 0];
    MonitorLight seen(now.height(), now.width());
    for (std::size_t i = 0; i < seen.size(); ++i)
      seen.values()[i] = static_cast<float>((1.0 - cfg.latency) * now.values()[i] + cfg.latency * before.values()[i]);
    PoseParams pose = cfg.pose;
    pose.yaw = std::clamp(pose.yaw + cfg.sway * std::sin(2 * kPi * t / 40.0), -0.6, 0.6);
    video.frames.push_back(render_proxy(pose, seen, mat, cfg.resolution, stage));
  }
  return video;
}

}  // namespace relit
