#include "relit/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace relit {

template <class Tag>
Raster<Tag>::Raster(int height, int width, float fill) : height_(height), width_(width) {
  if (height < 1 || width < 1)
    throw InvalidArgument("raster dimensions must be positive, got " + std::to_string(height) +
                          "x" + std::to_string(width));
  data_.assign(static_cast<std::size_t>(height) * width * kChannels, fill);
}

template <class Tag>
void Raster<Tag>::check_range() const {
  for (float v : data_) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
      throw InvalidArgument("raster value outside [0,1]: " + std::to_string(v));
  }
}

template class Raster<ImageTag>;
template class Raster<MonitorTag>;

EnvMap::EnvMap(int height, int width, float fill) : height_(height), width_(width) {
  if (height < 1 || width != 2 * height)
    throw InvalidArgument("environment map must be H x 2H, got " + std::to_string(height) + "x" +
                          std::to_string(width));
  data_.assign(static_cast<std::size_t>(height) * width * 3, fill);
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

namespace {

template <class Tag>
Raster<Tag> read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot decode " + path.string() + ": " + image.message);

  const auto fmt = image.format;
  const bool color = fmt & PNG_FORMAT_FLAG_COLOR;
  const bool alpha = fmt & PNG_FORMAT_FLAG_ALPHA;
  const bool wide = fmt & PNG_FORMAT_FLAG_LINEAR;
  if (!color || alpha || wide) {
    png_image_free(&image);
    throw IoError(path.string() + " is not an 8-bit 3-channel RGB image");
  }

  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr))
    throw IoError("cannot decode " + path.string() + ": " + image.message);

  Raster<Tag> out(static_cast<int>(image.height), static_cast<int>(image.width));
  auto values = out.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = buffer[i] / 255.0f;
  return out;
}

template <class Tag>
void write_png(const Raster<Tag>& img, const std::filesystem::path& path) {
  if (img.empty()) throw InvalidArgument("cannot save an empty raster");
  std::vector<png_byte> buffer(img.size());
  auto values = img.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = std::clamp(values[i], 0.0f, 1.0f);
    buffer[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw IoError("cannot write " + path.string() + ": " + image.message);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

Image load_image(const std::filesystem::path& path) { return read_png<ImageTag>(path); }
MonitorLight load_monitor_light(const std::filesystem::path& path) {
  return read_png<MonitorTag>(path);
}
void save_image(const Image& img, const std::filesystem::path& path) { write_png(img, path); }
void save_monitor_light(const MonitorLight& light, const std::filesystem::path& path) {
  write_png(light, path);
}

EnvMap load_envmap(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("no such file: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "ENVF", 4) != 0) throw IoError(path.string() + ": bad ENVF magic");
  const auto h = get_u32(is);
  const auto w = get_u32(is);
  if (!is || h == 0 || w != 2 * h) throw IoError(path.string() + ": degenerate ENVF dimensions");

  EnvMap env(static_cast<int>(h), static_cast<int>(w));
  auto values = env.values();
  std::vector<std::uint32_t> raw(values.size());
  for (auto& r : raw) r = get_u32(is);
  if (!is) throw IoError(path.string() + ": truncated ENVF payload");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    float f;
    std::memcpy(&f, &raw[i], 4);
    if (!std::isfinite(f) || f < 0.0f) throw IoError(path.string() + ": invalid HDR value");
    values[i] = f;
  }
  return env;
}

void save_envmap(const EnvMap& env, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write("ENVF", 4);
  put_u32(os, static_cast<std::uint32_t>(env.height()));
  put_u32(os, static_cast<std::uint32_t>(env.width()));
  for (float f : env.values()) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
  }
  if (!os) throw IoError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

namespace {

struct Tap {
  int lo;
  int hi;
  float frac;
};

// align-corners-false source taps along one axis
std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    taps[i] = {lo, hi, static_cast<float>(s - lo)};
  }
  return taps;
}

float lerp(float a, float b, float t) { return a + t * (b - a); }

}  // namespace

template <class Tag>
Raster<Tag> resize_bilinear(const Raster<Tag>& img, int height, int width) {
  if (height < 1 || width < 1) throw InvalidArgument("resize target must be positive");
  if (img.empty()) throw InvalidArgument("cannot resize an empty raster");
  if (height == img.height() && width == img.width()) return img;

  const auto ty = bilinear_taps(img.height(), height);
  const auto tx = bilinear_taps(img.width(), width);
  Raster<Tag> out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float top = lerp(img(ty[y].lo, tx[x].lo, c), img(ty[y].lo, tx[x].hi, c), tx[x].frac);
        const float bot = lerp(img(ty[y].hi, tx[x].lo, c), img(ty[y].hi, tx[x].hi, c), tx[x].frac);
        out(y, x, c) = lerp(top, bot, ty[y].frac);
      }
    }
  }
  return out;
}

template Image resize_bilinear(const Image&, int, int);
template MonitorLight resize_bilinear(const MonitorLight&, int, int);

namespace {

// overlap of [a0,a1) with pixel cell [i, i+1)
double overlap(double a0, double a1, int i) {
  return std::max(0.0, std::min(a1, i + 1.0) - std::max(a0, static_cast<double>(i)));
}

double percentile(std::vector<float> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double rank = p / 100.0 * (v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (rank - lo) * (v[hi] - v[lo]);
}

}  // namespace

MonitorLight env_to_monitor(const EnvMap& env, double fov_deg, int out_height, int out_width,
                            const MonitorConversion& conv) {
  if (!(fov_deg > 0.0 && fov_deg <= 360.0))
    throw InvalidArgument("field of view must be in (0, 360], got " + std::to_string(fov_deg));
  if (env.height() < 1 || env.width() != 2 * env.height())
    throw InvalidArgument("degenerate environment map");
  if (out_height < 1 || out_width < 1) throw InvalidArgument("monitor size must be positive");
  if (!(conv.clip_percentile > 0.0 && conv.clip_percentile <= 100.0))
    throw InvalidArgument("clip percentile must be in (0, 100]");

  const double w = env.width();
  const double h = env.height();
  const double half_span = fov_deg / 360.0 * w / 2.0;
  const double x0 = w / 2.0 - half_span;
  const double x1 = w / 2.0 + half_span;
  const double y0 = h / 4.0;
  const double y1 = 3.0 * h / 4.0;

  const int px0 = static_cast<int>(std::floor(x0));
  const int px1 = static_cast<int>(std::ceil(x1));
  const int py0 = static_cast<int>(std::floor(y0));
  const int py1 = static_cast<int>(std::ceil(y1));

  double scale = 1.0;
  float clip = 1.0f;
  if (conv.normalize) {
    std::vector<float> support;
    for (int y = py0; y < py1; ++y)
      for (int x = px0; x < px1; ++x)
        for (int c = 0; c < 3; ++c) support.push_back(env(y, x, c));
    clip = static_cast<float>(percentile(std::move(support), conv.clip_percentile));
    scale = clip > 0.0f ? 1.0 / clip : 0.0;
  }

  auto tone = [&](float v) -> double {
    if (conv.normalize) return std::min(v, clip) * scale;
    return std::clamp(v, 0.0f, 1.0f);
  };

  MonitorLight out(out_height, out_width);
  const double cw = (x1 - x0) / out_width;
  const double ch = (y1 - y0) / out_height;
  for (int oy = 0; oy < out_height; ++oy) {
    const double cy0 = y0 + oy * ch;
    const double cy1 = cy0 + ch;
    for (int ox = 0; ox < out_width; ++ox) {
      const double cx0 = x0 + ox * cw;
      const double cx1 = cx0 + cw;
      std::array<double, 3> acc{};
      double area = 0.0;
      for (int y = static_cast<int>(std::floor(cy0)); y < static_cast<int>(std::ceil(cy1)); ++y) {
        const double wy = overlap(cy0, cy1, y);
        if (wy <= 0.0) continue;
        for (int x = static_cast<int>(std::floor(cx0)); x < static_cast<int>(std::ceil(cx1)); ++x) {
          const double wgt = wy * overlap(cx0, cx1, x);
          if (wgt <= 0.0) continue;
          for (int c = 0; c < 3; ++c) acc[c] += wgt * tone(env(y, x, c));
          area += wgt;
        }
      }
      for (int c = 0; c < 3; ++c)
        out(oy, ox, c) = static_cast<float>(std::clamp(acc[c] / area, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace relit
