#include "relit/model.hpp"

#include <cstring>
#include <map>
#include <sstream>

#include "relit/error.hpp"

namespace relit {

namespace F = torch::nn::functional;

namespace {

constexpr double kLeakySlope = 0.2;

torch::Tensor leaky(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeakySlope)); }

torch::Tensor resample(const torch::Tensor& x, int h, int w) {
  if (x.size(2) == h && x.size(3) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::nn::Conv2d conv(int in, int out, int kernel, int stride = 1) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ArchConfig
// ---------------------------------------------------------------------------

std::vector<int> ArchConfig::level_sizes() const {
  std::vector<int> sizes;
  int s = resolution;
  for (int stride : strides) {
    s /= stride;
    sizes.push_back(s);
  }
  return sizes;
}

void ArchConfig::validate() const {
  if (levels() < 2) throw InvalidArgument("arch: need at least 2 levels");
  if (strides.size() != widths.size()) throw InvalidArgument("arch: widths and strides differ in length");
  int prod = 1;
  for (int s : strides) {
    if (s != 1 && s != 2) throw InvalidArgument("arch: strides must be 1 or 2");
    prod *= s;
  }
  for (int w : widths)
    if (w < 1) throw InvalidArgument("arch: channel widths must be positive");
  if (resolution < 1 || resolution % prod != 0)
    throw InvalidArgument("arch: resolution must be divisible by the product of strides");
  if (light_embed_dim < 1 || light_hidden_dim < 1) throw InvalidArgument("arch: embed dim must be >= 1");
  if (monitor_height < 1 || monitor_width < 1) throw InvalidArgument("arch: monitor size must be positive");
  if (predictor_first_level < 1 || predictor_first_level > levels())
    throw InvalidArgument("arch: predictor_first_level outside [1, levels]");
  if (predictor_grid_height < 1 || predictor_grid_width < 1 || predictor_channels < 1)
    throw InvalidArgument("arch: predictor grid must be positive");
  if (disc_layers < 1 || disc_width < 1 || resolution % (1 << disc_layers) != 0)
    throw InvalidArgument("arch: resolution must be divisible by 2^disc_layers");
}

std::string ArchConfig::serialize() const {
  std::ostringstream os;
  os << "resolution=" << resolution << "\n"
     << "widths=" << join(widths) << "\n"
     << "strides=" << join(strides) << "\n"
     << "light_embed_dim=" << light_embed_dim << "\n"
     << "light_hidden_dim=" << light_hidden_dim << "\n"
     << "monitor_height=" << monitor_height << "\n"
     << "monitor_width=" << monitor_width << "\n"
     << "predictor_first_level=" << predictor_first_level << "\n"
     << "predictor_grid_height=" << predictor_grid_height << "\n"
     << "predictor_grid_width=" << predictor_grid_width << "\n"
     << "predictor_channels=" << predictor_channels << "\n"
     << "disc_layers=" << disc_layers << "\n"
     << "disc_width=" << disc_width << "\n"
     << "use_lcfn=" << use_lcfn << "\n"
     << "use_light_prediction=" << use_light_prediction << "\n";
  return os.str();
}

ArchConfig ArchConfig::deserialize(const std::string& text) {
  ArchConfig cfg;
  std::map<std::string, int*> ints{{"resolution", &cfg.resolution},
                                   {"light_embed_dim", &cfg.light_embed_dim},
                                   {"light_hidden_dim", &cfg.light_hidden_dim},
                                   {"monitor_height", &cfg.monitor_height},
                                   {"monitor_width", &cfg.monitor_width},
                                   {"predictor_first_level", &cfg.predictor_first_level},
                                   {"predictor_grid_height", &cfg.predictor_grid_height},
                                   {"predictor_grid_width", &cfg.predictor_grid_width},
                                   {"predictor_channels", &cfg.predictor_channels},
                                   {"disc_layers", &cfg.disc_layers},
                                   {"disc_width", &cfg.disc_width}};
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("arch: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (auto it = ints.find(key); it != ints.end()) *it->second = std::stoi(val);
    else if (key == "widths") cfg.widths = split_ints(val);
    else if (key == "strides") cfg.strides = split_ints(val);
    else if (key == "use_lcfn") cfg.use_lcfn = val == "1";
    else if (key == "use_light_prediction") cfg.use_light_prediction = val == "1";
    else throw InvalidArgument("arch: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

FeaturePyramid FeaturePyramid::detach() const {
  FeaturePyramid out;
  for (const auto& l : levels) out.levels.push_back(l.detach());
  return out;
}

// ---------------------------------------------------------------------------
// AdaIN
// ---------------------------------------------------------------------------

torch::Tensor adain(const torch::Tensor& features, const torch::Tensor& embedding,
                    torch::nn::Linear head) {
  const auto channels = features.size(1);
  if (head->options.out_features() != 2 * channels)
    throw InvalidArgument("adain: head produces " + std::to_string(head->options.out_features()) +
                          " values for " + std::to_string(channels) + " channels");
  const auto mean = features.mean({2, 3}, /*keepdim=*/true);
  const auto var = (features - mean).pow(2).mean({2, 3}, /*keepdim=*/true);
  const auto normalized = (features - mean) / torch::sqrt(var + kInstanceNormEps);
  const auto affine = head(embedding);
  const auto dgamma = affine.slice(1, 0, channels).unsqueeze(2).unsqueeze(3);
  const auto beta = affine.slice(1, channels, 2 * channels).unsqueeze(2).unsqueeze(3);
  return (1.0 + dgamma) * normalized + beta;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

GeneratorImpl::GeneratorImpl(ArchConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int n = cfg_.levels();
  const int d = cfg_.light_embed_dim;

  int in = 3;
  for (int l = 0; l < n; ++l) {
    encoder_.push_back(register_module("enc" + std::to_string(l),
                                       conv(in, cfg_.widths[l], 3, cfg_.strides[l])));
    in = cfg_.widths[l];
  }

  const int light_inputs = 3 * cfg_.monitor_height * cfg_.monitor_width;
  light_fc1_ = register_module("light_fc1", torch::nn::Linear(light_inputs, cfg_.light_hidden_dim));
  light_fc2_ = register_module("light_fc2", torch::nn::Linear(cfg_.light_hidden_dim, d));

  for (int l = 0; l < n; ++l)
    delight_heads_.push_back(register_module("delight" + std::to_string(l),
                                             torch::nn::Linear(d, 2 * cfg_.widths[l])));

  for (int l = 0; l < n - 1; ++l) {
    decoder_.push_back(register_module(
        "dec" + std::to_string(l), conv(cfg_.widths[l + 1] + cfg_.widths[l], cfg_.widths[l], 3)));
    relight_heads_.push_back(register_module("relight" + std::to_string(l),
                                             torch::nn::Linear(d, 2 * cfg_.widths[l])));
  }
  output_ = register_module("out", conv(cfg_.widths[0], 3, 3));

  const int pc = cfg_.predictor_channels;
  for (int l = cfg_.predictor_first_level - 1; l < n; ++l) {
    predictor_proj_.push_back(
        register_module("lp_proj" + std::to_string(l), conv(cfg_.widths[l], pc, 1)));
    predictor_conf_.push_back(
        register_module("lp_conf" + std::to_string(l), conv(cfg_.widths[l], 1, 1)));
  }
  fuse1_ = register_module("lp_fuse1", conv(pc, pc, 3));
  fuse2_ = register_module("lp_fuse2", conv(pc, 3, 3));
}

void GeneratorImpl::check_image(const torch::Tensor& image) const {
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != cfg_.resolution ||
      image.size(3) != cfg_.resolution)
    throw InvalidArgument("generator expects [B,3," + std::to_string(cfg_.resolution) + "," +
                          std::to_string(cfg_.resolution) + "] images");
}

void GeneratorImpl::check_light(const torch::Tensor& light) const {
  if (light.dim() != 4 || light.size(1) != 3 || light.size(2) != cfg_.monitor_height ||
      light.size(3) != cfg_.monitor_width)
    throw InvalidArgument("generator expects [B,3," + std::to_string(cfg_.monitor_height) + "," +
                          std::to_string(cfg_.monitor_width) + "] monitor lights");
}

FeaturePyramid GeneratorImpl::encode(const torch::Tensor& image) {
  check_image(image);
  FeaturePyramid pyr;
  torch::Tensor x = image;
  for (auto& c : encoder_) {
    x = leaky(c(x));
    pyr.levels.push_back(x);
  }
  return pyr;
}

torch::Tensor GeneratorImpl::embed_light(const torch::Tensor& light) {
  check_light(light);
  return light_fc2_(leaky(light_fc1_(light.flatten(1))));
}

FeaturePyramid GeneratorImpl::delight(const FeaturePyramid& pyr, const torch::Tensor& src_embedding) {
  if (!cfg_.use_lcfn) return pyr;
  if (static_cast<int>(pyr.size()) != cfg_.levels()) throw InvalidArgument("delight: level count mismatch");
  FeaturePyramid out;
  for (int l = 0; l < cfg_.levels(); ++l)
    out.levels.push_back(adain(pyr.levels[l], src_embedding, delight_heads_[l]));
  return out;
}

LightPrediction GeneratorImpl::predict_source_light(const FeaturePyramid& pyr) {
  const int first = cfg_.predictor_first_level - 1;
  const int taps = cfg_.levels() - first;
  const auto batch = pyr.levels.at(0).size(0);
  const auto opts = pyr.levels[0].options();
  LightPrediction pred;
  if (!cfg_.use_light_prediction) {
    pred.light = torch::full({batch, 3, cfg_.monitor_height, cfg_.monitor_width}, 0.5, opts);
    for (int i = 0; i < taps; ++i)
      pred.confidences.push_back(
          torch::full({batch, 1, cfg_.predictor_grid_height, cfg_.predictor_grid_width}, 1.0 / taps, opts));
    return pred;
  }

  std::vector<torch::Tensor> projected, logits;
  for (int i = 0; i < taps; ++i) {
    const auto g = resample(pyr.levels.at(first + i), cfg_.predictor_grid_height, cfg_.predictor_grid_width);
    projected.push_back(predictor_proj_[i](g));
    logits.push_back(predictor_conf_[i](g));
  }
  const auto weights = torch::softmax(torch::stack(logits, 0), 0);  // [taps, B, 1, gh, gw]
  const auto fused = (weights * torch::stack(projected, 0)).sum(0);
  auto h = leaky(fuse1_(fused));
  h = resample(h, cfg_.monitor_height, cfg_.monitor_width);
  pred.light = torch::sigmoid(fuse2_(h));
  for (int i = 0; i < taps; ++i) pred.confidences.push_back(weights[i]);
  return pred;
}

torch::Tensor GeneratorImpl::decode(const FeaturePyramid& delit, const torch::Tensor& trg_embedding) {
  const int n = cfg_.levels();
  if (static_cast<int>(delit.size()) != n) throw InvalidArgument("decode: level count mismatch");
  torch::Tensor x = delit.levels[n - 1];
  for (int l = n - 2; l >= 0; --l) {
    const auto& skip = delit.levels[l];
    const auto up = resample(x, static_cast<int>(skip.size(2)), static_cast<int>(skip.size(3)));
    x = leaky(decoder_[l](torch::cat({up, skip}, 1)));
    x = adain(x, trg_embedding, relight_heads_[l]);
  }
  x = resample(x, cfg_.resolution, cfg_.resolution);
  return torch::sigmoid(output_(x));
}

RelightOutput GeneratorImpl::relight(const torch::Tensor& src_image,
                                     const std::optional<torch::Tensor>& src_light,
                                     const torch::Tensor& trg_light) {
  const auto pyr = encode(src_image);
  auto pred = predict_source_light(pyr);
  const auto e_src = embed_light(src_light ? *src_light : pred.light);
  const auto e_trg = embed_light(trg_light);
  return {decode(delight(pyr, e_src), e_trg), pred.light};
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(const ArchConfig& cfg) : resolution_(cfg.resolution) {
  cfg.validate();
  int in = 3;
  for (int i = 0; i < cfg.disc_layers; ++i) {
    const bool last = i == cfg.disc_layers - 1;
    const int out = last ? 1 : cfg.disc_width * (1 << std::min(i, 3));
    layers_.push_back(register_module(
        "d" + std::to_string(i),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1))));
    in = out;
  }
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != resolution_ || image.size(3) != resolution_)
    throw InvalidArgument("discriminator expects [B,3," + std::to_string(resolution_) + "," +
                          std::to_string(resolution_) + "] images");
  torch::Tensor x = image;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](x);
    if (i + 1 < layers_.size()) x = leaky(x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

Generator init_generator(const ArchConfig& cfg, std::uint64_t seed, torch::Dtype dtype) {
  cfg.validate();
  torch::manual_seed(seed);
  Generator g(cfg);
  torch::NoGradGuard no_grad;
  for (int l = 0; l < cfg.levels(); ++l) {
    g->delight_head(l)->weight.zero_();
    g->delight_head(l)->bias.zero_();
  }
  for (int l = 0; l + 1 < cfg.levels(); ++l) {
    g->relight_head(l)->weight.zero_();
    g->relight_head(l)->bias.zero_();
  }
  g->to(dtype);
  return g;
}

Discriminator init_discriminator(const ArchConfig& cfg, std::uint64_t seed, torch::Dtype dtype) {
  torch::manual_seed(seed + 0x9E3779B9ull);
  Discriminator d(cfg);
  d->to(dtype);
  return d;
}

std::int64_t parameter_count(torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

// ---------------------------------------------------------------------------
// Raster <-> tensor
// ---------------------------------------------------------------------------

template <class Tag>
torch::Tensor to_tensor(const Raster<Tag>& r, torch::Dtype dtype) {
  auto values = r.values();
  auto hwc = torch::from_blob(const_cast<float*>(values.data()), {r.height(), r.width(), 3},
                              torch::kFloat32);
  return hwc.permute({2, 0, 1}).unsqueeze(0).to(dtype).contiguous();
}

template <class Tag>
Raster<Tag> from_tensor(const torch::Tensor& t) {
  if (t.dim() != 4 || t.size(1) != 3) throw InvalidArgument("expected a [B,3,H,W] tensor");
  const auto hwc = t[0].detach().to(torch::kFloat32).clamp(0.0, 1.0).permute({1, 2, 0}).contiguous();
  Raster<Tag> out(static_cast<int>(t.size(2)), static_cast<int>(t.size(3)));
  std::memcpy(out.values().data(), hwc.data_ptr<float>(), out.size() * sizeof(float));
  return out;
}

template torch::Tensor to_tensor(const Image&, torch::Dtype);
template torch::Tensor to_tensor(const MonitorLight&, torch::Dtype);
template Image from_tensor<ImageTag>(const torch::Tensor&);
template MonitorLight from_tensor<MonitorTag>(const torch::Tensor&);

}  // namespace relit
