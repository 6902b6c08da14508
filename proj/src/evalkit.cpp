#include "relit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "relit/error.hpp"

namespace relit {

namespace {

double scale_factor(RmseScale s) { return s == RmseScale::Byte ? 255.0 : 1.0; }

template <class Tag>
void require_same(const Raster<Tag>& a, const Raster<Tag>& b) {
  if (!a.same_shape(b)) throw InvalidArgument("rasters differ in size");
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

double rmse(const Image& a, const Image& b, RmseScale scale) {
  require_same(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a.values()[i]) - b.values()[i];
    acc += d * d;
  }
  return std::sqrt(acc / a.size()) * scale_factor(scale);
}

double rmse(const torch::Tensor& a, const torch::Tensor& b, RmseScale scale) {
  if (a.sizes() != b.sizes()) throw InvalidArgument("rmse: shape mismatch");
  const auto d = (a.to(torch::kFloat64) - b.to(torch::kFloat64));
  return std::sqrt(d.pow(2).mean().item<double>()) * scale_factor(scale);
}

double mae_light(const MonitorLight& a, const MonitorLight& b) {
  require_same(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(double(a.values()[i]) - b.values()[i]);
  return acc / a.size();
}

double mae_light(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw InvalidArgument("mae_light: shape mismatch");
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().mean().item<double>();
}

// ---------------------------------------------------------------------------
// Temporal consistency
// ---------------------------------------------------------------------------

namespace {

TemporalReport summarize(std::vector<double> adjacent, const std::vector<double>& thresholds) {
  TemporalReport r;
  r.adjacent = std::move(adjacent);
  r.thresholds = thresholds;
  r.mean = std::accumulate(r.adjacent.begin(), r.adjacent.end(), 0.0) / r.adjacent.size();
  r.mean_byte = r.mean * 255.0;
  for (double t : thresholds) {
    const auto above = std::count_if(r.adjacent.begin(), r.adjacent.end(), [t](double v) { return v > t; });
    r.rates.push_back(100.0 * above / r.adjacent.size());
  }
  return r;
}

}  // namespace

TemporalReport temporal_consistency(std::span<const Image> frames, const std::vector<double>& thresholds) {
  if (frames.size() < 2) throw InvalidArgument("temporal consistency needs at least 2 frames");
  std::vector<double> adj;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) adj.push_back(rmse(frames[t], frames[t + 1]));
  return summarize(std::move(adj), thresholds);
}

TemporalReport temporal_consistency(std::span<const torch::Tensor> frames, const std::vector<double>& thresholds) {
  if (frames.size() < 2) throw InvalidArgument("temporal consistency needs at least 2 frames");
  std::vector<double> adj;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) adj.push_back(rmse(frames[t], frames[t + 1]));
  return summarize(std::move(adj), thresholds);
}

std::string TemporalReport::to_json() const {
  nlohmann::ordered_json j;
  j["frames"] = adjacent.size() + 1;
  j["mean_rmse"] = mean;
  j["mean_rmse_255"] = mean_byte;
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    char key[32];
    std::snprintf(key, sizeof(key), "rate_gt_%g", thresholds[i]);
    j[key] = rates[i];
  }
  return j.dump();
}

std::string TemporalReport::to_table() const {
  std::ostringstream os;
  os << "frames          " << adjacent.size() + 1 << "\n"
     << "mean RMSE       " << fixed(mean) << "  (x255: " << fixed(mean_byte, 4) << ")\n";
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    os << "rate > " << fixed(thresholds[i], 2) << "     " << fixed(rates[i], 2) << " %\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Paired evaluation
// ---------------------------------------------------------------------------

Relighter generator_relighter(Generator g, bool predict_source) {
  return [g, predict_source](const torch::Tensor& src, const torch::Tensor& src_light,
                             const torch::Tensor& trg_light) mutable {
    std::optional<torch::Tensor> given;
    if (!predict_source) given = src_light;
    return g->relight(src, given, trg_light).image;
  };
}

PairReport eval_pairs(const Relighter& relight, std::span<const FramePair> pairs, const FrameCache& cache,
                      PerceptualMetric& perceptual, std::span<const std::shared_ptr<PerceptualMetric>> extra,
                      int chunk) {
  if (pairs.empty()) throw InvalidArgument("no pairs to evaluate");
  if (chunk < 1) throw InvalidArgument("chunk must be >= 1");
  torch::NoGradGuard no_grad;
  PairReport r;
  r.perceptual_name = perceptual.name();
  for (const auto& m : extra) r.extra_names.push_back(m->name());
  r.mean_extra.assign(extra.size(), 0.0);

  for (std::size_t begin = 0; begin < pairs.size(); begin += chunk) {
    const auto end = std::min(pairs.size(), begin + chunk);
    const std::vector<FramePair> part(pairs.begin() + begin, pairs.begin() + end);
    const auto batch = cache.gather(part);
    const auto out = relight(batch.src_image, batch.src_light, batch.trg_light);
    for (std::size_t k = 0; k < part.size(); ++k) {
      const auto i = static_cast<std::int64_t>(k);
      const auto pred = out.slice(0, i, i + 1), trg = batch.trg_image.slice(0, i, i + 1);
      const auto src = batch.src_image.slice(0, i, i + 1);
      PairScore s;
      s.src = part[k].src;
      s.trg = part[k].trg;
      s.rmse = rmse(pred, trg);
      s.rmse_copy = rmse(src, trg);
      s.perceptual = perceptual.distance(pred, trg).item<double>();
      s.perceptual_copy = perceptual.distance(src, trg).item<double>();
      for (const auto& m : extra) s.extra.push_back(m->distance(pred, trg).item<double>());
      r.pairs.push_back(std::move(s));
    }
  }

  const double n = static_cast<double>(r.pairs.size());
  std::size_t improved = 0;
  for (const auto& s : r.pairs) {
    r.mean_rmse += s.rmse / n;
    r.mean_rmse_copy += s.rmse_copy / n;
    r.mean_perceptual += s.perceptual / n;
    r.mean_perceptual_copy += s.perceptual_copy / n;
    for (std::size_t e = 0; e < s.extra.size(); ++e) r.mean_extra[e] += s.extra[e] / n;
    if (s.rmse < s.rmse_copy) ++improved;
  }
  r.fraction_improved = improved / n;
  return r;
}

std::vector<FramePair> grid_pairs(const PairIndex& index, const DatasetManifest& manifest) {
  return unordered_pairs(filter_split(index, manifest, Split::Grid));
}

std::string PairReport::to_table() const {
  std::ostringstream os;
  os << "report          " << (name.empty() ? "-" : name) << "\n"
     << "pairs           " << pairs.size() << "\n"
     << "                model       copy-input\n"
     << "RMSE            " << fixed(mean_rmse) << "    " << fixed(mean_rmse_copy) << "\n"
     << "RMSE x255       " << fixed(mean_rmse * 255, 4) << "    " << fixed(mean_rmse_copy * 255, 4) << "\n"
     << perceptual_name << std::string(perceptual_name.size() < 16 ? 16 - perceptual_name.size() : 1, ' ')
     << fixed(mean_perceptual) << "    " << fixed(mean_perceptual_copy) << "\n";
  for (std::size_t e = 0; e < extra_names.size(); ++e) os << extra_names[e] << "  " << fixed(mean_extra[e]) << "\n";
  os << "improved pairs  " << fixed(100.0 * fraction_improved, 2) << " %\n";
  if (perceptual_name == "pyramid_l1") os << "(pyramid_l1 is a built-in proxy, not comparable to LPIPS)\n";
  return os.str();
}

std::string PairReport::to_jsonl() const {
  std::ostringstream os;
  for (const auto& s : pairs) {
    nlohmann::ordered_json j;
    j["src"] = s.src;
    j["trg"] = s.trg;
    j["rmse"] = s.rmse;
    j["rmse_copy"] = s.rmse_copy;
    j[perceptual_name] = s.perceptual;
    j[perceptual_name + "_copy"] = s.perceptual_copy;
    for (std::size_t e = 0; e < extra_names.size(); ++e) j[extra_names[e]] = s.extra[e];
    os << j.dump() << "\n";
  }
  nlohmann::ordered_json sum;
  sum["summary"] = name.empty() ? "pairs" : name;
  sum["pairs"] = pairs.size();
  sum["mean_rmse"] = mean_rmse;
  sum["mean_rmse_copy"] = mean_rmse_copy;
  sum["mean_rmse_255"] = mean_rmse * 255;
  sum["mean_" + perceptual_name] = mean_perceptual;
  sum["mean_" + perceptual_name + "_copy"] = mean_perceptual_copy;
  for (std::size_t e = 0; e < extra_names.size(); ++e) sum["mean_" + extra_names[e]] = mean_extra[e];
  sum["fraction_improved"] = fraction_improved;
  os << sum.dump() << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Source-light prediction
// ---------------------------------------------------------------------------

torch::Tensor mean_light(const FrameCache& cache, std::span<const std::size_t> ids) {
  if (ids.empty()) throw InvalidArgument("mean light over no frames");
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  return cache.lights.index_select(0, torch::tensor(idx, torch::kLong)).mean(0, /*keepdim=*/true);
}

LightReport eval_light(Generator& g, const FrameCache& cache, std::span<const std::size_t> ids,
                       const torch::Tensor& baseline_light, int chunk) {
  if (ids.empty()) throw InvalidArgument("no frames to evaluate");
  torch::NoGradGuard no_grad;
  LightReport r;
  r.frames = ids.size();
  for (std::size_t begin = 0; begin < ids.size(); begin += chunk) {
    const auto end = std::min(ids.size(), begin + chunk);
    std::vector<std::int64_t> idx(ids.begin() + begin, ids.begin() + end);
    const auto sel = torch::tensor(idx, torch::kLong);
    const auto images = cache.images.index_select(0, sel);
    const auto truth = cache.lights.index_select(0, sel);
    const auto pred = g->predict_source_light(g->encode(images)).light;
    const double w = static_cast<double>(idx.size()) / ids.size();
    r.mae_model += w * mae_light(pred, truth);
    r.mae_baseline += w * mae_light(baseline_light.expand_as(truth), truth);
  }
  r.improvement = r.mae_baseline > 0 ? 1.0 - r.mae_model / r.mae_baseline : 0.0;
  return r;
}

std::string LightReport::to_json() const {
  nlohmann::ordered_json j;
  j["frames"] = frames;
  j["mae_model"] = mae_model;
  j["mae_mean_light"] = mae_baseline;
  j["improvement"] = improvement;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

MetricOrdering order_metric(const std::string& metric, std::span<const NamedValue> values) {
  if (values.empty()) throw InvalidArgument("nothing to order");
  std::vector<NamedValue> sorted(values.begin(), values.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const NamedValue& a, const NamedValue& b) { return a.value < b.value; });
  MetricOrdering o;
  o.metric = metric;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::vector<std::string> group;
    while (j < sorted.size() && sorted[j].value == sorted[i].value) group.push_back(sorted[j++].name);
    if (group.size() > 1) o.ties.push_back(group);
    for (auto& n : group) o.ranked.push_back(std::move(n));
    i = j;
  }
  return o;
}

AblationSummary ablation_compare(std::span<const PairReport> reports) {
  if (reports.size() < 2) throw InvalidArgument("ablation comparison needs at least 2 reports");
  std::vector<NamedValue> rm, pm;
  for (const auto& r : reports) {
    rm.push_back({r.name, r.mean_rmse});
    pm.push_back({r.name, r.mean_perceptual});
  }
  AblationSummary s;
  s.orderings.push_back(order_metric("rmse", rm));
  s.orderings.push_back(order_metric(reports.front().perceptual_name, pm));
  return s;
}

std::string AblationSummary::to_table() const {
  std::ostringstream os;
  for (const auto& o : orderings) {
    os << o.metric << ": ";
    for (std::size_t i = 0; i < o.ranked.size(); ++i) os << (i ? " < " : "") << o.ranked[i];
    os << "\n";
    for (const auto& t : o.ties) {
      os << "  tie:";
      for (const auto& n : t) os << " " << n;
      os << "\n";
    }
  }
  return os.str();
}

bool ordering_holds(std::span<const double> values, int allowed_inversions) {
  if (values.size() < 2) throw InvalidArgument("ordering needs at least 2 values");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (!(values[0] < values[i])) return false;
  int inversions = 0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i)
    if (values[i] > values[i + 1]) ++inversions;
  return inversions <= allowed_inversions;
}

}  // namespace relit
