#include "relit/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "relit/error.hpp"

namespace relit {

double keypoint_distance(const KeypointVector& a, const KeypointVector& b) {
  if (a.coords.size() != b.coords.size())
    throw InvalidArgument("keypoint vectors differ in length");
  if (a.coords.empty() || a.coords.size() % 2 != 0)
    throw InvalidArgument("keypoint vector must hold 2K > 0 values");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.coords.size(); ++i) {
    const double d = a.coords[i] - b.coords[i];
    acc += d * d;
  }
  return std::sqrt(acc / (a.coords.size() / 2));
}

double light_rmse(const MonitorLight& a, const MonitorLight& b) {
  if (!a.same_shape(b)) throw InvalidArgument("monitor lights differ in size");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    acc += d * d;
  }
  return std::sqrt(acc / a.size());
}

void PairParams::validate() const {
  if (!(tau > 0.0)) throw InvalidArgument("pairing threshold tau must be positive");
  if (!(lambda_min >= 0.0)) throw InvalidArgument("lambda_min must be nonnegative");
  if (max_pairs_per_frame < 1) throw InvalidArgument("max_pairs_per_frame must be >= 1");
}

PairIndex build_pairs(std::span<const PairingFrame> frames, const PairParams& params) {
  params.validate();
  if (frames.empty()) throw InvalidArgument("cannot pair an empty manifest");

  PairIndex index;
  index.params = params;
  struct Candidate {
    double distance;
    std::size_t gap;
    std::size_t trg;
  };
  std::vector<Candidate> candidates;
  for (std::size_t a = 0; a < frames.size(); ++a) {
    candidates.clear();
    for (std::size_t b = 0; b < frames.size(); ++b) {
      if (a == b || frames[a].split != frames[b].split) continue;
      if (!params.cross_sequence && frames[a].seq_id != frames[b].seq_id) continue;
      const double d = keypoint_distance(frames[a].keypoints, frames[b].keypoints);
      if (d > params.tau) continue;
      if (light_rmse(frames[a].light, frames[b].light) < params.lambda_min) continue;
      candidates.push_back({d, a > b ? a - b : b - a, b});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
      if (x.distance != y.distance) return x.distance < y.distance;
      if (x.gap != y.gap) return x.gap < y.gap;
      return x.trg < y.trg;
    });
    const auto keep = std::min<std::size_t>(candidates.size(), params.max_pairs_per_frame);
    for (std::size_t k = 0; k < keep; ++k)
      index.pairs.push_back({a, candidates[k].trg, candidates[k].distance});
  }
  return index;
}

PairIndex build_pairs(const DatasetManifest& manifest, const PairParams& params) {
  if (manifest.frames.empty()) throw InvalidArgument("cannot pair an empty manifest");
  std::vector<PairingFrame> frames;
  frames.reserve(manifest.frames.size());
  for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
    const auto& f = manifest.frames[i];
    frames.push_back({f.seq_id, f.split, f.keypoints, load_monitor_light(manifest.light_file(i))});
  }
  return build_pairs(frames, params);
}

PairIndex filter_split(const PairIndex& index, const DatasetManifest& manifest, Split split) {
  PairIndex out;
  out.params = index.params;
  for (const auto& p : index.pairs)
    if (manifest.frames.at(p.src).split == split) out.pairs.push_back(p);
  return out;
}

std::vector<FramePair> unordered_pairs(const PairIndex& index) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<FramePair> out;
  for (const auto& p : index.pairs) {
    const auto key = std::minmax(p.src, p.trg);
    if (seen.insert(key).second) out.push_back({key.first, key.second, p.distance});
  }
  std::sort(out.begin(), out.end(), [](const FramePair& a, const FramePair& b) {
    return a.src != b.src ? a.src < b.src : a.trg < b.trg;
  });
  return out;
}

void write_pairs(const PairIndex& index, const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw IoError("cannot write " + file.string());
  char buf[128];
  std::snprintf(buf, sizeof(buf), "# relit-pairs v1 tau=%.17g lambda_min=%.17g", index.params.tau,
                index.params.lambda_min);
  os << buf << " max_pairs_per_frame=" << index.params.max_pairs_per_frame
     << " cross_sequence=" << (index.params.cross_sequence ? 1 : 0) << "\n";
  for (const auto& p : index.pairs) {
    std::snprintf(buf, sizeof(buf), "%zu %zu %.17g\n", p.src, p.trg, p.distance);
    os << buf;
  }
  if (!os) throw IoError("cannot write " + file.string());
}

PairIndex read_pairs(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("no such pair index: " + file.string());
  PairIndex index;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    if (line[0] == '#') {
      std::string tok;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "tau") index.params.tau = std::stod(val);
        else if (key == "lambda_min") index.params.lambda_min = std::stod(val);
        else if (key == "max_pairs_per_frame") index.params.max_pairs_per_frame = std::stoi(val);
        else if (key == "cross_sequence") index.params.cross_sequence = val == "1";
      }
      continue;
    }
    FramePair p;
    if (!(ss >> p.src >> p.trg >> p.distance)) throw IoError(file.string() + ": malformed pair");
    index.pairs.push_back(p);
  }
  return index;
}

}  // namespace relit
