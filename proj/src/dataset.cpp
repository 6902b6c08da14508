#include "relit/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "relit/error.hpp"

namespace relit {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Grid: return "grid";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "grid") return Split::Grid;
  throw InvalidArgument("unknown split tag: " + s);
}

void DatasetManifest::validate() const {
  std::map<std::string, int> last;
  std::size_t k = frames.empty() ? 0 : frames.front().keypoints.coords.size();
  for (const auto& f : frames) {
    auto it = last.find(f.seq_id);
    if (it != last.end() && f.timestamp <= it->second)
      throw InvalidArgument("timestamps not strictly increasing in sequence " + f.seq_id);
    last[f.seq_id] = f.timestamp;
    if (f.keypoints.coords.size() != k || k % 2 != 0)
      throw InvalidArgument("inconsistent keypoint length in sequence " + f.seq_id);
  }
}

std::vector<std::size_t> DatasetManifest::ids_in_split(Split s) const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (frames[i].split == s) ids.push_back(i);
  return ids;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_manifest(const DatasetManifest& m, const std::filesystem::path& file) {
  m.validate();
  std::ofstream os(file);
  if (!os) throw IoError("cannot write manifest " + file.string());
  os << "# relit-manifest v1\n";
  os << "# resolution " << m.meta.resolution << "\n";
  os << "# monitor " << m.meta.monitor_height << " " << m.meta.monitor_width << "\n";
  os << "# seed " << m.meta.seed << "\n";
  for (const auto& f : m.frames) {
    os << f.seq_id << ' ' << f.timestamp << ' ' << to_string(f.split) << ' '
       << f.image_path.generic_string() << ' ' << f.light_path.generic_string() << ' '
       << num(f.pose.yaw) << ' ' << num(f.pose.pitch) << ' ' << num(f.pose.expression);
    for (double k : f.keypoints.coords) os << ' ' << num(k);
    os << '\n';
  }
  if (!os) throw IoError("cannot write manifest " + file.string());
}

DatasetManifest read_manifest(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("no such manifest: " + file.string());
  DatasetManifest m;
  m.root = file.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    if (line[0] == '#') {
      std::string hash, key;
      ss >> hash >> key;
      if (key == "resolution") ss >> m.meta.resolution;
      else if (key == "monitor") ss >> m.meta.monitor_height >> m.meta.monitor_width;
      else if (key == "seed") ss >> m.meta.seed;
      continue;
    }
    FrameRecord f;
    std::string split, img, light;
    if (!(ss >> f.seq_id >> f.timestamp >> split >> img >> light >> f.pose.yaw >> f.pose.pitch >>
          f.pose.expression))
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": malformed record");
    f.split = parse_split(split);
    f.image_path = img;
    f.light_path = light;
    double k;
    while (ss >> k) f.keypoints.coords.push_back(k);
    if (!ss.eof())
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": malformed keypoint");
    m.frames.push_back(std::move(f));
  }
  m.validate();
  return m;
}

}  // namespace relit
