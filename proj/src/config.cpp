#include "relit/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "relit/error.hpp"

namespace relit {

namespace {

using nlohmann::json;

struct Field {
  std::string key;
  std::function<void(const json&)> set;
  std::function<json()> get;
};

template <class T>
Field field(std::string key, T& ref) {
  return {std::move(key), [&ref](const json& j) { ref = j.get<T>(); }, [&ref] { return json(ref); }};
}

// The shared seed is not a field; synth.seed and train.seed follow it.
std::vector<Field> fields(GlobalConfig& c) {
  auto& a = c.arch;
  auto& t = c.train;
  auto& s = c.smoothing;
  auto& y = c.synth;
  auto& p = c.pairing;
  return {
      field("seed", c.seed),
      field("arch.resolution", a.resolution),
      field("arch.widths", a.widths),
      field("arch.strides", a.strides),
      field("arch.light_embed_dim", a.light_embed_dim),
      field("arch.light_hidden_dim", a.light_hidden_dim),
      field("arch.monitor_height", a.monitor_height),
      field("arch.monitor_width", a.monitor_width),
      field("arch.predictor_first_level", a.predictor_first_level),
      field("arch.predictor_grid_height", a.predictor_grid_height),
      field("arch.predictor_grid_width", a.predictor_grid_width),
      field("arch.predictor_channels", a.predictor_channels),
      field("arch.disc_layers", a.disc_layers),
      field("arch.disc_width", a.disc_width),
      field("arch.use_lcfn", a.use_lcfn),
      field("arch.use_light_prediction", a.use_light_prediction),
      field("train.lambda_l1", t.weights.l1),
      field("train.lambda_perceptual", t.weights.perceptual),
      field("train.lambda_cycle", t.weights.cycle),
      field("train.lambda_adversarial", t.weights.adversarial),
      field("train.lambda_monitor", t.weights.monitor),
      field("train.lr_g", t.lr_g),
      field("train.lr_d", t.lr_d),
      field("train.beta1", t.beta1),
      field("train.beta2", t.beta2),
      field("train.batch_size", t.batch_size),
      field("train.steps", t.steps),
      field("train.checkpoint_every", t.checkpoint_every),
      field("train.perceptual", t.perceptual),
      field("smoothing.alpha", s.alpha),
      field("smoothing.beta", s.beta),
      field("smoothing.window", s.window),
      field("smoothing.feature_ema", s.feature_ema),
      field("smoothing.light_avg", s.light_avg),
      field("synth.n_sequences", y.n_sequences),
      field("synth.n_holdout", y.n_holdout),
      field("synth.frames_per_sequence", y.frames_per_sequence),
      field("synth.resolution", y.resolution),
      field("synth.pose_period", y.pose_period),
      field("synth.pose_jitter", y.pose_jitter),
      field("synth.grid_poses", y.grid_poses),
      field("synth.grid_lights", y.grid_lights),
      field("synth.grid_pose_scale", y.grid_pose_scale),
      field("synth.env_fraction", y.env_fraction),
      field("synth.env_fov_deg", y.env_fov_deg),
      field("pairing.tau", p.tau),
      field("pairing.lambda_min", p.lambda_min),
      field("pairing.max_pairs_per_frame", p.max_pairs_per_frame),
      field("pairing.cross_sequence", p.cross_sequence),
  };
}

void set_key(GlobalConfig& c, const std::string& key, const json& value) {
  for (auto& f : fields(c)) {
    if (f.key != key) continue;
    try {
      f.set(value);
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': bad value " + value.dump() + " (" + e.what() + ")");
    }
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void merge(GlobalConfig& c, const json& j, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (prefix.empty() && v.is_object()) merge(c, v, key);
    else set_key(c, key, v);
  }
}

}  // namespace

void GlobalConfig::merge_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  merge(*this, j, "");
}

void GlobalConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  set_key(*this, key, value);
}

void GlobalConfig::finalize() {
  train.seed = seed;
  synth.seed = seed;
  synth.monitor_height = arch.monitor_height;
  synth.monitor_width = arch.monitor_width;
  arch.validate();
  train.validate();
  smoothing.validate();
  synth.validate();
  pairing.validate();
}

std::string GlobalConfig::to_json() const {
  auto& self = const_cast<GlobalConfig&>(*this);
  json j = json::object();
  for (const auto& f : fields(self)) {
    const auto dot = f.key.find('.');
    if (dot == std::string::npos) j[f.key] = f.get();
    else j[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get();
  }
  return j.dump(2);
}

std::vector<std::string> GlobalConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& f : fields(const_cast<GlobalConfig&>(*this))) out.push_back(f.key);
  return out;
}

GlobalConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  GlobalConfig c;
  if (!file.empty()) {
    std::ifstream is(file);
    if (!is) throw IoError("cannot read config " + file.string());
    std::stringstream ss;
    ss << is.rdbuf();
    c.merge_json(ss.str());
  }
  for (const auto& o : overrides) c.apply_override(o);
  c.finalize();
  return c;
}

}  // namespace relit
