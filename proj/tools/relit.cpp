// relit: command-line front end for data generation, training, relighting
// and evaluation.

#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relit/config.hpp"
#include "relit/error.hpp"
#include "relit/evalkit.hpp"
#include "relit/temporal.hpp"
#include "relit/training.hpp"

namespace fs = std::filesystem;
using namespace relit;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;

  GlobalConfig load() const { return load_config(config, overrides); }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "JSON config file");
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set train.steps=100")->take_all();
}

Image read_frame(const fs::path& file, int resolution) {
  auto img = load_image(file);
  if (img.height() != resolution || img.width() != resolution) img = resize_bilinear(img, resolution, resolution);
  return img;
}

/// frame_*.png files of a directory in name order.
std::vector<fs::path> list_frames(const fs::path& dir, const std::string& stem) {
  if (!fs::is_directory(dir)) throw IoError("no such directory: " + dir.string());
  const std::regex pattern(stem + R"(_\d+\.png)");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (std::regex_match(e.path().filename().string(), pattern)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

fs::path manifest_path(const fs::path& data) { return fs::is_directory(data) ? data / "manifest" : data; }

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file);
  if (!os) throw IoError("cannot write " + file.string());
  os << text;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Common& common, const std::string& out) {
  auto cfg = common.load();
  cfg.synth.root = out;
  const auto m = gen_dataset(cfg.synth);
  std::printf("wrote %zu frames (%zu train, %zu test, %zu grid) to %s\n", m.frames.size(),
              m.ids_in_split(Split::Train).size(), m.ids_in_split(Split::Test).size(),
              m.ids_in_split(Split::Grid).size(), out.c_str());
  return 0;
}

int cmd_pair(const Common& common, const std::string& data, std::string out) {
  const auto cfg = common.load();
  const auto m = read_manifest(manifest_path(data));
  const auto index = build_pairs(m, cfg.pairing);
  if (out.empty()) out = (fs::path(m.root) / "pairs.txt").string();
  write_pairs(index, out);
  std::printf("wrote %zu directed pairs (%zu train, %zu test, %zu grid) to %s\n", index.pairs.size(),
              filter_split(index, m, Split::Train).pairs.size(), filter_split(index, m, Split::Test).pairs.size(),
              filter_split(index, m, Split::Grid).pairs.size(), out.c_str());
  return 0;
}

int cmd_train(const Common& common, const std::string& data, std::string pairs, const std::string& out,
              bool resume, int print_every) {
  const auto cfg = common.load();
  const auto m = read_manifest(manifest_path(data));
  if (pairs.empty()) pairs = (fs::path(m.root) / "pairs.txt").string();
  const auto index = read_pairs(pairs);
  fs::create_directories(out);
  write_text(fs::path(out) / "config.json", cfg.to_json() + "\n");
  const auto result = fit(cfg.arch, cfg.train, index, m, out, resume, [&](const StepRecord& r) {
    if (print_every > 0 && r.step % print_every == 0)
      std::printf("step %lld  objective %.5f  l1 %.5f  d %.5f  monitor %.5f\n", static_cast<long long>(r.step),
                  r.objective, r.g_l1, r.d_loss, r.m_total);
  });
  std::printf("checkpoint %s\n", result.checkpoint.c_str());
  return 0;
}

int cmd_relight_image(const std::string& ckpt, const std::string& image, const std::string& src_light,
                      bool predict, const std::string& trg_light, const std::string& out) {
  if (!predict && src_light.empty()) throw ConfigError("give --src-light or --predict-source");
  auto g = load_generator(ckpt);
  torch::NoGradGuard no_grad;
  const auto& arch = g->config();
  const auto src = to_tensor(read_frame(image, arch.resolution));
  std::optional<torch::Tensor> given;
  if (!predict) given = to_tensor(load_monitor_light(src_light));
  const auto res = g->relight(src, given, to_tensor(load_monitor_light(trg_light)));
  save_image(from_tensor<ImageTag>(res.image), out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_relight_video(const Common& common, const std::string& ckpt, const std::string& frames_dir,
                      std::string lights_dir, bool predict, const std::string& trg_light, const std::string& out) {
  const auto cfg = common.load();
  auto g = load_generator(ckpt);
  torch::NoGradGuard no_grad;
  const auto frames = list_frames(frames_dir, "frame");
  if (frames.empty()) throw IoError("no frame_*.png files in " + frames_dir);
  std::vector<fs::path> lights;
  if (!predict) {
    if (lights_dir.empty()) lights_dir = frames_dir;
    lights = list_frames(lights_dir, "light");
    if (lights.size() != frames.size())
      throw IoError("found " + std::to_string(frames.size()) + " frames but " + std::to_string(lights.size()) +
                    " light files; pass --predict-source to run without them");
  }
  fs::create_directories(out);
  const auto trg = to_tensor(load_monitor_light(trg_light));
  SmootherState state(cfg.smoothing);
  double seconds = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto frame = to_tensor(read_frame(frames[t], g->config().resolution));
    std::optional<torch::Tensor> src;
    if (!predict) src = to_tensor(load_monitor_light(lights[t]));
    const auto t0 = std::chrono::steady_clock::now();
    const auto relit = stream_step(state, g, frame, src, trg);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_image(from_tensor<ImageTag>(relit), fs::path(out) / frames[t].filename());
  }
  nlohmann::ordered_json timing;
  timing["frames"] = frames.size();
  timing["seconds"] = seconds;
  timing["fps"] = frames.size() / seconds;
  write_text(fs::path(out) / "timing.json", timing.dump() + "\n");
  std::printf("relit %zu frames at %.1f fps into %s\n", frames.size(), frames.size() / seconds, out.c_str());
  return 0;
}

int cmd_predict_light(const std::string& ckpt, const std::string& image, const std::string& out,
                      const std::string& confidence_dir) {
  auto g = load_generator(ckpt);
  torch::NoGradGuard no_grad;
  const auto pred = g->predict_source_light(g->encode(to_tensor(read_frame(image, g->config().resolution))));
  save_monitor_light(from_tensor<MonitorTag>(pred.light), out);
  if (!confidence_dir.empty()) {
    fs::create_directories(confidence_dir);
    for (std::size_t i = 0; i < pred.confidences.size(); ++i) {
      const auto c = pred.confidences[i].expand({-1, 3, -1, -1});
      char name[32];
      std::snprintf(name, sizeof(name), "confidence_%zu.png", i + g->config().predictor_first_level);
      save_image(from_tensor<ImageTag>(c), fs::path(confidence_dir) / name);
    }
  }
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_eval_pairs(const std::string& ckpt, const std::string& data, std::string pairs, bool predict,
                   const std::vector<std::string>& metrics, const std::string& name, const std::string& out) {
  const auto m = read_manifest(manifest_path(data));
  if (pairs.empty()) pairs = (fs::path(m.root) / "pairs.txt").string();
  auto g = load_generator(ckpt);
  const auto grid = grid_pairs(read_pairs(pairs), m);
  const auto cache = FrameCache::load(m, g->config());
  auto proxy = make_perceptual_metric("pyramid_l1");
  std::vector<std::shared_ptr<PerceptualMetric>> extra;
  for (const auto& id : metrics) extra.push_back(make_perceptual_metric(id));
  auto report = eval_pairs(generator_relighter(g, predict), grid, cache, *proxy, extra);
  report.name = name;
  std::cout << report.to_table();
  if (!out.empty()) write_text(out, report.to_jsonl());
  return 0;
}

int cmd_eval_temporal(const std::string& frames_dir, const std::vector<double>& thresholds, const std::string& out) {
  std::vector<Image> frames;
  for (const auto& f : list_frames(frames_dir, "frame")) frames.push_back(load_image(f));
  const auto report = temporal_consistency(frames, thresholds);
  std::cout << report.to_table();
  if (!out.empty()) write_text(out, report.to_json() + "\n");
  return 0;
}

int cmd_eval_light(const std::string& ckpt, const std::string& data, const std::string& out) {
  const auto m = read_manifest(manifest_path(data));
  auto g = load_generator(ckpt);
  const auto cache = FrameCache::load(m, g->config());
  const auto train = m.ids_in_split(Split::Train);
  const auto test = m.ids_in_split(Split::Test);
  if (test.empty()) throw InvalidArgument("the dataset has no held-out test frames");
  const auto report = eval_light(g, cache, test, mean_light(cache, train));
  std::printf("frames          %zu\nMAE model       %.6f\nMAE mean light  %.6f\nimprovement     %.2f %%\n",
              report.frames, report.mae_model, report.mae_baseline, 100.0 * report.improvement);
  if (!out.empty()) write_text(out, report.to_json() + "\n");
  return 0;
}

/// Reads the summary record written by `eval pairs --out`.
PairReport read_pair_summary(const std::string& name, const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot read " + file.string());
  std::string line, last;
  while (std::getline(is, line))
    if (!line.empty()) last = line;
  const auto j = nlohmann::json::parse(last);
  if (!j.contains("summary")) throw IoError(file.string() + " has no summary record");
  PairReport r;
  r.name = name;
  r.perceptual_name = "pyramid_l1";
  r.mean_rmse = j.at("mean_rmse").get<double>();
  r.mean_perceptual = j.at("mean_pyramid_l1").get<double>();
  return r;
}

int cmd_eval_ablation(const std::vector<std::string>& entries) {
  std::vector<PairReport> reports;
  for (const auto& e : entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos) throw ConfigError("--report expects name=file, got '" + e + "'");
    reports.push_back(read_pair_summary(e.substr(0, eq), e.substr(eq + 1)));
  }
  std::cout << ablation_compare(reports).to_table();
  return 0;
}

int cmd_bench(const Common& common, const std::string& ckpt, int frames, bool predict) {
  const auto cfg = common.load();
  Generator g = ckpt.empty() ? init_generator(cfg.arch, cfg.seed) : load_generator(ckpt);
  g->eval();
  torch::NoGradGuard no_grad;
  const auto& arch = g->config();
  FlickerConfig fc;
  fc.frames = std::max(frames, 2);
  fc.resolution = arch.resolution;
  fc.monitor_height = arch.monitor_height;
  fc.monitor_width = arch.monitor_width;
  const auto video = flicker_video(fc);
  const auto trg = to_tensor(solid_light(arch.monitor_height, arch.monitor_width, {1.0f, 0.9f, 0.8f}));
  std::vector<torch::Tensor> inputs, lights;
  for (int t = 0; t < fc.frames; ++t) {
    inputs.push_back(to_tensor(video.frames[t]));
    lights.push_back(to_tensor(video.lights[t]));
  }
  SmootherState state(cfg.smoothing);
  stream_step(state, g, inputs[0], lights[0], trg);  // warm-up
  state.reset();
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < fc.frames; ++t) {
    std::optional<torch::Tensor> src;
    if (!predict) src = lights[t];
    stream_step(state, g, inputs[t], src, trg);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::ordered_json j;
  j["frames"] = fc.frames;
  j["resolution"] = arch.resolution;
  j["seconds"] = seconds;
  j["fps"] = fc.frames / seconds;
  j["threads"] = torch::get_num_threads();
  j["reference_fps"] = 45;
  std::cout << j.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized portrait relighting: synthetic data, training, relighting and evaluation"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "Synthetic data generation")->require_subcommand(1);
  auto* synth_gen = synth->add_subcommand("gen", "Render the synthetic dataset and its manifest");
  std::string synth_out;
  synth_gen->add_option("-o,--out", synth_out, "Output dataset directory")->required();
  add_common(synth_gen, common);

  auto* pair = app.add_subcommand("pair", "Training pair construction")->require_subcommand(1);
  auto* pair_build = pair->add_subcommand("build", "Match frames by keypoints across lighting changes");
  std::string data, pairs_file, out;
  pair_build->add_option("-d,--data", data, "Dataset directory or manifest file")->required();
  pair_build->add_option("-o,--out", out, "Pair index file (default <data>/pairs.txt)");
  add_common(pair_build, common);

  auto* train = app.add_subcommand("train", "Train generator and discriminator");
  bool resume = false;
  int print_every = 50;
  train->add_option("-d,--data", data, "Dataset directory or manifest file")->required();
  train->add_option("-p,--pairs", pairs_file, "Pair index (default <data>/pairs.txt)");
  train->add_option("-o,--out", out, "Run directory for logs and checkpoints")->required();
  train->add_flag("--resume", resume, "Continue from the newest checkpoint in the run directory");
  train->add_option("--print-every", print_every, "Progress line interval in steps (0 = quiet)");
  add_common(train, common);

  auto* relight = app.add_subcommand("relight", "Relight an image or a video")->require_subcommand(1);
  std::string ckpt, image, src_light, lights_dir, trg_light, frames_dir;
  bool predict = false;
  auto* relight_image = relight->add_subcommand("image", "Relight one portrait");
  relight_image->add_option("--ckpt", ckpt, "Checkpoint")->required();
  relight_image->add_option("-i,--image", image, "Source portrait PNG")->required();
  relight_image->add_option("--src-light", src_light, "Source monitor light PNG");
  relight_image->add_flag("--predict-source", predict, "Use the predicted source light");
  relight_image->add_option("--trg-light", trg_light, "Target monitor light PNG")->required();
  relight_image->add_option("-o,--out", out, "Output PNG")->required();
  auto* relight_video = relight->add_subcommand("video", "Relight a frame directory with temporal smoothing");
  relight_video->add_option("--ckpt", ckpt, "Checkpoint")->required();
  relight_video->add_option("-f,--frames", frames_dir, "Directory of frame_*.png")->required();
  relight_video->add_option("--lights", lights_dir, "Directory of light_*.png (default: the frame directory)");
  relight_video->add_flag("--predict-source", predict, "Use predicted source lights");
  relight_video->add_option("--trg-light", trg_light, "Target monitor light PNG")->required();
  relight_video->add_option("-o,--out", out, "Output directory")->required();
  add_common(relight_video, common);

  auto* predict_light = app.add_subcommand("predict-light", "Estimate the monitor light of a portrait");
  std::string confidence_dir;
  predict_light->add_option("--ckpt", ckpt, "Checkpoint")->required();
  predict_light->add_option("-i,--image", image, "Portrait PNG")->required();
  predict_light->add_option("-o,--out", out, "Output monitor light PNG")->required();
  predict_light->add_option("--confidence-dir", confidence_dir, "Also save per-level confidence maps");

  auto* eval = app.add_subcommand("eval", "Metrics and reports")->require_subcommand(1);
  std::vector<std::string> metrics, reports;
  std::string name;
  auto* eval_pairs_cmd = eval->add_subcommand("pairs", "Score grid pairs against the copy-input baseline");
  eval_pairs_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval_pairs_cmd->add_option("-d,--data", data, "Dataset directory or manifest file")->required();
  eval_pairs_cmd->add_option("-p,--pairs", pairs_file, "Pair index (default <data>/pairs.txt)");
  eval_pairs_cmd->add_flag("--predict-source", predict, "Use predicted source lights");
  eval_pairs_cmd->add_option("--metric", metrics, "Extra perceptual metric, e.g. torchscript:lpips.pt");
  eval_pairs_cmd->add_option("--name", name, "Report name");
  eval_pairs_cmd->add_option("-o,--out", out, "Per-pair JSON lines output");
  std::vector<double> thresholds = kTemporalThresholds;
  auto* eval_temporal = eval->add_subcommand("temporal", "Adjacent-frame consistency of a frame directory");
  eval_temporal->add_option("-f,--frames", frames_dir, "Directory of frame_*.png")->required();
  eval_temporal->add_option("--threshold", thresholds, "Error-rate thresholds (unit RMSE)");
  eval_temporal->add_option("-o,--out", out, "JSON output");
  auto* eval_light_cmd = eval->add_subcommand("light", "Source-light prediction error on held-out frames");
  eval_light_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval_light_cmd->add_option("-d,--data", data, "Dataset directory or manifest file")->required();
  eval_light_cmd->add_option("-o,--out", out, "JSON output");
  auto* eval_ablation = eval->add_subcommand("ablation", "Order several `eval pairs` reports");
  eval_ablation->add_option("--report", reports, "name=file written by eval pairs --out")->required();

  auto* bench = app.add_subcommand("bench", "Stream a synthetic video and report frames per second");
  int bench_frames = 100;
  bench->add_option("--ckpt", ckpt, "Checkpoint (default: freshly initialized model from the config)");
  bench->add_option("-n,--frames", bench_frames, "Frames to stream");
  bench->add_flag("--predict-source", predict, "Use predicted source lights");
  add_common(bench, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_gen->parsed()) return cmd_synth(common, synth_out);
    if (pair_build->parsed()) return cmd_pair(common, data, out);
    if (train->parsed()) return cmd_train(common, data, pairs_file, out, resume, print_every);
    if (relight_image->parsed()) return cmd_relight_image(ckpt, image, src_light, predict, trg_light, out);
    if (relight_video->parsed())
      return cmd_relight_video(common, ckpt, frames_dir, lights_dir, predict, trg_light, out);
    if (predict_light->parsed()) return cmd_predict_light(ckpt, image, out, confidence_dir);
    if (eval_pairs_cmd->parsed()) return cmd_eval_pairs(ckpt, data, pairs_file, predict, metrics, name, out);
    if (eval_temporal->parsed()) return cmd_eval_temporal(frames_dir, thresholds, out);
    if (eval_light_cmd->parsed()) return cmd_eval_light(ckpt, data, out);
    if (eval_ablation->parsed()) return cmd_eval_ablation(reports);
    if (bench->parsed()) return cmd_bench(common, ckpt, bench_frames, predict);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
