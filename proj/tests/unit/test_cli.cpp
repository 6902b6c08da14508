#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"

using relit::test::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(RELIT_CLI) + " " + args + " 2>&1";
  FILE* p = ::popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), p)) out.append(buf, n);
  const int status = ::pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const std::filesystem::path& f) {
  std::ifstream is(f);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kTinyConfig = R"({
  "seed": 3,
  "arch": {"resolution": 16, "widths": [8, 8, 16], "strides": [1, 2, 2], "light_embed_dim": 16,
           "light_hidden_dim": 16, "monitor_height": 8, "monitor_width": 16, "predictor_first_level": 2,
           "predictor_grid_height": 4, "predictor_grid_width": 8, "predictor_channels": 8, "disc_layers": 2,
           "disc_width": 8},
  "train": {"batch_size": 2, "steps": 6, "checkpoint_every": 3},
  "synth": {"n_sequences": 2, "n_holdout": 1, "frames_per_sequence": 8, "resolution": 16, "pose_period": 4,
            "grid_poses": 2, "grid_lights": 2}
})";

}  // namespace

TEST(Cli, HelpForEverySubcommand) {
  for (const char* sub : {"", "synth gen", "pair build", "train", "relight image", "relight video", "predict-light",
                          "eval pairs", "eval temporal", "eval light", "eval ablation", "bench"}) {
    const auto r = cli(std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
  }
}

TEST(Cli, BadInputsExitNonZero) {
  TempDir dir("cli");
  EXPECT_NE(cli("").code, 0);
  EXPECT_NE(cli("frobnicate").code, 0);
  const auto r = cli("synth gen -o " + (dir / "d").string() + " --set synth.bogus=1");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("synth.bogus"), std::string::npos) << r.out;
  EXPECT_NE(cli("eval temporal -f " + (dir / "nowhere").string()).code, 0);
}

TEST(Cli, EndToEndSmoke) {
  TempDir dir("cli");
  {
    std::ofstream(dir / "tiny.json") << kTinyConfig;
  }
  const auto cfg = "-c " + (dir / "tiny.json").string();
  const auto data = (dir / "data").string(), run = (dir / "run").string();
  auto r = cli("synth gen " + cfg + " -o " + data);
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_TRUE(std::filesystem::exists(dir / "data" / "manifest")) << r.out;
  r = cli("pair build " + cfg + " -d " + data);
  ASSERT_EQ(r.code, 0) << r.out;
  r = cli("train " + cfg + " -d " + data + " -o " + run + " --print-every 0");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "final.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "step_00000003.ckpt"));
  std::istringstream log(slurp(dir / "run" / "train_log.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(log, line); ++lines) EXPECT_NO_THROW((void)nlohmann::json::parse(line));
  EXPECT_EQ(lines, 6);

  const auto ckpt = (dir / "run" / "final.ckpt").string();
  r = cli("eval pairs --ckpt " + ckpt + " -d " + data + " -o " + (dir / "pairs.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("improved pairs"), std::string::npos);
  r = cli("eval light --ckpt " + ckpt + " -d " + data);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("MAE model"), std::string::npos);
  r = cli("eval ablation --report a=" + (dir / "pairs.jsonl").string() + " --report b=" +
            (dir / "pairs.jsonl").string());
  EXPECT_EQ(r.code, 0) << r.out;

  // relight a held-out sequence as a video, then score it
  const auto seq = dir / "data" / "seq_01";
  ASSERT_TRUE(std::filesystem::exists(seq / "frame_000000.png"));
  const auto trg = (seq / "light_000001.png").string();
  r = cli("relight image --ckpt " + ckpt + " -i " + (seq / "frame_000000.png").string() + " --src-light " +
            (seq / "light_000000.png").string() + " --trg-light " + trg + " -o " + (dir / "one.png").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "one.png"));
  r = cli("predict-light --ckpt " + ckpt + " -i " + (seq / "frame_000000.png").string() + " -o " +
            (dir / "l.png").string());
  ASSERT_EQ(r.code, 0) << r.out;
  r = cli("relight video --ckpt " + ckpt + " -f " + seq.string() + " --predict-source --trg-light " + trg +
            " -o " + (dir / "video").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "video" / "timing.json"));
  r = cli("eval temporal -f " + (dir / "video").string() + " -o " + (dir / "t.json").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NO_THROW((void)nlohmann::json::parse(slurp(dir / "t.json")));
  r = cli("bench --ckpt " + ckpt + " -n 5");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("fps"), std::string::npos);

  // resuming a finished run with more steps appends to the log
  r = cli("train " + cfg + " -d " + data + " -o " + run + " --resume --print-every 0 --set train.steps=8");
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream log2(slurp(dir / "run" / "train_log.jsonl"));
  lines = 0;
  for (std::string line; std::getline(log2, line);) ++lines;
  EXPECT_EQ(lines, 8);
}
