#include "cli.hpp"

#include "splatdrive/image_io.hpp"
#include "splatdrive/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace splatdrive;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("splatdrive_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Writes a small scene spec and training config, then generates and trains
// once; the pipeline tests share the result.
struct Pipeline {
  fs::path root, data, ckpt;
  Result generate, train;

  Pipeline() {
    root = scratch("pipeline");
    SynthSceneSpec s = SynthSceneSpec::defaults();
    s.frames = 6;
    s.camera.intr.width = 32;
    s.camera.intr.height = 20;
    s.camera.intr.fx = s.camera.intr.fy = 20.0;
    s.camera.intr.cx = 15.5;
    s.camera.intr.cy = 9.5;
    s.lidar.channels = 10;
    s.lidar.azimuth_step_deg = 3.0;
    save_synth_spec(root / "scene.cfg", s);

    TrainConfig c = TrainConfig::defaults();
    c.total_steps = 12;
    c.warmup_fraction = 0.5;
    c.novel_view_ratio = 0.5;
    c.restore_interval = 6;
    c.log_interval = 4;
    c.ntd.layers = 2;
    c.ntd.hidden = 8;
    c.ntd.pe_bands_x = 2;
    c.ntd.pe_bands_t = 1;
    c.init.voxel_size = 0.6;
    c.holdout_every = 3;
    c.holdout_offset = 1;
    save_train_config(root / "train.cfg", c);

    data = root / "data";
    ckpt = root / "ckpt";
    generate = run_cli({"generate", "--spec", (root / "scene.cfg").string(), "--out", data.string(), "--workers", "1"});
    train = run_cli({"train", "--data", data.string(), "--config", (root / "train.cfg").string(), "--out",
                     ckpt.string(), "--workers", "1", "--seed", "7"});
  }
};

const Pipeline& pipeline() {
  static const Pipeline p;
  return p;
}

}  // namespace

TEST(Cli, HelpExitsZero) {
  const Result r = run_cli({"--help"});
  EXPECT_EQ(r.code, cli::kOk);
  EXPECT_NE(r.out.find("generate"), std::string::npos);
  EXPECT_NE(r.out.find("inspect"), std::string::npos);
  const Result sub = run_cli({"render", "--help"});
  EXPECT_EQ(sub.code, cli::kOk);
  EXPECT_NE(sub.out.find("--trajectory"), std::string::npos);
}

TEST(Cli, UsageErrorsExitOneWithHelp) {
  const Result unknown = run_cli({"inspect", "--ckpt", ".", "--bogus"});
  EXPECT_EQ(unknown.code, cli::kUsage);
  EXPECT_NE(unknown.err.find("--bogus"), std::string::npos);
  EXPECT_NE(unknown.err.find("--ckpt"), std::string::npos);
  EXPECT_EQ(run_cli({}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"generate"}).code, cli::kUsage);
  EXPECT_EQ(run_cli({"eval", "--ckpt", ".", "--data", ".", "--shift", "two"}).code, cli::kUsage);
}

TEST(Cli, RuntimeErrorsExitTwo) {
  const fs::path dir = scratch("runtime");
  std::ofstream(dir / "bad.cfg") << "frames = -3\n";
  const Result bad_spec = run_cli({"generate", "--spec", (dir / "bad.cfg").string(), "--out", (dir / "x").string()});
  EXPECT_EQ(bad_spec.code, cli::kRuntime);
  EXPECT_NE(bad_spec.err.find("error:"), std::string::npos);
  const Result not_ckpt = run_cli({"inspect", "--ckpt", dir.string()});
  EXPECT_EQ(not_ckpt.code, cli::kRuntime);
}

TEST(Cli, TrajectoryParsing) {
  EXPECT_EQ(cli::parse_trajectory("original"), 0.0);
  EXPECT_EQ(cli::parse_trajectory("shift:2"), 2.0);
  EXPECT_EQ(cli::parse_trajectory("shift:-1.5"), -1.5);
  EXPECT_THROW(cli::parse_trajectory("shift:"), InvalidInput);
  EXPECT_THROW(cli::parse_trajectory("shift:2m"), InvalidInput);
  EXPECT_THROW(cli::parse_trajectory("left"), InvalidInput);
}

TEST(CliPipeline, GenerateAndTrainSucceed) {
  const Pipeline& p = pipeline();
  ASSERT_EQ(p.generate.code, cli::kOk) << p.generate.err;
  ASSERT_EQ(p.train.code, cli::kOk) << p.train.err;
  EXPECT_TRUE(fs::exists(p.ckpt / "scene.ply"));
  EXPECT_TRUE(fs::exists(p.ckpt / "metrics.csv"));
  EXPECT_EQ(load_train_config(p.ckpt / "config.cfg").seed, 7u);
}

TEST(CliPipeline, RenderOriginalTwiceIsBitwiseIdentical) {
  const Pipeline& p = pipeline();
  ASSERT_EQ(p.train.code, cli::kOk);
  const fs::path a = p.root / "render_a", b = p.root / "render_b";
  ASSERT_EQ(run_cli({"render", "--ckpt", p.ckpt.string(), "--out", a.string()}).code, cli::kOk);
  ASSERT_EQ(run_cli({"render", "--ckpt", p.ckpt.string(), "--trajectory", "original", "--out", b.string(),
                     "--workers", "1"})
                .code,
            cli::kOk);
  for (int f = 0; f < 6; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.ppm", f);
    ASSERT_TRUE(fs::exists(a / name));
    EXPECT_EQ(file_bytes(a / name), file_bytes(b / name));
  }
}

TEST(CliPipeline, ShiftedRenderWritesRequestedFrames) {
  const Pipeline& p = pipeline();
  ASSERT_EQ(p.train.code, cli::kOk);
  const fs::path dir = p.root / "render_shift";
  const Result r = run_cli({"render", "--ckpt", p.ckpt.string(), "--trajectory", "shift:2", "--out", dir.string(),
                            "--frames", "1", "4"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "frame_0001.ppm"));
  EXPECT_TRUE(fs::exists(dir / "frame_0004_depth.pfm"));
  EXPECT_FALSE(fs::exists(dir / "frame_0000.ppm"));
  EXPECT_EQ(read_ppm(dir / "frame_0001.ppm").width, 32);
  EXPECT_EQ(run_cli({"render", "--ckpt", p.ckpt.string(), "--trajectory", "sideways", "--out", dir.string()}).code,
            cli::kRuntime);
}

TEST(CliPipeline, EvalWritesReportWithSummaryRow) {
  const Pipeline& p = pipeline();
  ASSERT_EQ(p.train.code, cli::kOk);
  const fs::path report = p.root / "reports" / "shift2.csv";
  const Result r = run_cli({"eval", "--ckpt", p.ckpt.string(), "--data", p.data.string(), "--shift", "2", "--report",
                            report.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("PSNR"), std::string::npos);
  std::ifstream in(report);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 8u);  // header, six frames, mean
  EXPECT_EQ(lines.front(), "frame,shift,psnr,ssim,nta_iou,ntl_iou,depth_mae");
  EXPECT_EQ(lines.back().substr(0, 5), "mean,");
}

TEST(CliPipeline, InspectPrintsCountsAndConfig) {
  const Pipeline& p = pipeline();
  ASSERT_EQ(p.train.code, cli::kOk);
  const Result r = run_cli({"inspect", "--ckpt", p.ckpt.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const Checkpoint ck = load_checkpoint(p.ckpt);
  EXPECT_NE(r.out.find("step: 12"), std::string::npos);
  EXPECT_NE(r.out.find("ground: " + std::to_string(ck.scene.ground.size())), std::string::npos);
  EXPECT_NE(r.out.find("total: " + std::to_string(ck.scene.total_count())), std::string::npos);
  EXPECT_NE(r.out.find("ntdnet: 2 layers x 8"), std::string::npos);
  EXPECT_NE(r.out.find("total_steps = 12"), std::string::npos);
}

TEST(CliPipeline, InputDatasetIsNotModified) {
  const Pipeline& p = pipeline();
  ASSERT_EQ(p.train.code, cli::kOk);
  std::vector<std::pair<std::string, fs::file_time_type>> before;
  for (const auto& e : fs::recursive_directory_iterator(p.data)) before.emplace_back(e.path().string(), e.last_write_time());
  ASSERT_EQ(run_cli({"eval", "--ckpt", p.ckpt.string(), "--data", p.data.string()}).code, cli::kOk);
  std::vector<std::pair<std::string, fs::file_time_type>> after;
  for (const auto& e : fs::recursive_directory_iterator(p.data)) after.emplace_back(e.path().string(), e.last_write_time());
  EXPECT_EQ(before, after);
}
