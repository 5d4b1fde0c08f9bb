#include "cli.hpp"

#include "splatdrive/evaluation.hpp"
#include "splatdrive/image_io.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

namespace splatdrive::cli {

namespace fs = std::filesystem;

double parse_trajectory(const std::string& text) {
  if (text == "original") return 0.0;
  const std::string prefix = "shift:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string number = text.substr(prefix.size());
    std::size_t used = 0;
    double meters = 0.0;
    try {
      meters = std::stod(number, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used > 0 && used == number.size() && std::isfinite(meters)) return meters;
  }
  throw InvalidInput("trajectory must be 'original' or 'shift:<meters>', got '" + text + "'");
}

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  int resolved_workers() const {
    const int n = workers.value_or(0);
    return n > 0 ? n : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
};

struct GenerateArgs {
  std::string spec;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  std::string restorer;
};

struct RenderArgs {
  std::string ckpt;
  std::string trajectory = "original";
  std::string out;
  std::vector<int> frames;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  double shift = 0.0;
  std::string report;
  std::vector<int> frames;
};

struct InspectArgs {
  std::string ckpt;
};

int do_generate(const GenerateArgs& a, const Globals& g, std::ostream& out) {
  SynthSceneSpec spec = a.spec.empty() ? SynthSceneSpec::defaults() : load_synth_spec(a.spec);
  if (g.seed) spec.seed = *g.seed;
  const SynthScene scene = generate(spec);
  export_dataset(scene, a.out, g.resolved_workers());
  out << "wrote " << scene.cameras.size() << " frames to " << a.out << "\n";
  return kOk;
}

int do_train(const TrainArgs& a, const Globals& g, std::ostream& out) {
  const Dataset ds = load_dataset(a.data);
  TrainConfig cfg = a.config.empty() ? TrainConfig::defaults() : load_train_config(a.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = g.resolved_workers();
  if (!a.restorer.empty()) cfg.restorer = a.restorer;
  cfg.validate();
  TrainOptions opt;
  opt.checkpoint_dir = a.out;
  opt.resume_from = a.resume;
  const TrainResult r = train(ds, cfg, opt);
  out << "trained " << cfg.total_steps << " steps, " << r.scene.total_count() << " Gaussians\n";
  char line[128];
  std::snprintf(line, sizeof(line), "holdout PSNR %.3f dB (initial %.3f dB)\n", r.final_holdout_psnr,
                r.initial_holdout_psnr);
  out << line;
  if (r.restore_fallbacks > 0) out << "restorer fell back to identity " << r.restore_fallbacks << " times\n";
  out << "checkpoint: " << a.out << "\n";
  return kOk;
}

std::vector<int> resolve_frames(const std::vector<int>& requested, int count) {
  std::vector<int> frames = requested;
  if (frames.empty()) {
    for (int f = 0; f < count; ++f) frames.push_back(f);
  }
  for (int f : frames) {
    if (f < 0 || f >= count) throw InvalidInput("frame " + std::to_string(f) + " is out of range");
  }
  return frames;
}

int do_render(const RenderArgs& a, const Globals& g, std::ostream& out) {
  const double shift = parse_trajectory(a.trajectory);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const int count = static_cast<int>(ck.cameras.size());
  const std::vector<int> frames = resolve_frames(a.frames, count);
  fs::create_directories(a.out);
  const NtdNet* ntd = ck.ntd ? &*ck.ntd : nullptr;
  for (int f : frames) {
    const RenderOutput r = render_view(ck.scene, ntd, ck.cameras[f], shift, f, count, g.resolved_workers());
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d", f);
    write_ppm(fs::path(a.out) / (std::string(name) + ".ppm"), r.color);
    write_pfm(fs::path(a.out) / (std::string(name) + "_depth.pfm"), r.depth);
  }
  out << "rendered " << frames.size() << " frames to " << a.out << "\n";
  return kOk;
}

int do_eval(const EvalArgs& a, const Globals& g, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const Dataset ds = load_dataset(a.data);
  if (ds.frame_count() != static_cast<int>(ck.cameras.size())) {
    throw InvalidInput("checkpoint and dataset have different frame counts");
  }
  EvalOptions opt;
  opt.shift = a.shift;
  opt.frames = a.frames;
  opt.workers = g.resolved_workers();
  const EvalReport report = evaluate(ck.scene, ck.ntd ? &*ck.ntd : nullptr, ds, ck.config, opt);
  if (!a.report.empty()) {
    if (fs::path(a.report).has_parent_path()) fs::create_directories(fs::path(a.report).parent_path());
    write_eval_csv(a.report, report);
  }
  const EvalRow& m = report.mean;
  char line[256];
  std::snprintf(line, sizeof(line), "shift %.3f m over %zu frames: PSNR %.3f dB, SSIM %.4f, NTA-IoU %s, NTL-IoU %.4f",
                a.shift, report.rows.size(), m.psnr, m.ssim,
                m.nta_empty ? "n/a" : std::to_string(m.nta_iou).c_str(), m.ntl_iou);
  out << line;
  if (std::isfinite(m.depth_mae)) {
    std::snprintf(line, sizeof(line), ", depth MAE %.4f m", m.depth_mae);
    out << line;
  }
  out << "\n";
  return kOk;
}

int do_inspect(const InspectArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const SceneModel& s = ck.scene;
  out << "step: " << ck.step << "\n";
  out << "frames: " << ck.cameras.size() << "\n";
  out << "sh_degree: " << s.sh_degree << "\n";
  out << "ground: " << s.ground.size() << "\n";
  out << "background: " << s.background.size() << "\n";
  out << "objects: " << s.objects.size() << "\n";
  for (const auto& obj : s.objects) {
    out << "  object " << obj.id << ": " << obj.gaussians.size() << " Gaussians, " << obj.poses.size()
        << " poses\n";
  }
  out << "total: " << s.total_count() << "\n";
  if (ck.ntd) {
    const NtdConfig& n = ck.ntd->config();
    out << "ntdnet: " << n.layers << " layers x " << n.hidden << ", " << ck.ntd->params().parameter_count()
        << " parameters\n";
  } else {
    out << "ntdnet: none\n";
  }
  out << "config:\n";
  std::ifstream cfg(fs::path(a.ckpt) / "config.cfg");
  std::string line;
  while (std::getline(cfg, line)) out << "  " << line << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian-splatting street scene reconstruction with novel-trajectory deformation", "splatdrive"};
  app.require_subcommand(1);

  Globals g;
  std::uint64_t seed = 42;
  int workers = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random draw (default 42)");
  auto* workers_opt =
      app.add_option("--workers", workers, "Rasterizer and ray tracer threads; 0 or unset uses all cores")
          ->check(CLI::NonNegativeNumber);

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Build a synthetic dataset");
  generate_cmd->add_option("--spec", gen.spec, "Scene spec file (defaults when omitted)")->check(CLI::ExistingFile);
  generate_cmd->add_option("--out", gen.out, "Output dataset directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a scene model on a dataset");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--config", tr.config, "Training config (defaults when omitted)")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "Checkpoint directory")->required();
  train_cmd->add_option("--resume", tr.resume, "Continue from this checkpoint")->check(CLI::ExistingDirectory);
  train_cmd->add_option("--restorer", tr.restorer, "'identity' or an external command; overrides the config");

  RenderArgs rd;
  auto* render_cmd = app.add_subcommand("render", "Render frames from a checkpoint");
  render_cmd->add_option("--ckpt", rd.ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  render_cmd->add_option("--trajectory", rd.trajectory, "original | shift:<meters>")->capture_default_str();
  render_cmd->add_option("--out", rd.out, "Output directory")->required();
  render_cmd->add_option("--frames", rd.frames, "Frame indices (all when omitted)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint against a dataset");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--shift", ev.shift, "Lateral trajectory offset in meters")->capture_default_str();
  eval_cmd->add_option("--report", ev.report, "Per-frame CSV report");
  eval_cmd->add_option("--frames", ev.frames, "Frame indices (held-out frames for shift 0, else all)");

  InspectArgs in;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print checkpoint contents");
  inspect_cmd->add_option("--ckpt", in.ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);

  for (auto* sub : {generate_cmd, train_cmd, render_cmd, eval_cmd, inspect_cmd}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failing = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failing->help();
    return kUsage;
  }

  if (seed_opt->count() > 0) g.seed = seed;
  if (workers_opt->count() > 0) g.workers = workers;
  set_default_workers(g.resolved_workers());

  try {
    if (generate_cmd->parsed()) return do_generate(gen, g, out);
    if (train_cmd->parsed()) return do_train(tr, g, out);
    if (render_cmd->parsed()) return do_render(rd, g, out);
    if (eval_cmd->parsed()) return do_eval(ev, g, out);
    if (inspect_cmd->parsed()) return do_inspect(in, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace splatdrive::cli
