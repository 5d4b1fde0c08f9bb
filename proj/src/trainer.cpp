#include "splatdrive/trainer.hpp"

#include "splatdrive/metrics.hpp"
#include "splatdrive/tensor_blob.hpp"

#include <spdlog/spdlog.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace splatdrive {

// ── Configuration ───────────────────────────────────────────────

TrainConfig TrainConfig::defaults() {
  TrainConfig c;
  c.init.sh_degree = 3;
  c.init.extra_random_points = 0;
  c.init.voxel_size = 0.3;
  c.init.initial_opacity = 0.1;
  c.init.max_scale = 1.0;
  c.init.box_margin = 0.1;
  c.lr.sh_dc = 5e-3;
  c.ntd.layers = 4;
  c.ntd.hidden = 64;
  c.ntd.pe_bands_x = 6;
  c.ntd.pe_bands_t = 4;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (lambda_rgb < 0.0 || lambda_ssim < 0.0 || lambda_depth < 0.0) fail("loss weights must be >= 0");
  if (total_steps < 0) fail("total_steps must be >= 0");
  if (novel_view_ratio < 0.0 || novel_view_ratio > 1.0) fail("novel_view_ratio must be in [0, 1]");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) fail("warmup_fraction must be in [0, 1]");
  if (restore_interval <= 0) fail("restore_interval must be positive");
  if (densify_interval <= 0 || log_interval <= 0 || checkpoint_interval <= 0) fail("intervals must be positive");
  if (holdout_every <= 0 || holdout_offset < 0) fail("bad holdout split");
  if (colorize_window < 0) fail("colorize_window must be >= 0");
  if (workers < 0) fail("workers must be >= 0");
  if (!(lr.position_init > 0.0) || !(lr.position_final > 0.0)) fail("position learning rates must be positive");
  for (double s : novel_shifts) {
    if (s == 0.0) fail("novel shifts must be nonzero");
  }
  if (novel_view_ratio > 0.0 && novel_shifts.empty()) fail("novel_view_ratio > 0 needs novel_shifts");
  if (init.sh_degree < 0 || init.sh_degree > kMaxShDegree) fail("sh_degree must be within 0..3");
}

namespace {

const std::set<std::string> kTrainKeys = {
    "lambda_rgb", "lambda_ssim", "lambda_depth", "total_steps", "lr_position_init", "lr_position_final",
    "lr_rotation", "lr_scale", "lr_opacity", "lr_sh_dc", "lr_sh_rest", "lr_ntdnet", "warmup_fraction",
    "novel_view_ratio", "novel_shifts", "restore_interval", "restorer", "densify_interval", "densify_from",
    "densify_until_fraction", "densify_grad_threshold", "percent_dense", "prune_opacity", "max_gaussians",
    "use_ntdnet", "ground_model", "ntd_layers", "ntd_hidden", "ntd_pe_bands_x", "ntd_pe_bands_t", "ntd_length",
    "sh_degree", "voxel_size", "ground_voxel_size", "extra_random_points", "initial_opacity", "knn", "min_scale", "max_scale",
    "box_margin", "ground_threshold", "ground_iterations", "ground_min_fraction", "colorize_window",
    "holdout_every", "holdout_offset", "log_interval", "checkpoint_interval", "seed", "workers"};

}  // namespace

TrainConfig train_config_from(const KeyValueFile& kv) {
  kv.reject_unknown(kTrainKeys);
  TrainConfig c = TrainConfig::defaults();
  c.lambda_rgb = kv.get_double("lambda_rgb", c.lambda_rgb);
  c.lambda_ssim = kv.get_double("lambda_ssim", c.lambda_ssim);
  c.lambda_depth = kv.get_double("lambda_depth", c.lambda_depth);
  c.total_steps = kv.get_int("total_steps", c.total_steps);
  c.lr.position_init = kv.get_double("lr_position_init", c.lr.position_init);
  c.lr.position_final = kv.get_double("lr_position_final", c.lr.position_final);
  c.lr.rotation = kv.get_double("lr_rotation", c.lr.rotation);
  c.lr.log_scale = kv.get_double("lr_scale", c.lr.log_scale);
  c.lr.opacity = kv.get_double("lr_opacity", c.lr.opacity);
  c.lr.sh_dc = kv.get_double("lr_sh_dc", c.lr.sh_dc);
  c.lr.sh_rest = kv.get_double("lr_sh_rest", c.lr.sh_rest);
  c.lr.ntdnet = kv.get_double("lr_ntdnet", c.lr.ntdnet);
  c.warmup_fraction = kv.get_double("warmup_fraction", c.warmup_fraction);
  c.novel_view_ratio = kv.get_double("novel_view_ratio", c.novel_view_ratio);
  if (kv.has("novel_shifts")) c.novel_shifts = parse_numbers(kv.get_string("novel_shifts", ""), "novel_shifts");
  c.restore_interval = kv.get_int("restore_interval", c.restore_interval);
  c.restorer = kv.get_string("restorer", c.restorer);
  c.densify_interval = kv.get_int("densify_interval", c.densify_interval);
  c.densify_from = kv.get_int("densify_from", c.densify_from);
  c.densify_until_fraction = kv.get_double("densify_until_fraction", c.densify_until_fraction);
  c.densify_grad_threshold = kv.get_double("densify_grad_threshold", c.densify_grad_threshold);
  c.percent_dense = kv.get_double("percent_dense", c.percent_dense);
  c.prune_opacity = kv.get_double("prune_opacity", c.prune_opacity);
  c.max_gaussians = static_cast<std::size_t>(kv.get_u64("max_gaussians", c.max_gaussians));
  c.use_ntdnet = kv.get_bool("use_ntdnet", c.use_ntdnet);
  c.ground_model = kv.get_bool("ground_model", c.ground_model);
  c.ntd.layers = kv.get_int("ntd_layers", c.ntd.layers);
  c.ntd.hidden = kv.get_int("ntd_hidden", c.ntd.hidden);
  c.ntd.pe_bands_x = kv.get_int("ntd_pe_bands_x", c.ntd.pe_bands_x);
  c.ntd.pe_bands_t = kv.get_int("ntd_pe_bands_t", c.ntd.pe_bands_t);
  c.ntd.length = kv.get_double("ntd_length", c.ntd.length);
  c.init.sh_degree = kv.get_int("sh_degree", c.init.sh_degree);
  c.init.voxel_size = kv.get_double("voxel_size", c.init.voxel_size);
  c.init.ground_voxel_size = kv.get_double("ground_voxel_size", c.init.ground_voxel_size);
  c.init.extra_random_points = kv.get_int("extra_random_points", c.init.extra_random_points);
  c.init.initial_opacity = kv.get_double("initial_opacity", c.init.initial_opacity);
  c.init.knn = kv.get_int("knn", c.init.knn);
  c.init.min_scale = kv.get_double("min_scale", c.init.min_scale);
  c.init.max_scale = kv.get_double("max_scale", c.init.max_scale);
  c.init.box_margin = kv.get_double("box_margin", c.init.box_margin);
  c.init.ground.inlier_threshold = kv.get_double("ground_threshold", c.init.ground.inlier_threshold);
  c.init.ground.iterations = kv.get_int("ground_iterations", c.init.ground.iterations);
  c.init.ground.min_inlier_fraction = kv.get_double("ground_min_fraction", c.init.ground.min_inlier_fraction);
  c.colorize_window = kv.get_int("colorize_window", c.colorize_window);
  c.holdout_every = kv.get_int("holdout_every", c.holdout_every);
  c.holdout_offset = kv.get_int("holdout_offset", c.holdout_offset);
  c.log_interval = kv.get_int("log_interval", c.log_interval);
  c.checkpoint_interval = kv.get_int("checkpoint_interval", c.checkpoint_interval);
  c.seed = kv.get_u64("seed", c.seed);
  c.workers = kv.get_int("workers", c.workers);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return train_config_from(KeyValueFile::load(path));
}

void save_train_config(const std::filesystem::path& path, const TrainConfig& c) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  auto put = [&](const char* key, double v) { out << key << " = " << format_exact(v) << "\n"; };
  auto put_i = [&](const char* key, long long v) { out << key << " = " << v << "\n"; };
  auto put_b = [&](const char* key, bool v) { out << key << " = " << (v ? "true" : "false") << "\n"; };
  put("lambda_rgb", c.lambda_rgb);
  put("lambda_ssim", c.lambda_ssim);
  put("lambda_depth", c.lambda_depth);
  put_i("total_steps", c.total_steps);
  put("lr_position_init", c.lr.position_init);
  put("lr_position_final", c.lr.position_final);
  put("lr_rotation", c.lr.rotation);
  put("lr_scale", c.lr.log_scale);
  put("lr_opacity", c.lr.opacity);
  put("lr_sh_dc", c.lr.sh_dc);
  put("lr_sh_rest", c.lr.sh_rest);
  put("lr_ntdnet", c.lr.ntdnet);
  put("warmup_fraction", c.warmup_fraction);
  put("novel_view_ratio", c.novel_view_ratio);
  out << "novel_shifts =";
  for (double s : c.novel_shifts) out << " " << format_exact(s);
  out << "\n";
  put_i("restore_interval", c.restore_interval);
  out << "restorer = " << c.restorer << "\n";
  put_i("densify_interval", c.densify_interval);
  put_i("densify_from", c.densify_from);
  put("densify_until_fraction", c.densify_until_fraction);
  put("densify_grad_threshold", c.densify_grad_threshold);
  put("percent_dense", c.percent_dense);
  put("prune_opacity", c.prune_opacity);
  put_i("max_gaussians", static_cast<long long>(c.max_gaussians));
  put_b("use_ntdnet", c.use_ntdnet);
  put_b("ground_model", c.ground_model);
  put_i("ntd_layers", c.ntd.layers);
  put_i("ntd_hidden", c.ntd.hidden);
  put_i("ntd_pe_bands_x", c.ntd.pe_bands_x);
  put_i("ntd_pe_bands_t", c.ntd.pe_bands_t);
  put("ntd_length", c.ntd.length);
  put_i("sh_degree", c.init.sh_degree);
  put("voxel_size", c.init.voxel_size);
  put("ground_voxel_size", c.init.ground_voxel_size);
  put_i("extra_random_points", c.init.extra_random_points);
  put("initial_opacity", c.init.initial_opacity);
  put_i("knn", c.init.knn);
  put("min_scale", c.init.min_scale);
  put("max_scale", c.init.max_scale);
  put("box_margin", c.init.box_margin);
  put("ground_threshold", c.init.ground.inlier_threshold);
  put_i("ground_iterations", c.init.ground.iterations);
  put("ground_min_fraction", c.init.ground.min_inlier_fraction);
  put_i("colorize_window", c.colorize_window);
  put_i("holdout_every", c.holdout_every);
  put_i("holdout_offset", c.holdout_offset);
  put_i("log_interval", c.log_interval);
  put_i("checkpoint_interval", c.checkpoint_interval);
  out << "seed = " << c.seed << "\n";
  put_i("workers", c.workers);
}

// ── Loss ────────────────────────────────────────────────────────

LossTerms compute_loss(const RenderOutput& render, const FrameBundle& bundle, const TrainConfig& cfg,
                       RenderGrads* grads) {
  if (!render.color.same_shape(bundle.image)) throw InvalidInput("render and target differ in shape");
  LossTerms terms;
  const std::size_t n = render.color.data.size();
  if (grads != nullptr) {
    grads->color = Image(render.color.width, render.color.height, 3);
    grads->depth = Image();
    grads->alpha = Image();
  }
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = render.color.data[i] - bundle.image.data[i];
    l1 += std::abs(d);
    if (grads != nullptr) {
      grads->color.data[i] = cfg.lambda_rgb * static_cast<double>((d > 0.0) - (d < 0.0)) / static_cast<double>(n);
    }
  }
  terms.l1 = l1 / static_cast<double>(n);
  if (cfg.lambda_ssim > 0.0 || grads == nullptr) {
    Image g_ssim;
    terms.ssim = grads != nullptr ? ssim_with_grad(render.color, bundle.image, g_ssim)
                                  : ssim(render.color, bundle.image);
    if (grads != nullptr) {
      for (std::size_t i = 0; i < n; ++i) grads->color.data[i] -= cfg.lambda_ssim * g_ssim.data[i];
    }
  } else {
    terms.ssim = ssim(render.color, bundle.image);
  }
  if (bundle.depth && cfg.lambda_depth > 0.0) {
    const DepthResiduals r = depth_residual(render.depth, *bundle.depth);
    terms.depth = r.mean_abs();
    if (grads != nullptr && !r.values.empty()) {
      grads->depth = Image(render.depth.width, render.depth.height, 1);
      const double w = cfg.lambda_depth / static_cast<double>(r.values.size());
      for (std::size_t k = 0; k < r.values.size(); ++k) {
        const double v = r.values[k];
        grads->depth.data[r.pixels[k]] = w * static_cast<double>((v > 0.0) - (v < 0.0));
      }
    }
  }
  terms.total = cfg.lambda_rgb * terms.l1 + cfg.lambda_ssim * (1.0 - terms.ssim) + cfg.lambda_depth * terms.depth;
  return terms;
}

// ── Optimizer ───────────────────────────────────────────────────

AdamState AdamState::for_scene(const SceneModel& scene, const NtdNet* ntd) {
  AdamState s;
  s.m = SceneGradients::zeros_like(scene);
  s.v = SceneGradients::zeros_like(scene);
  if (ntd != nullptr) {
    s.ntd_m = ntd->params().zeros_like();
    s.ntd_v = ntd->params().zeros_like();
  }
  return s;
}

double position_lr(const TrainConfig& cfg, int step) {
  if (cfg.total_steps <= 0) return cfg.lr.position_init;
  const double f = std::clamp(static_cast<double>(step) / cfg.total_steps, 0.0, 1.0);
  return std::exp((1.0 - f) * std::log(cfg.lr.position_init) + f * std::log(cfg.lr.position_final));
}

namespace {

enum Group { kPosition, kRotation, kScale, kOpacity, kShDc, kShRest, kGroupCount };

struct AdamCoeffs {
  double c1;  // 1 - beta1^t
  double c2;  // 1 - beta2^t
};

inline void adam_update(double& p, double g, double& m, double& v, double lr, const AdamCoeffs& k) {
  m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
  v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
  p -= lr * (m / k.c1) / (std::sqrt(v / k.c2) + kAdamEps);
}

template <typename V>
bool finite_all(const V& v) {
  return v.allFinite();
}

void check_groups(const std::vector<GaussianGrad>& grads, int sh_count, std::array<bool, kGroupCount>& ok) {
  for (const auto& g : grads) {
    ok[kPosition] = ok[kPosition] && finite_all(g.position);
    ok[kRotation] = ok[kRotation] && finite_all(g.rotation);
    ok[kScale] = ok[kScale] && finite_all(g.log_scale);
    ok[kOpacity] = ok[kOpacity] && std::isfinite(g.opacity_logit);
    ok[kShDc] = ok[kShDc] && finite_all(g.sh[0]);
    for (int k = 1; k < sh_count; ++k) ok[kShRest] = ok[kShRest] && finite_all(g.sh[k]);
  }
}

void update_list(std::vector<Gaussian3D>& gs, const std::vector<GaussianGrad>& grads, std::vector<GaussianGrad>& m,
                 std::vector<GaussianGrad>& v, const std::array<bool, kGroupCount>& ok, bool freeze_position,
                 int sh_count, double lr_pos, const TrainConfig& cfg, const AdamCoeffs& k) {
  for (std::size_t i = 0; i < gs.size(); ++i) {
    Gaussian3D& g = gs[i];
    const GaussianGrad& d = grads[i];
    if (ok[kPosition] && !freeze_position) {
      for (int a = 0; a < 3; ++a) adam_update(g.position[a], d.position[a], m[i].position[a], v[i].position[a], lr_pos, k);
    }
    if (ok[kRotation]) {
      for (int a = 0; a < 4; ++a) {
        adam_update(g.rotation[a], d.rotation[a], m[i].rotation[a], v[i].rotation[a], cfg.lr.rotation, k);
      }
      g.rotation = normalize_quat(g.rotation);
    }
    if (ok[kScale]) {
      for (int a = 0; a < 3; ++a) {
        adam_update(g.log_scale[a], d.log_scale[a], m[i].log_scale[a], v[i].log_scale[a], cfg.lr.log_scale, k);
      }
    }
    if (ok[kOpacity]) adam_update(g.opacity_logit, d.opacity_logit, m[i].opacity_logit, v[i].opacity_logit, cfg.lr.opacity, k);
    if (ok[kShDc]) {
      for (int a = 0; a < 3; ++a) adam_update(g.sh[0][a], d.sh[0][a], m[i].sh[0][a], v[i].sh[0][a], cfg.lr.sh_dc, k);
    }
    if (ok[kShRest]) {
      for (int c = 1; c < sh_count; ++c) {
        for (int a = 0; a < 3; ++a) adam_update(g.sh[c][a], d.sh[c][a], m[i].sh[c][a], v[i].sh[c][a], cfg.lr.sh_rest, k);
      }
    }
  }
}

}  // namespace

void optimizer_step(SceneModel& scene, NtdNet* ntd, const SceneGradients& grads, const NtdParams* ntd_grads,
                    AdamState& state, const TrainConfig& cfg, int step) {
  const int sh_count = sh_coeff_count(scene.sh_degree);
  std::array<bool, kGroupCount> ok;
  ok.fill(true);
  check_groups(grads.ground, sh_count, ok);
  check_groups(grads.background, sh_count, ok);
  for (const auto& o : grads.objects) check_groups(o, sh_count, ok);
  for (bool b : ok) {
    if (!b) ++state.skipped_groups;
  }
  if (std::find(ok.begin(), ok.end(), false) != ok.end()) {
    spdlog::warn("step {}: non-finite gradient, skipping the affected parameter groups", step);
  }

  ++state.step;
  const AdamCoeffs k{1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step)),
                     1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step))};
  const double lr_pos = position_lr(cfg, step);
  update_list(scene.ground, grads.ground, state.m.ground, state.v.ground, ok, true, sh_count, lr_pos, cfg, k);
  update_list(scene.background, grads.background, state.m.background, state.v.background, ok, false, sh_count,
              lr_pos, cfg, k);
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    update_list(scene.objects[o].gaussians, grads.objects[o], state.m.objects[o], state.v.objects[o], ok, false,
                sh_count, lr_pos, cfg, k);
  }

  if (ntd == nullptr || ntd_grads == nullptr) return;
  if (!state.ntd_m) {
    state.ntd_m = ntd->params().zeros_like();
    state.ntd_v = ntd->params().zeros_like();
  }
  const auto g_list = ntd_grads->tensors();
  for (const auto& [name, g] : g_list) {
    if (!g->allFinite()) {
      ++state.skipped_groups;
      spdlog::warn("step {}: non-finite network gradient, skipping the network update", step);
      return;
    }
  }
  ++state.ntd_step;
  const AdamCoeffs kn{1.0 - std::pow(kAdamBeta1, static_cast<double>(state.ntd_step)),
                      1.0 - std::pow(kAdamBeta2, static_cast<double>(state.ntd_step))};
  auto p_list = ntd->params().tensors();
  auto m_list = state.ntd_m->tensors();
  auto v_list = state.ntd_v->tensors();
  for (std::size_t t = 0; t < p_list.size(); ++t) {
    Matrix& p = *p_list[t].second;
    const Matrix& g = *g_list[t].second;
    Matrix& m = *m_list[t].second;
    Matrix& v = *v_list[t].second;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      adam_update(p.data()[i], g.data()[i], m.data()[i], v.data()[i], cfg.lr.ntdnet, kn);
    }
  }
}

// ── Density control ─────────────────────────────────────────────

DensifyStats DensifyStats::zeros_like(const SceneModel& scene) {
  return {SceneScalars::zeros_like(scene), SceneScalars::zeros_like(scene)};
}

namespace {

// Rebuilds one component list: clone/split candidates, then prune.
void densify_list(std::vector<Gaussian3D>& gs, std::vector<GaussianGrad>& m, std::vector<GaussianGrad>& v,
                  const std::vector<double>& grad_sum, const std::vector<double>& seen, const TrainConfig& cfg,
                  double extent, std::size_t& budget, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double boundary = cfg.percent_dense * extent;
  std::vector<Gaussian3D> out;
  std::vector<GaussianGrad> om, ov;
  out.reserve(gs.size());
  const std::size_t n = gs.size();
  std::vector<Gaussian3D> born;
  for (std::size_t i = 0; i < n; ++i) {
    const bool hot = seen[i] > 0.0 && grad_sum[i] / seen[i] >= cfg.densify_grad_threshold;
    bool keep = true;
    if (hot && budget > 0) {
      const Gaussian3D& g = gs[i];
      if (g.scale().maxCoeff() <= boundary) {
        born.push_back(g);
        --budget;
      } else {
        const Mat3 r = quat_to_rotmat(g.rotation);
        const Vec3 s = g.scale();
        for (int c = 0; c < 2; ++c) {
          Gaussian3D child = g;
          child.position = g.position + r * s.cwiseProduct(Vec3(normal(rng), normal(rng), normal(rng)));
          child.log_scale = g.log_scale - Vec3::Constant(std::log(1.6));
          born.push_back(child);
        }
        keep = false;
        budget = budget > 0 ? budget - 1 : 0;
      }
    }
    if (keep && gs[i].opacity() >= cfg.prune_opacity) {
      out.push_back(gs[i]);
      om.push_back(m[i]);
      ov.push_back(v[i]);
    }
  }
  for (const auto& g : born) {
    if (g.opacity() < cfg.prune_opacity) continue;
    out.push_back(g);
    om.emplace_back();
    ov.emplace_back();
  }
  gs = std::move(out);
  m = std::move(om);
  v = std::move(ov);
}

}  // namespace

void densify_and_prune(SceneModel& scene, DensifyStats& stats, AdamState& adam, const TrainConfig& cfg,
                       double scene_extent, std::mt19937_64& rng) {
  const std::size_t total = scene.total_count();
  std::size_t budget = total < cfg.max_gaussians ? cfg.max_gaussians - total : 0;
  densify_list(scene.background, adam.m.background, adam.v.background, stats.grad_sum.background,
               stats.seen.background, cfg, scene_extent, budget, rng);
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    densify_list(scene.objects[o].gaussians, adam.m.objects[o], adam.v.objects[o], stats.grad_sum.objects[o],
                 stats.seen.objects[o], cfg, scene_extent, budget, rng);
  }
  stats = DensifyStats::zeros_like(scene);
}

// ── Restorers ───────────────────────────────────────────────────

std::vector<Image> IdentityRestorer::restore(const std::vector<RestoreItem>& items) {
  std::vector<Image> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.image);
  return out;
}

ExternalRestorer::ExternalRestorer(std::string command, std::filesystem::path work_dir)
    : command_(std::move(command)), work_dir_(std::move(work_dir)) {}

namespace {

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') {
      q += "'\\''";
    } else {
      q += c;
    }
  }
  return q + "'";
}

}  // namespace

std::vector<Image> ExternalRestorer::restore(const std::vector<RestoreItem>& items) {
  namespace fs = std::filesystem;
  const fs::path in = work_dir_ / "in", out = work_dir_ / "out";
  std::error_code ec;
  fs::remove_all(in, ec);
  fs::remove_all(out, ec);
  fs::create_directories(in);
  fs::create_directories(out);
  for (const auto& it : items) write_ppm(in / (it.name + ".ppm"), it.image);
  const std::string cmd = command_ + " " + shell_quote(in.string()) + " " + shell_quote(out.string());
  spdlog::debug("running restorer: {}", cmd);
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw RestorationFailed("restorer command failed (status " + std::to_string(status) + "): " + command_);
  }
  std::vector<Image> result;
  result.reserve(items.size());
  for (const auto& it : items) {
    const fs::path p = out / (it.name + ".ppm");
    if (!fs::exists(p)) throw RestorationFailed("restorer produced no " + p.filename().string());
    Image img;
    try {
      img = read_ppm(p);
    } catch (const LoadError& e) {
      throw RestorationFailed(e.what());
    }
    if (!img.same_shape(it.image)) throw RestorationFailed("restored " + p.filename().string() + " changed shape");
    result.push_back(std::move(img));
  }
  return result;
}

std::unique_ptr<Restorer> make_restorer(const std::string& spec, const std::filesystem::path& work_dir) {
  if (spec.empty() || spec == "identity") return std::make_unique<IdentityRestorer>();
  return std::make_unique<ExternalRestorer>(spec, work_dir);
}

std::string restore_item_name(int frame, double shift) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04d_%+.3f", frame, shift);
  return buf;
}

std::vector<Image> restore_frames(const std::vector<RestoreItem>& items, Restorer& restorer, int* fallbacks) {
  try {
    return restorer.restore(items);
  } catch (const RestorationFailed& e) {
    spdlog::warn("restoration failed, using renders unchanged: {}", e.what());
    if (fallbacks != nullptr) ++*fallbacks;
    return IdentityRestorer().restore(items);
  }
}

// ── Rendering ───────────────────────────────────────────────────

Se3 body_pose(const CameraPose& cam) { return cam.world_to_camera.inverse(); }

namespace {

// Forward pass of one view with everything the backward pass needs.
struct ViewPass {
  AssembledFrame frame;
  CameraPose cam;
  bool deformed = false;
  std::vector<int> subset;             // indices into frame.gaussians when deformed
  std::vector<Gaussian3D> undeformed;  // frame.gaussians[subset]
  std::vector<Gaussian3D> deformed_list;
  Matrix deltas;
  NtdNet::Cache cache;
  RenderState state;
  RenderOutput out;

  std::span<const Gaussian3D> render_list() const {
    return deformed ? std::span<const Gaussian3D>(deformed_list) : std::span<const Gaussian3D>(frame.gaussians);
  }
};

void forward_view(ViewPass& vp, const SceneModel& scene, const NtdNet* ntd, const CameraPose& original, double shift,
                  int t, int frame_count, int workers) {
  vp.frame = assemble_frame(scene, t);
  vp.cam = shift == 0.0 ? original : lateral_shift(original, shift);
  vp.deformed = ntd != nullptr && shift != 0.0;
  if (vp.deformed) {
    vp.subset.clear();
    vp.undeformed.clear();
    for (std::size_t i = 0; i < vp.frame.gaussians.size(); ++i) {
      if (project_gaussian(vp.frame.gaussians[i], scene.sh_degree, vp.cam)) {
        vp.subset.push_back(static_cast<int>(i));
        vp.undeformed.push_back(vp.frame.gaussians[i]);
      }
    }
    std::vector<Vec3> positions(vp.undeformed.size());
    for (std::size_t k = 0; k < positions.size(); ++k) positions[k] = vp.undeformed[k].position;
    const double time = frame_count > 1 ? static_cast<double>(t) / (frame_count - 1) : 0.0;
    const Vec6 dp = delta_pose(body_pose(vp.cam), body_pose(original), ntd->config().length);
    vp.deltas = ntd->forward(dp, positions, time, &vp.cache);
    vp.deformed_list = apply_deformation(vp.undeformed, vp.deltas);
  }
  vp.out = render(vp.render_list(), scene.sh_degree, vp.cam, &vp.state, workers);
}

}  // namespace

RenderOutput render_view(const SceneModel& scene, const NtdNet* ntd, const CameraPose& original, double shift,
                         int t, int frame_count, int workers) {
  ViewPass vp;
  forward_view(vp, scene, ntd, original, shift, t, frame_count, workers);
  return std::move(vp.out);
}

// ── Metrics log ─────────────────────────────────────────────────

std::string metrics_csv_header() {
  return "step,phase,trajectory,frame,shift,loss,l1,ssim,depth,holdout_psnr,gaussians";
}

std::string metrics_csv_row(const MetricsRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%d,%d,%s,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%zu", r.step, r.phase,
                r.trajectory == Trajectory::Original ? "original" : "novel", r.frame, r.shift, r.loss.total,
                r.loss.l1, r.loss.ssim, r.loss.depth, r.holdout_psnr, r.gaussians);
  return buf;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << metrics_csv_header() << "\n";
  for (const auto& r : rows) out << metrics_csv_row(r) << "\n";
}

// ── Initialization ──────────────────────────────────────────────

bool is_holdout(const TrainConfig& cfg, int frame) { return frame % cfg.holdout_every == cfg.holdout_offset; }

void colorize_sweeps(std::vector<LidarFrame>& sweeps, const std::vector<Image>& images,
                     const std::vector<CameraPose>& cameras, int window) {
  const int n = static_cast<int>(cameras.size());
  for (auto& sw : sweeps) {
    sw.colors.assign(sw.points.size(), Vec3::Constant(0.5));
    std::vector<std::uint8_t> done(sw.points.size(), 0);
    std::vector<int> order = {sw.timestep};
    for (int d = 1; d <= window; ++d) {
      order.push_back(sw.timestep + d);
      order.push_back(sw.timestep - d);
    }
    for (int f : order) {
      if (f < 0 || f >= n) continue;
      std::vector<std::uint8_t> vis;
      const auto cols = colorize_points(sw.points, images[f], cameras[f], 0.3, &vis);
      for (std::size_t i = 0; i < cols.size(); ++i) {
        if (!done[i] && vis[i]) {
          sw.colors[i] = cols[i];
          done[i] = 1;
        }
      }
    }
  }
}

namespace {

// Drops points that no training or shifted camera can see.
void cull_unseen(std::vector<LidarFrame>& sweeps, const std::vector<CameraPose>& cams,
                 const std::vector<double>& shifts) {
  std::vector<CameraPose> all = cams;
  for (double s : shifts) {
    for (const auto& c : cams) all.push_back(lateral_shift(c, s));
  }
  for (auto& sw : sweeps) {
    LidarFrame kept;
    kept.timestep = sw.timestep;
    for (std::size_t i = 0; i < sw.points.size(); ++i) {
      bool seen = false;
      for (const auto& c : all) {
        const Vec3 pc = c.world_to_camera.apply(sw.points[i]);
        if (pc.z() <= c.intr.near) continue;
        const double u = c.intr.fx * pc.x() / pc.z() + c.intr.cx;
        const double v = c.intr.fy * pc.y() / pc.z() + c.intr.cy;
        if (u > -1.0 && v > -1.0 && u < c.intr.width && v < c.intr.height) {
          seen = true;
          break;
        }
      }
      if (!seen) continue;
      kept.points.push_back(sw.points[i]);
      if (!sw.colors.empty()) kept.colors.push_back(sw.colors[i]);
      if (!sw.is_dynamic.empty()) kept.is_dynamic.push_back(sw.is_dynamic[i]);
    }
    sw = std::move(kept);
  }
}

double camera_extent(const std::vector<CameraPose>& cams) {
  Vec3 mean = Vec3::Zero();
  for (const auto& c : cams) mean += c.center();
  mean /= static_cast<double>(cams.size());
  double r = 0.0;
  for (const auto& c : cams) r = std::max(r, (c.center() - mean).norm());
  return 1.1 * std::max(r, 1.0);
}

}  // namespace

SceneModel initial_scene(const Dataset& ds, const TrainConfig& cfg, std::mt19937_64& rng) {
  std::vector<LidarFrame> sweeps = ds.lidar;
  cull_unseen(sweeps, ds.cameras, cfg.novel_shifts);
  if (cfg.colorize_window > 0) colorize_sweeps(sweeps, ds.images, ds.cameras, cfg.colorize_window);
  SceneModel scene = init_scene(sweeps, ds.tracks, cfg.init, rng);
  if (!cfg.ground_model) {
    // Ablation: no dedicated ground set, every static point is free background.
    scene.background.insert(scene.background.begin(), scene.ground.begin(), scene.ground.end());
    scene.ground.clear();
  }
  return scene;
}

// ── Training loop ───────────────────────────────────────────────

namespace {

struct NovelSlot {
  int frame = 0;
  double shift = 0.0;
  DepthMap depth;
  Image dynamic_mask;
  std::optional<Image> target;
};

struct Trainer {
  const Dataset& ds;
  const TrainConfig& cfg;
  const TrainOptions& opt;
  int workers;
  std::mt19937_64 rng;
  SceneModel scene;
  std::optional<NtdNet> ntd;
  AdamState adam;
  DensifyStats stats;
  std::vector<int> train_frames, holdout_frames;
  std::vector<NovelSlot> pool;
  std::shared_ptr<Restorer> restorer;
  std::vector<MetricsRow> log;
  double extent = 1.0;
  int step = 0;
  int fallbacks = 0;
  double initial_psnr = 0.0;

  Trainer(const Dataset& d, const TrainConfig& c, const TrainOptions& o)
      : ds(d), cfg(c), opt(o), workers(c.workers == 0 ? default_workers() : c.workers), rng(c.seed) {}

  int warmup_steps() const { return static_cast<int>(std::floor(cfg.warmup_fraction * cfg.total_steps)); }

  double holdout_psnr() const {
    if (holdout_frames.empty()) return 0.0;
    double s = 0.0;
    for (int f : holdout_frames) {
      s += psnr(render_view(scene, nullptr, ds.cameras[f], 0.0, f, ds.frame_count(), workers).color, ds.images[f]);
    }
    return s / static_cast<double>(holdout_frames.size());
  }

  void setup() {
    if (ds.frame_count() == 0) throw InvalidInput("dataset has no frames");
    for (int f = 0; f < ds.frame_count(); ++f) (is_holdout(cfg, f) ? holdout_frames : train_frames).push_back(f);
    if (train_frames.empty()) throw InvalidInput("every frame is held out");
    extent = camera_extent(ds.cameras);
    scene = initial_scene(ds, cfg, rng);
    if (cfg.use_ntdnet) ntd.emplace(cfg.ntd, scene.world_bounds, rng);
    adam = AdamState::for_scene(scene, ntd ? &*ntd : nullptr);
    stats = DensifyStats::zeros_like(scene);
    if (opt.restorer) {
      restorer = opt.restorer;
    } else {
      const auto work = opt.checkpoint_dir.empty() ? std::filesystem::temp_directory_path() /
                                                         ("splatdrive_restore_" + std::to_string(::getpid()))
                                                   : opt.checkpoint_dir / "restore_work";
      restorer = make_restorer(cfg.restorer, work);
    }
    if (cfg.novel_view_ratio > 0.0 && cfg.total_steps > warmup_steps()) build_pool();
  }

  void build_pool() {
    std::vector<Vec3> fused = fuse_static(ds.lidar, [&](int t, const Vec3& p, std::size_t i) {
      const auto& sw = ds.lidar[static_cast<std::size_t>(t)];
      if (!sw.is_dynamic.empty() && sw.is_dynamic[i]) return false;
      return !inside_any_box(ds.tracks, t, p, cfg.init.box_margin);
    });
    for (int f : train_frames) {
      for (double s : cfg.novel_shifts) {
        NovelSlot slot;
        slot.frame = f;
        slot.shift = s;
        const CameraPose cam = lateral_shift(ds.cameras[f], s);
        slot.dynamic_mask = dynamic_mask(ds.tracks, f, cam);
        slot.depth = project_depth(fused, cam, slot.dynamic_mask);
        pool.push_back(std::move(slot));
      }
    }
  }

  void refresh_targets() {
    std::vector<RestoreItem> items;
    const NtdNet* net = ntd ? &*ntd : nullptr;
    for (const auto& slot : pool) {
      RestoreItem it;
      it.name = restore_item_name(slot.frame, slot.shift);
      it.frame = slot.frame;
      it.shift = slot.shift;
      it.image = render_view(scene, net, ds.cameras[slot.frame], slot.shift, slot.frame, ds.frame_count(), workers)
                     .color;
      items.push_back(std::move(it));
    }
    auto restored = restore_frames(items, *restorer, &fallbacks);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i].target = std::move(restored[i]);
    spdlog::info("step {}: refreshed {} novel-view targets via {}", step, pool.size(), restorer->describe());
  }

  FrameBundle original_bundle(int f) const {
    FrameBundle b;
    b.image = ds.images[f];
    b.cam = ds.cameras[f];
    b.timestep = f;
    return b;
  }

  void one_step() {
    ++step;
    const bool mixed = step > warmup_steps();
    if (mixed && !pool.empty() && (step - warmup_steps() - 1) % cfg.restore_interval == 0) refresh_targets();

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const bool novel = mixed && !pool.empty() && u01(rng) < cfg.novel_view_ratio;
    FrameBundle bundle;
    if (novel) {
      const auto& slot = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      bundle.image = *slot.target;
      bundle.depth = slot.depth;
      bundle.dynamic_mask = slot.dynamic_mask;
      bundle.cam = lateral_shift(ds.cameras[slot.frame], slot.shift);
      bundle.timestep = slot.frame;
      bundle.shift = slot.shift;
      bundle.trajectory = Trajectory::Novel;
      bundle.source = FrameSource::Restored;
    } else {
      const int f = train_frames[std::uniform_int_distribution<std::size_t>(0, train_frames.size() - 1)(rng)];
      bundle = original_bundle(f);
    }

    const NtdNet* net = (novel && ntd) ? &*ntd : nullptr;
    ViewPass vp;
    forward_view(vp, scene, net, ds.cameras[bundle.timestep], bundle.shift, bundle.timestep, ds.frame_count(),
                 workers);
    RenderGrads upstream;
    const LossTerms terms = compute_loss(vp.out, bundle, cfg, &upstream);

    const auto list = vp.render_list();
    std::vector<GaussianGrad> g_list(list.size());
    std::vector<double> mean2d(list.size(), 0.0);
    render_backward(list, scene.sh_degree, vp.cam, vp.state, upstream, g_list, mean2d, workers);

    std::vector<GaussianGrad> flat;
    std::vector<double> flat_norm, flat_seen;
    std::optional<NtdParams> ntd_grads;
    if (vp.deformed) {
      const Matrix g_delta = apply_deformation_backward(vp.undeformed, vp.deltas, g_list);
      ntd_grads = ntd->params().zeros_like();
      std::vector<Vec3> g_pos(vp.undeformed.size(), Vec3::Zero());
      ntd->backward(vp.cache, g_delta, *ntd_grads, g_pos);
      flat.assign(vp.frame.gaussians.size(), GaussianGrad{});
      flat_norm.assign(flat.size(), 0.0);
      flat_seen.assign(flat.size(), 0.0);
      for (std::size_t k = 0; k < vp.subset.size(); ++k) {
        g_list[k].position += g_pos[k];
        flat[vp.subset[k]] = g_list[k];
        flat_norm[vp.subset[k]] = mean2d[k];
        flat_seen[vp.subset[k]] = vp.state.prepared[k].visible ? 1.0 : 0.0;
      }
    } else {
      flat = std::move(g_list);
      flat_norm = std::move(mean2d);
      flat_seen.resize(flat.size());
      for (std::size_t k = 0; k < flat.size(); ++k) flat_seen[k] = vp.state.prepared[k].visible ? 1.0 : 0.0;
    }
    SceneGradients sg = SceneGradients::zeros_like(scene);
    route_gradients(scene, vp.frame, flat, sg);
    route_scalars(vp.frame, flat_norm, stats.grad_sum);
    route_scalars(vp.frame, flat_seen, stats.seen);

    optimizer_step(scene, ntd ? &*ntd : nullptr, sg, ntd_grads ? &*ntd_grads : nullptr, adam, cfg, step);

    const int densify_until = static_cast<int>(cfg.densify_until_fraction * cfg.total_steps);
    if (step >= cfg.densify_from && step <= densify_until && step % cfg.densify_interval == 0) {
      densify_and_prune(scene, stats, adam, cfg, extent, rng);
    }

    if (!std::isfinite(terms.total)) spdlog::warn("step {}: non-finite loss", step);
    if (step % cfg.log_interval == 0 || step == cfg.total_steps) {
      MetricsRow row;
      row.step = step;
      row.phase = mixed ? 1 : 0;
      row.trajectory = bundle.trajectory;
      row.frame = bundle.timestep;
      row.shift = bundle.shift;
      row.loss = terms;
      row.holdout_psnr = holdout_psnr();
      row.gaussians = scene.total_count();
      log.push_back(row);
      spdlog::info("step {} loss {:.5f} holdout PSNR {:.3f} dB, {} Gaussians", step, terms.total, row.holdout_psnr,
                   row.gaussians);
    }
  }

  void save(const std::filesystem::path& dir) const;
  void restore_state(const std::filesystem::path& dir);
};

// ── Checkpoint encoding ─────────────────────────────────────────

constexpr int kGradWidth = 3 + 4 + 3 + 1 + 3 * kMaxShCoeffs;

NamedTensor pack_grads(const std::string& name, const std::vector<GaussianGrad>& gs) {
  NamedTensor t{name, {gs.size(), static_cast<std::uint64_t>(kGradWidth)}, {}};
  t.data.reserve(gs.size() * kGradWidth);
  for (const auto& g : gs) {
    for (int a = 0; a < 3; ++a) t.data.push_back(g.position[a]);
    for (int a = 0; a < 4; ++a) t.data.push_back(g.rotation[a]);
    for (int a = 0; a < 3; ++a) t.data.push_back(g.log_scale[a]);
    t.data.push_back(g.opacity_logit);
    for (const auto& c : g.sh) {
      for (int a = 0; a < 3; ++a) t.data.push_back(c[a]);
    }
  }
  return t;
}

std::vector<GaussianGrad> unpack_grads(const NamedTensor& t) {
  if (t.shape.size() != 2 || t.shape[1] != static_cast<std::uint64_t>(kGradWidth)) {
    throw LoadError("optimizer tensor " + t.name + " has the wrong shape");
  }
  std::vector<GaussianGrad> gs(t.shape[0]);
  const double* p = t.data.data();
  for (auto& g : gs) {
    for (int a = 0; a < 3; ++a) g.position[a] = *p++;
    for (int a = 0; a < 4; ++a) g.rotation[a] = *p++;
    for (int a = 0; a < 3; ++a) g.log_scale[a] = *p++;
    g.opacity_logit = *p++;
    for (auto& c : g.sh) {
      for (int a = 0; a < 3; ++a) c[a] = *p++;
    }
  }
  return gs;
}

NamedTensor pack_vector(const std::string& name, const std::vector<double>& v) {
  return {name, {v.size()}, v};
}

NamedTensor pack_image(const std::string& name, const Image& img) {
  return {name,
          {static_cast<std::uint64_t>(img.height), static_cast<std::uint64_t>(img.width),
           static_cast<std::uint64_t>(img.channels)},
          img.data};
}

Image unpack_image(const NamedTensor& t) {
  if (t.shape.size() != 3) throw LoadError("tensor " + t.name + " is not an image");
  Image img(static_cast<int>(t.shape[1]), static_cast<int>(t.shape[0]), static_cast<int>(t.shape[2]));
  if (img.data.size() != t.data.size()) throw LoadError("tensor " + t.name + " has inconsistent size");
  img.data = t.data;
  return img;
}

void add_scene_grads(std::vector<NamedTensor>& out, const std::string& prefix, const SceneGradients& g) {
  out.push_back(pack_grads(prefix + ".ground", g.ground));
  out.push_back(pack_grads(prefix + ".background", g.background));
  for (std::size_t o = 0; o < g.objects.size(); ++o) {
    out.push_back(pack_grads(prefix + ".object." + std::to_string(o), g.objects[o]));
  }
}

void add_scene_scalars(std::vector<NamedTensor>& out, const std::string& prefix, const SceneScalars& s) {
  out.push_back(pack_vector(prefix + ".ground", s.ground));
  out.push_back(pack_vector(prefix + ".background", s.background));
  for (std::size_t o = 0; o < s.objects.size(); ++o) {
    out.push_back(pack_vector(prefix + ".object." + std::to_string(o), s.objects[o]));
  }
}

const NamedTensor& find_tensor(const std::map<std::string, const NamedTensor*>& index, const std::string& name) {
  const auto it = index.find(name);
  if (it == index.end()) throw LoadError("checkpoint is missing tensor " + name);
  return *it->second;
}

SceneGradients read_scene_grads(const std::map<std::string, const NamedTensor*>& index, const std::string& prefix,
                                std::size_t objects) {
  SceneGradients g;
  g.ground = unpack_grads(find_tensor(index, prefix + ".ground"));
  g.background = unpack_grads(find_tensor(index, prefix + ".background"));
  for (std::size_t o = 0; o < objects; ++o) {
    g.objects.push_back(unpack_grads(find_tensor(index, prefix + ".object." + std::to_string(o))));
  }
  return g;
}

SceneScalars read_scene_scalars(const std::map<std::string, const NamedTensor*>& index, const std::string& prefix,
                                std::size_t objects) {
  SceneScalars s;
  s.ground = find_tensor(index, prefix + ".ground").data;
  s.background = find_tensor(index, prefix + ".background").data;
  for (std::size_t o = 0; o < objects; ++o) {
    s.objects.push_back(find_tensor(index, prefix + ".object." + std::to_string(o)).data);
  }
  return s;
}

void add_ntd(std::vector<NamedTensor>& out, const std::string& prefix, const NtdParams& p) {
  for (const auto& [name, m] : p.tensors()) {
    NamedTensor t{prefix + "." + name, {static_cast<std::uint64_t>(m->rows()), static_cast<std::uint64_t>(m->cols())},
                  {}};
    t.data.assign(m->data(), m->data() + m->size());
    out.push_back(std::move(t));
  }
}

void read_ntd(const std::map<std::string, const NamedTensor*>& index, const std::string& prefix, NtdParams& p) {
  for (auto& [name, m] : p.tensors()) {
    const NamedTensor& t = find_tensor(index, prefix + "." + name);
    if (t.data.size() != static_cast<std::size_t>(m->size())) throw LoadError("tensor " + t.name + " has wrong size");
    std::copy(t.data.begin(), t.data.end(), m->data());
  }
}

constexpr int kLogWidth = 11;

void write_cameras(const std::filesystem::path& dir, const std::vector<CameraPose>& cams) {
  std::ofstream out(dir / "cameras.csv");
  if (!out) throw Error("cannot write " + (dir / "cameras.csv").string());
  out << "frame,fx,fy,cx,cy,width,height,near,far,r00,r01,r02,t0,r10,r11,r12,t1,r20,r21,r22,t2\n";
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const auto& k = cams[i].intr;
    out << i << "," << format_exact(k.fx) << "," << format_exact(k.fy) << "," << format_exact(k.cx) << ","
        << format_exact(k.cy) << "," << k.width << "," << k.height << "," << format_exact(k.near) << ","
        << format_exact(k.far);
    double v[12];
    se3_to_row_major(cams[i].world_to_camera, v);
    for (double x : v) out << "," << format_exact(x);
    out << "\n";
  }
}

std::vector<CameraPose> read_cameras(const std::filesystem::path& dir) {
  const auto p = dir / "cameras.csv";
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open " + p.string());
  std::vector<CameraPose> cams;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
    if (v.size() != 21) throw LoadError(p.string() + ": expected 21 columns");
    CameraPose c;
    c.intr.fx = v[1];
    c.intr.fy = v[2];
    c.intr.cx = v[3];
    c.intr.cy = v[4];
    c.intr.width = static_cast<int>(v[5]);
    c.intr.height = static_cast<int>(v[6]);
    c.intr.near = v[7];
    c.intr.far = v[8];
    c.world_to_camera = se3_from_row_major(&v[9]);
    cams.push_back(c);
  }
  if (cams.empty()) throw LoadError(p.string() + ": no cameras");
  return cams;
}

void Trainer::save(const std::filesystem::path& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_scene_ply(dir / "scene.ply", scene);
  if (ntd) write_tensor_blob(dir / "ntdnet.bin", ntd->to_tensors());
  save_train_config(dir / "config.cfg", cfg);
  write_cameras(dir, ds.cameras);
  write_metrics_csv(dir / "metrics.csv", log);

  std::vector<NamedTensor> t;
  t.push_back(pack_vector("state", {static_cast<double>(step), static_cast<double>(adam.step),
                                    static_cast<double>(adam.ntd_step), static_cast<double>(adam.skipped_groups),
                                    static_cast<double>(fallbacks), initial_psnr}));
  add_scene_grads(t, "adam.m", adam.m);
  add_scene_grads(t, "adam.v", adam.v);
  if (adam.ntd_m) {
    add_ntd(t, "adam.ntd_m", *adam.ntd_m);
    add_ntd(t, "adam.ntd_v", *adam.ntd_v);
  }
  add_scene_scalars(t, "stats.grad", stats.grad_sum);
  add_scene_scalars(t, "stats.seen", stats.seen);
  NamedTensor lg{"log", {log.size(), static_cast<std::uint64_t>(kLogWidth)}, {}};
  for (const auto& r : log) {
    for (double x : {static_cast<double>(r.step), static_cast<double>(r.phase),
                     r.trajectory == Trajectory::Novel ? 1.0 : 0.0, static_cast<double>(r.frame), r.shift, r.loss.total,
                     r.loss.l1, r.loss.ssim, r.loss.depth, r.holdout_psnr, static_cast<double>(r.gaussians)}) {
      lg.data.push_back(x);
    }
  }
  t.push_back(std::move(lg));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].target) t.push_back(pack_image("target." + std::to_string(i), *pool[i].target));
  }
  write_tensor_blob(dir / "optimizer.bin", t);
  std::ofstream(dir / "rng.txt") << rng;
  std::ofstream(dir / "state.txt") << "step = " << step << "\n";
  spdlog::info("checkpoint at step {} written to {}", step, dir.string());
}

void Trainer::restore_state(const std::filesystem::path& dir) {
  scene = load_scene_ply(dir / "scene.ply");
  if (cfg.use_ntdnet) {
    if (!std::filesystem::exists(dir / "ntdnet.bin")) throw LoadError("checkpoint has no ntdnet.bin");
    ntd.emplace(NtdNet::from_tensors(read_tensor_blob(dir / "ntdnet.bin")));
  } else {
    ntd.reset();
  }
  const auto tensors = read_tensor_blob(dir / "optimizer.bin");
  std::map<std::string, const NamedTensor*> index;
  for (const auto& t : tensors) index[t.name] = &t;
  const auto& st = find_tensor(index, "state").data;
  if (st.size() != 6) throw LoadError("checkpoint state tensor has the wrong size");
  step = static_cast<int>(st[0]);
  adam.step = static_cast<long>(st[1]);
  adam.ntd_step = static_cast<long>(st[2]);
  adam.skipped_groups = static_cast<long>(st[3]);
  fallbacks = static_cast<int>(st[4]);
  initial_psnr = st[5];
  adam.m = read_scene_grads(index, "adam.m", scene.objects.size());
  adam.v = read_scene_grads(index, "adam.v", scene.objects.size());
  if (ntd) {
    adam.ntd_m = ntd->params().zeros_like();
    adam.ntd_v = ntd->params().zeros_like();
    if (index.count("adam.ntd_m." + adam.ntd_m->tensors().front().first)) {
      read_ntd(index, "adam.ntd_m", *adam.ntd_m);
      read_ntd(index, "adam.ntd_v", *adam.ntd_v);
    }
  }
  stats.grad_sum = read_scene_scalars(index, "stats.grad", scene.objects.size());
  stats.seen = read_scene_scalars(index, "stats.seen", scene.objects.size());
  const NamedTensor& lg = find_tensor(index, "log");
  log.clear();
  for (std::size_t r = 0; r * kLogWidth < lg.data.size(); ++r) {
    const double* v = &lg.data[r * kLogWidth];
    MetricsRow row;
    row.step = static_cast<int>(v[0]);
    row.phase = static_cast<int>(v[1]);
    row.trajectory = v[2] != 0.0 ? Trajectory::Novel : Trajectory::Original;
    row.frame = static_cast<int>(v[3]);
    row.shift = v[4];
    row.loss = {v[5], v[6], v[7], v[8]};
    row.holdout_psnr = v[9];
    row.gaussians = static_cast<std::size_t>(v[10]);
    log.push_back(row);
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto it = index.find("target." + std::to_string(i));
    pool[i].target = it == index.end() ? std::nullopt : std::optional<Image>(unpack_image(*it->second));
  }
  std::ifstream rin(dir / "rng.txt");
  if (!(rin >> rng)) throw LoadError("cannot read " + (dir / "rng.txt").string());
  spdlog::info("resumed from {} at step {}", dir.string(), step);
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  Trainer tr(ds, cfg, options);
  tr.setup();
  TrainResult result;
  result.initial_scene = tr.scene;
  if (!options.resume_from.empty()) {
    tr.restore_state(options.resume_from);
  } else {
    tr.initial_psnr = tr.holdout_psnr();
  }
  result.initial_holdout_psnr = tr.initial_psnr;
  spdlog::info("initial holdout PSNR {:.3f} dB", tr.initial_psnr);
  const auto start = std::chrono::steady_clock::now();
  const int last = options.stop_after_step >= 0 ? std::min(options.stop_after_step, cfg.total_steps) : cfg.total_steps;
  while (tr.step < last) {
    tr.one_step();
    if (!options.checkpoint_dir.empty() && tr.step % cfg.checkpoint_interval == 0) {
      tr.save(options.checkpoint_dir);
    }
  }
  if (!options.checkpoint_dir.empty() && (tr.step == 0 || tr.step % cfg.checkpoint_interval != 0)) {
    tr.save(options.checkpoint_dir);
  }
  spdlog::info("trained to step {} in {:.1f} s", tr.step,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  result.final_holdout_psnr = tr.holdout_frames.empty() ? 0.0 : tr.holdout_psnr();
  result.scene = std::move(tr.scene);
  result.ntd = std::move(tr.ntd);
  result.log = std::move(tr.log);
  result.restore_fallbacks = tr.fallbacks;
  result.skipped_groups = tr.adam.skipped_groups;
  return result;
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw LoadError("checkpoint directory not found: " + dir.string());
  Checkpoint ck;
  try {
    ck.config = load_train_config(dir / "config.cfg");
  } catch (const ConfigError& e) {
    throw LoadError(e.what());
  }
  ck.scene = load_scene_ply(dir / "scene.ply");
  if (fs::exists(dir / "ntdnet.bin")) ck.ntd.emplace(NtdNet::from_tensors(read_tensor_blob(dir / "ntdnet.bin")));
  ck.cameras = read_cameras(dir);
  if (fs::exists(dir / "state.txt")) {
    try {
      ck.step = KeyValueFile::load(dir / "state.txt").get_int("step", 0);
    } catch (const ConfigError& e) {
      throw LoadError(e.what());
    }
  }
  return ck;
}

}  // namespace splatdrive
