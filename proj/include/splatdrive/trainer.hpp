#pragma once

// Optimization loop for the decomposed scene: composite photometric/depth
// loss, Adam with the ground-position freeze, adaptive density control for
// non-ground Gaussians, a two-phase schedule that mixes in laterally shifted
// views supervised by a pluggable restorer, and resumable checkpoints.

#include "splatdrive/lidar_depth.hpp"
#include "splatdrive/ntdnet.hpp"
#include "splatdrive/rasterizer.hpp"
#include "splatdrive/scene_graph.hpp"
#include "splatdrive/synth_scene.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace splatdrive {

struct LearningRates {
  double position_init = 2e-3;  // meters per step, decayed exponentially
  double position_final = 2e-5;
  double rotation = 1e-3;
  double log_scale = 5e-3;
  double opacity = 2.5e-2;
  double sh_dc = 2.5e-3;
  double sh_rest = 1.25e-4;
  double ntdnet = 5e-4;
};

struct TrainConfig {
  double lambda_rgb = 0.8;
  double lambda_ssim = 0.2;
  double lambda_depth = 0.05;
  int total_steps = 3000;
  LearningRates lr;

  double warmup_fraction = 0.2;
  double novel_view_ratio = 0.3;
  std::vector<double> novel_shifts = {1.0, 2.0, 3.0};
  int restore_interval = 500;
  std::string restorer = "identity";  // "identity" or a shell command

  int densify_interval = 100;
  int densify_from = 200;
  double densify_until_fraction = 0.6;
  double densify_grad_threshold = 5e-6;  // mean screen-space gradient norm, per pixel
  double percent_dense = 0.01;           // clone/split boundary, fraction of scene extent
  double prune_opacity = 0.005;
  std::size_t max_gaussians = 60000;

  bool use_ntdnet = true;
  bool ground_model = true;  // false: ground points join the free background
  NtdConfig ntd;
  SceneInitConfig init;
  /// Frames searched on each side when coloring uncolored LiDAR points from
  /// the images before initialization; 0 leaves them uncolored (gray).
  int colorize_window = 0;

  int holdout_every = 8;
  int holdout_offset = 4;
  int log_interval = 100;
  int checkpoint_interval = 1000;
  std::uint64_t seed = 42;
  int workers = 1;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  /// Default configuration of the desk-scale acceptance run.
  static TrainConfig defaults();
};

TrainConfig load_train_config(const std::filesystem::path& path);
TrainConfig train_config_from(const KeyValueFile& kv);
void save_train_config(const std::filesystem::path& path, const TrainConfig& cfg);

enum class Trajectory { Original, Novel };
enum class FrameSource { Recorded, Restored };

struct FrameBundle {
  Image image;
  std::optional<DepthMap> depth;
  Image dynamic_mask;
  CameraPose cam;
  int timestep = 0;
  double shift = 0.0;  // lateral offset from the recorded camera, meters (left positive)
  Trajectory trajectory = Trajectory::Original;
  FrameSource source = FrameSource::Recorded;
};

// ── Loss ────────────────────────────────────────────────────────

struct LossTerms {
  double total = 0.0;
  double l1 = 0.0;
  double ssim = 0.0;   // SSIM value, the loss term is 1 - ssim
  double depth = 0.0;  // mean |residual| over valid target pixels, 0 without targets
};

/// Loss and its gradient w.r.t. the rendered color and depth images.
/// Depth enters only when the bundle has a target and lambda_depth > 0.
LossTerms compute_loss(const RenderOutput& render, const FrameBundle& bundle, const TrainConfig& cfg,
                       RenderGrads* grads);

// ── Optimizer ───────────────────────────────────────────────────

struct AdamState {
  SceneGradients m;
  SceneGradients v;
  std::optional<NtdParams> ntd_m;
  std::optional<NtdParams> ntd_v;
  long step = 0;      // Gaussian updates taken
  long ntd_step = 0;  // network updates taken (novel-view steps only)
  long skipped_groups = 0;

  static AdamState for_scene(const SceneModel& scene, const NtdNet* ntd);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

/// Learning rate of Gaussian positions at a step (log-linear decay).
double position_lr(const TrainConfig& cfg, int step);

/// One Adam update. Ground positions never move; a parameter group whose
/// gradient holds a non-finite value is skipped and counted. `ntd` and
/// `ntd_grads` may be null.
void optimizer_step(SceneModel& scene, NtdNet* ntd, const SceneGradients& grads, const NtdParams* ntd_grads,
                    AdamState& state, const TrainConfig& cfg, int step);

// ── Density control ─────────────────────────────────────────────

/// Accumulated screen-space gradient norms and visibility counts.
struct DensifyStats {
  SceneScalars grad_sum;
  SceneScalars seen;

  static DensifyStats zeros_like(const SceneModel& scene);
};

/// Clones (small) or splits (large) background/object Gaussians whose mean
/// screen-space gradient exceeds the threshold, then prunes those below the
/// opacity floor. The ground set is never touched. Adam moments and the
/// statistics are resized to match (new entries zeroed).
void densify_and_prune(SceneModel& scene, DensifyStats& stats, AdamState& adam, const TrainConfig& cfg,
                       double scene_extent, std::mt19937_64& rng);

// ── Restorer plug-in ────────────────────────────────────────────

struct RestoreItem {
  std::string name;  // file stem used by the external protocol
  Image image;
  int frame = 0;
  double shift = 0.0;
};

class Restorer {
 public:
  virtual ~Restorer() = default;
  /// Same count and order as the input. Throws RestorationFailed.
  virtual std::vector<Image> restore(const std::vector<RestoreItem>& items) = 0;
  virtual std::string describe() const = 0;
};

class IdentityRestorer : public Restorer {
 public:
  std::vector<Image> restore(const std::vector<RestoreItem>& items) override;
  std::string describe() const override { return "identity"; }
};

/// Writes <work>/in/<name>.ppm, runs `<command> <work>/in <work>/out` and
/// reads <work>/out/<name>.ppm back.
class ExternalRestorer : public Restorer {
 public:
  ExternalRestorer(std::string command, std::filesystem::path work_dir);
  std::vector<Image> restore(const std::vector<RestoreItem>& items) override;
  std::string describe() const override { return command_; }

 private:
  std::string command_;
  std::filesystem::path work_dir_;
};

std::unique_ptr<Restorer> make_restorer(const std::string& spec, const std::filesystem::path& work_dir);

/// File stem for a restore item: frame number and signed shift, e.g. 0012_+2.000.
std::string restore_item_name(int frame, double shift);

/// Runs the restorer; on RestorationFailed logs a warning, increments
/// `*fallbacks` when given, and returns the inputs unchanged.
std::vector<Image> restore_frames(const std::vector<RestoreItem>& items, Restorer& restorer,
                                  int* fallbacks = nullptr);

// ── Rendering helpers ───────────────────────────────────────────

/// Pose used for the delta-pose input: the camera-to-world transform.
Se3 body_pose(const CameraPose& cam);

/// Renders the scene at frame t. With a network and a nonzero shift, the
/// deformation is evaluated for the Gaussians that survive projection
/// culling and applied before rasterization; shift 0 never touches it.
RenderOutput render_view(const SceneModel& scene, const NtdNet* ntd, const CameraPose& original,
                         double shift, int t, int frame_count, int workers);

// ── Training ────────────────────────────────────────────────────

struct MetricsRow {
  int step = 0;
  int phase = 0;  // 0 warmup, 1 mixed
  Trajectory trajectory = Trajectory::Original;
  int frame = 0;
  double shift = 0.0;
  LossTerms loss;
  double holdout_psnr = 0.0;
  std::size_t gaussians = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::filesystem::path resume_from;     // empty: fresh start
  std::shared_ptr<Restorer> restorer;    // overrides cfg.restorer when set
  int stop_after_step = -1;              // >= 0: stop (and checkpoint) early at this step
};

struct TrainResult {
  SceneModel scene;
  std::optional<NtdNet> ntd;
  std::vector<MetricsRow> log;
  SceneModel initial_scene;
  double initial_holdout_psnr = 0.0;
  double final_holdout_psnr = 0.0;
  int restore_fallbacks = 0;
  long skipped_groups = 0;
};

bool is_holdout(const TrainConfig& cfg, int frame);

/// Colors each sweep's points from the nearest frames in which they are the
/// visible return.
void colorize_sweeps(std::vector<LidarFrame>& sweeps, const std::vector<Image>& images,
                     const std::vector<CameraPose>& cameras, int window);

/// Scene initialization as performed at the start of training.
SceneModel initial_scene(const Dataset& ds, const TrainConfig& cfg, std::mt19937_64& rng);

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TrainOptions& options = {});

// ── Checkpoints ─────────────────────────────────────────────────

/// What render/eval/inspect need from a checkpoint directory.
struct Checkpoint {
  SceneModel scene;
  std::optional<NtdNet> ntd;
  TrainConfig config;
  std::vector<CameraPose> cameras;  // recorded trajectory
  int step = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace splatdrive
