#pragma once

// Per-frame quality report of a trained scene against a dataset: image
// metrics, box and lane agreement, and depth error, for the recorded
// trajectory or a laterally shifted one.

#include "splatdrive/metrics.hpp"
#include "splatdrive/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace splatdrive {

/// Screen box of the projected corners of an oriented 3D box (object frame
/// `pose`, centered extent `size`), clipped to the image. Empty when every
/// corner is behind the near plane or the clipped box has no area.
std::optional<Box2D> project_box(const Se3& pose, const Vec3& center, const Vec3& size, const CameraPose& cam);

/// One box per object with Gaussians of opacity >= 0.5: the local-frame
/// bounding box of their centers, posed at t and projected.
std::vector<Box2D> fitted_object_boxes(const SceneModel& scene, const CameraPose& cam, int t);

/// Projected track boxes at t. When `visible_ids` is given, only tracks
/// listed there are kept.
std::vector<Box2D> track_boxes(const std::vector<ObjectTrack>& tracks, const CameraPose& cam, int t,
                               const std::vector<int>* visible_ids = nullptr);

/// 1 where the pixel's ray meets z = 0 in front of the camera inside one of
/// the marking polygons. No occlusion test.
Image lane_mask_from_polygons(const std::vector<Marking>& lanes, const CameraPose& cam);

struct EvalOptions {
  double shift = 0.0;
  /// Frames to score; empty means the held-out frames for shift 0 and every
  /// frame otherwise.
  std::vector<int> frames;
  /// Euclidean RGB distance for the rendered lane mask.
  double lane_tolerance = 0.25;
  int workers = 1;
};

struct EvalRow {
  int frame = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double nta_iou = 0.0;
  bool nta_empty = false;  // no ground-truth vehicle visible
  double ntl_iou = 0.0;
  double depth_mae = 0.0;  // over pixels with a ground-truth hit
};

struct EvalReport {
  double shift = 0.0;
  std::vector<EvalRow> rows;
  EvalRow mean;  // frame = -1; NTA averaged over non-empty frames, flagged empty if none
};

/// Ground truth comes from the ray caster when the dataset carries its scene
/// spec; without it only shift 0 can be scored (recorded images, polygon
/// lanes, no depth). Throws InvalidInput in that case for a nonzero shift.
EvalReport evaluate(const SceneModel& scene, const NtdNet* ntd, const Dataset& ds, const TrainConfig& cfg,
                    const EvalOptions& options);

std::string eval_csv_header();
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace splatdrive
