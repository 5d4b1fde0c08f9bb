#pragma once

// Decomposed scene: a frozen-position ground set, a static background set,
// and rigid objects stored in their local frames.

#include "splatdrive/gauss_core.hpp"
#include "splatdrive/sensor_data.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <vector>

namespace splatdrive {

enum class Component : std::uint8_t { Ground = 0, Background = 1, Object = 2 };

struct ObjectModel {
  int id = 0;
  Vec3 box_size = Vec3::Ones();
  std::vector<Gaussian3D> gaussians;  // local object frame
  std::map<int, Se3> poses;           // object-to-world per timestep

  const Se3& pose_at(int t) const;
};

struct SceneModel {
  int sh_degree = 3;
  std::vector<Gaussian3D> ground;
  std::vector<Gaussian3D> background;
  std::vector<ObjectModel> objects;
  Aabb world_bounds;

  std::size_t total_count() const;
};

// ── Ground segmentation ─────────────────────────────────────────

struct GroundSegmentConfig {
  double inlier_threshold = 0.15;  // meters
  int iterations = 1000;
  double min_inlier_fraction = 0.2;
};

struct GroundSegmentation {
  Vec3 normal = Vec3::UnitZ();  // unit, oriented with nz >= 0
  double offset = 0.0;          // plane: normal . p + offset = 0
  std::vector<std::uint8_t> is_ground;
  std::vector<Vec3> ground_points;
  std::vector<Vec3> nonground_points;
};

/// RANSAC single-plane fit refined by least squares on the inliers.
/// Throws InvalidInput below 50 points and SegmentationFailed when no plane
/// reaches the inlier fraction (collinear input included).
GroundSegmentation segment_ground(std::span<const Vec3> points, const GroundSegmentConfig& cfg,
                                  std::mt19937_64& rng);

// ── Initialization ──────────────────────────────────────────────

struct SceneInitConfig {
  GroundSegmentConfig ground;
  int sh_degree = 3;
  int extra_random_points = 20000;
  double voxel_size = 0.0;      // <= 0 keeps every point
  double ground_voxel_size = 0.0;  // ground points only; <= 0 uses voxel_size
  double initial_opacity = 0.1;
  int knn = 3;
  double min_scale = 0.01;
  double max_scale = 3.0;
  double box_margin = 0.1;      // grows object boxes when testing membership
  Aabb world_bounds;            // empty box means: bounding box of all points
};

/// Keeps the first point (and color) falling into each voxel, in input order.
void voxel_downsample(std::vector<Vec3>& points, std::vector<Vec3>* colors, double voxel);

/// Per-point distance scale sqrt(mean squared distance to the k nearest
/// other points), computed with a uniform hash grid.
std::vector<double> knn_scales(std::span<const Vec3> points, int k);

/// Builds ground, background and objects from world-frame sweeps. Points
/// inside a track box (or simulator-labelled dynamic) never reach the
/// background; those inside a box are fused into the object's local frame.
SceneModel init_scene(std::span<const LidarFrame> frames, std::span<const ObjectTrack> tracks,
                      const SceneInitConfig& cfg, std::mt19937_64& rng);

/// Fused local-frame points of one track across all frames.
std::vector<Vec3> fuse_object_points(std::span<const LidarFrame> frames, const ObjectTrack& track,
                                     double margin, std::vector<Vec3>* colors = nullptr);

// ── Assembly ────────────────────────────────────────────────────

/// x_w = R x_o + T, rotation via rot_quat; everything else untouched.
Gaussian3D object_to_world(const Gaussian3D& g, const Se3& pose);

struct Provenance {
  Component component = Component::Ground;
  int object_index = -1;  // index into SceneModel::objects for Component::Object
  int source_index = 0;   // index inside the component's Gaussian list
};

struct AssembledFrame {
  int timestep = 0;
  std::vector<Gaussian3D> gaussians;
  std::vector<Provenance> provenance;
};

/// Ground, then background, then each object in scene order. Throws
/// MissingPose when an object lacks a pose at t.
AssembledFrame assemble_frame(const SceneModel& scene, int t);

/// Gradients laid out like a SceneModel.
struct SceneGradients {
  std::vector<GaussianGrad> ground;
  std::vector<GaussianGrad> background;
  std::vector<std::vector<GaussianGrad>> objects;

  static SceneGradients zeros_like(const SceneModel& scene);
};

/// Adds flat-list gradients back onto their source Gaussians, pulling object
/// entries through the inverse of object_to_world.
void route_gradients(const SceneModel& scene, const AssembledFrame& frame,
                     std::span<const GaussianGrad> flat, SceneGradients& out);

/// Same routing for a per-entry scalar statistic (e.g. screen-space gradient norm).
struct SceneScalars {
  std::vector<double> ground;
  std::vector<double> background;
  std::vector<std::vector<double>> objects;

  static SceneScalars zeros_like(const SceneModel& scene);
};
void route_scalars(const AssembledFrame& frame, std::span<const double> flat, SceneScalars& out);

// ── Persistence ─────────────────────────────────────────────────

/// Binary little-endian PLY with elements scene_info, ground, background,
/// object (object_id column), object_info and object_pose.
void save_scene_ply(const std::filesystem::path& path, const SceneModel& scene);
SceneModel load_scene_ply(const std::filesystem::path& path);

}  // namespace splatdrive
