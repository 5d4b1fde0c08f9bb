#pragma once

// Procedural driving scene with analytic ground truth: a finite ground
// rectangle carrying a two-lane road and its markings, box buildings and
// box vehicles on spline tracks. Images come from a ray caster that shares
// nothing with the Gaussian rasterizer.

#include "splatdrive/camera.hpp"
#include "splatdrive/image_io.hpp"
#include "splatdrive/kv_config.hpp"
#include "splatdrive/sensor_data.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace splatdrive {

struct BuildingSpec {
  Vec2 min_xy = Vec2::Zero();
  Vec2 max_xy = Vec2::Ones();
  double height = 5.0;
  Vec3 albedo = Vec3::Constant(0.6);
};

struct VehicleSpec {
  Vec3 size = Vec3(4.5, 1.9, 1.5);  // length, width, height
  Vec3 albedo = Vec3(0.8, 0.15, 0.1);
  std::vector<Vec2> waypoints;      // spread evenly over the clip's frames
};

struct CameraRig {
  Intrinsics intr;
  double height = 1.8;
  double pitch_deg = 9.0;  // downward
};

struct LidarSpec {
  int channels = 32;
  double elevation_min_deg = -25.0;
  double elevation_max_deg = 5.0;
  double azimuth_step_deg = 1.0;
  double max_range = 50.0;
  double mount_height = 2.0;
};

struct SynthSceneSpec {
  double road_length = 80.0;
  double lane_width = 3.5;
  double ground_x_min = -5.0;
  double ground_x_max = 95.0;
  double ground_half_width = 14.0;
  double dash_length = 3.0;
  double dash_gap = 3.0;
  double marking_width = 0.2;
  bool turn_arrow = true;
  double arrow_x = 30.0;
  std::vector<BuildingSpec> buildings;
  std::vector<VehicleSpec> vehicles;
  CameraRig camera;
  LidarSpec lidar;
  int frames = 40;
  double ego_start_x = 5.0;
  double ego_end_x = 44.0;
  double ego_y = -1.75;
  /// Random jitter applied to building heights and vehicle waypoints.
  double jitter = 0.5;
  std::uint64_t seed = 42;

  /// The default acceptance scene.
  static SynthSceneSpec defaults();
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Defaults overridden by the file's keys; unknown keys are an error.
SynthSceneSpec load_synth_spec(const std::filesystem::path& path);
SynthSceneSpec synth_spec_from(const KeyValueFile& kv);
void save_synth_spec(const std::filesystem::path& path, const SynthSceneSpec& spec);

/// A flat convex marking polygon on z = 0, counter-clockwise seen from above.
struct Marking {
  std::vector<Vec2> polygon;
};

struct SolidBox {
  Se3 pose;  // box frame to world; the box is centered on its local origin
  Vec3 size;
  Vec3 albedo;
};

struct SynthScene {
  SynthSceneSpec spec;
  std::vector<Marking> markings;
  std::vector<SolidBox> buildings;
  std::vector<ObjectTrack> tracks;   // one per vehicle, ids 1..V
  std::vector<Vec3> vehicle_albedo;  // parallel to tracks
  std::vector<CameraPose> cameras;   // recorded trajectory, one per frame
  Vec3 light_dir = Vec3(0.3, 0.5, 0.8).normalized();

  Vec3 asphalt_albedo = Vec3(0.32, 0.32, 0.34);
  Vec3 verge_albedo = Vec3(0.28, 0.46, 0.22);
  Vec3 marking_albedo = Vec3(0.95, 0.95, 0.92);

  int frame_count() const { return static_cast<int>(cameras.size()); }
  /// Shaded color of a lane marking as it appears in rendered images.
  Vec3 marking_color() const;
  /// LiDAR sensor-to-world pose at a frame (the ego rear axle raised to the mount height).
  Se3 lidar_pose(int frame) const;
  /// Extent of the ground rectangle and everything standing on it.
  Aabb bounds() const;
};

/// Deterministic under spec.seed. Throws ConfigError on an invalid spec.
SynthScene generate(const SynthSceneSpec& spec);

/// Ground-truth view produced by ray casting.
struct GtView {
  Image color;      // 3 channels, averaged over a 3x3 grid of rays per pixel
  Image depth;      // camera-z of the center ray's first hit, 0 on a miss
  Image hit;        // 1 where the center ray hits something
  Image lane;       // 1 where the center ray's first hit is a lane marking
  Image object_id;  // track id hit by the center ray, 0 elsewhere
};

GtView raytrace_gt(const SynthScene& scene, const CameraPose& cam, int t, int workers = 0);

/// One sweep over the channel x azimuth grid from `sensor_to_world`, returns
/// expressed in the world frame, dynamic label set on vehicle hits.
LidarFrame simulate_lidar(const SynthScene& scene, const Se3& sensor_to_world, const LidarSpec& lidar, int t);

// ── Dataset on disk ─────────────────────────────────────────────

/// Recorded data of one clip, as written by export_dataset.
struct Dataset {
  Intrinsics intr;
  std::vector<CameraPose> cameras;
  std::vector<Image> images;
  std::vector<LidarFrame> lidar;
  std::vector<ObjectTrack> tracks;
  std::vector<Marking> lanes;
  std::optional<SynthSceneSpec> spec;  // present when scene.cfg exists

  int frame_count() const { return static_cast<int>(cameras.size()); }
};

/// Writes calib.txt, poses.csv, images/NNNN.ppm, lidar/NNNN.ply, tracks.csv,
/// lanes.csv and scene.cfg into `dir` (created if needed).
void export_dataset(const SynthScene& scene, const std::filesystem::path& dir, int workers = 0);

/// Inverse of export_dataset. Throws LoadError naming the offending file.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace splatdrive
