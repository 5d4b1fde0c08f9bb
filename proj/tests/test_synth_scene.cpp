#include "splatdrive/synth_scene.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

using namespace splatdrive;
using namespace splatdrive::testing;
namespace fs = std::filesystem;

namespace {

// Small, fast variant of the default scene.
SynthSceneSpec small_spec() {
  SynthSceneSpec s = SynthSceneSpec::defaults();
  s.frames = 4;
  s.camera.intr.width = 40;
  s.camera.intr.height = 24;
  s.camera.intr.fx = s.camera.intr.fy = 25.0;
  s.camera.intr.cx = 19.5;
  s.camera.intr.cy = 11.5;
  s.lidar.channels = 8;
  s.lidar.azimuth_step_deg = 4.0;
  return s;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("splatdrive_synth_" + name);
  fs::remove_all(p);
  return p;
}

// Camera at `height` looking straight down at the ground, image x along world +x.
CameraPose down_camera(double x, double y, double height) {
  Se3 c2w;
  c2w.rotation.col(0) = Vec3(1, 0, 0);
  c2w.rotation.col(1) = Vec3(0, -1, 0);
  c2w.rotation.col(2) = Vec3(0, 0, -1);
  c2w.translation = Vec3(x, y, height);
  Intrinsics k;
  k.width = 21;
  k.height = 21;
  k.fx = k.fy = 20.0;
  k.cx = k.cy = 10.0;
  return CameraPose::from_camera_to_world(c2w, k);
}

}  // namespace

TEST(SynthSpec, DefaultsValidateAndRejectBadValues) {
  EXPECT_NO_THROW(SynthSceneSpec::defaults().validate());
  SynthSceneSpec s = SynthSceneSpec::defaults();
  s.frames = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SynthSceneSpec::defaults();
  s.vehicles[0].waypoints = {Vec2(0, 0)};
  EXPECT_THROW(generate(s), ConfigError);
  s = SynthSceneSpec::defaults();
  s.vehicles[0].waypoints.back() = Vec2(500, 0);
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(SynthSpec, FileRoundTrip) {
  const fs::path dir = scratch_dir("spec");
  fs::create_directories(dir);
  SynthSceneSpec s = small_spec();
  s.seed = 7;
  s.jitter = 0.125;
  save_synth_spec(dir / "a.cfg", s);
  const SynthSceneSpec r = load_synth_spec(dir / "a.cfg");
  EXPECT_EQ(r.seed, 7u);
  EXPECT_EQ(r.jitter, 0.125);
  EXPECT_EQ(r.frames, 4);
  ASSERT_EQ(r.vehicles.size(), s.vehicles.size());
  EXPECT_EQ(r.vehicles[1].waypoints, s.vehicles[1].waypoints);
  ASSERT_EQ(r.buildings.size(), 3u);
  EXPECT_EQ(r.buildings[2].albedo, s.buildings[2].albedo);
  std::ofstream(dir / "bad.cfg") << "frames = 4\nbogus = 1\n";
  EXPECT_THROW(load_synth_spec(dir / "bad.cfg"), ConfigError);
  std::ofstream(dir / "none.cfg") << "vehicle = none\n";
  EXPECT_TRUE(load_synth_spec(dir / "none.cfg").vehicles.empty());
}

TEST(Generate, DeterministicUnderSeed) {
  const SynthScene a = generate(small_spec());
  const SynthScene b = generate(small_spec());
  ASSERT_EQ(a.tracks.size(), b.tracks.size());
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    for (const auto& [t, pose] : a.tracks[i].poses) {
      EXPECT_EQ(pose.translation, b.tracks[i].pose_at(t).translation);
      EXPECT_EQ(pose.rotation, b.tracks[i].pose_at(t).rotation);
    }
  }
  EXPECT_EQ(a.buildings[0].size, b.buildings[0].size);
  SynthSceneSpec other = small_spec();
  other.seed = 43;
  EXPECT_NE(generate(other).buildings[0].size, a.buildings[0].size);
}

TEST(Generate, MarkingsLieOnGroundAndTracksFollowWaypoints) {
  SynthSceneSpec s = small_spec();
  s.jitter = 0.0;
  const SynthScene scene = generate(s);
  EXPECT_GE(scene.markings.size(), 3u + 13u);
  // Spline passes through the first and last waypoints at the clip ends.
  const auto& tr = scene.tracks[1];
  EXPECT_NEAR(tr.pose_at(0).translation.x(), 36.0, 1e-12);
  EXPECT_NEAR(tr.pose_at(s.frames - 1).translation.x(), 80.0, 1e-12);
  EXPECT_NEAR(tr.pose_at(0).translation.z(), 0.75, 1e-12);
  // Oncoming car faces -x.
  EXPECT_NEAR(scene.tracks[0].pose_at(1).rotation(0, 0), -1.0, 1e-9);
}

TEST(Generate, CameraRig) {
  const SynthScene scene = generate(SynthSceneSpec::defaults());
  ASSERT_EQ(scene.frame_count(), 40);
  const CameraPose& cam = scene.cameras[0];
  EXPECT_NEAR(cam.center().z(), 1.8, 1e-12);
  EXPECT_NEAR(cam.center().x(), 5.0, 1e-12);
  EXPECT_NEAR(scene.cameras[39].center().x(), 44.0, 1e-12);
  // Ground 5 m ahead is 19.8 degrees down, steeper than the 9 degree pitch.
  const Vec3 pc = cam.world_to_camera.apply(Vec3(10.0, -1.75, 0.0));
  EXPECT_GT(pc.z(), 0.0);
  EXPECT_GT(pc.y(), 0.0);
  EXPECT_NEAR(pc.x(), 0.0, 1e-12);
}

TEST(RaytraceGt, LookingDownSeesGroundAtCameraHeight) {
  SynthSceneSpec s = small_spec();
  s.vehicles.clear();
  const SynthScene scene = generate(s);
  const GtView v = raytrace_gt(scene, down_camera(60.0, -6.0, 4.0), 0, 1);
  EXPECT_NEAR(v.depth.at(10, 10), 4.0, 1e-12);
  EXPECT_EQ(v.hit.at(10, 10), 1.0);
  EXPECT_EQ(v.lane.at(10, 10), 0.0);
  // Asphalt would be gray; this is off-road verge.
  const Vec3 verge = scene.verge_albedo * (0.4 + 0.6 * scene.light_dir.z());
  EXPECT_NEAR(v.color.at(10, 10, 1), verge.y(), 1e-12);
}

TEST(RaytraceGt, MarkingPixelHasMarkingColor) {
  SynthSceneSpec s = small_spec();
  s.vehicles.clear();
  s.jitter = 0.0;
  const SynthScene scene = generate(s);
  // Center of the first center-line dash (x in [0, 3], |y| < 0.1).
  const GtView v = raytrace_gt(scene, down_camera(1.5, 0.0, 2.0), 0, 1);
  EXPECT_EQ(v.lane.at(10, 10), 1.0);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(v.color.at(10, 10, c), scene.marking_color()[c], 1e-12);
  // One meter to the side is asphalt.
  const GtView w = raytrace_gt(scene, down_camera(1.5, -1.0, 2.0), 0, 1);
  EXPECT_EQ(w.lane.at(10, 10), 0.0);
  EXPECT_LT(w.color.at(10, 10, 0), 0.5);
}

TEST(RaytraceGt, VehicleOccludesGround) {
  SynthSceneSpec s = small_spec();
  s.jitter = 0.0;
  s.buildings.clear();
  const SynthScene scene = generate(s);
  const Vec3 car = scene.tracks[1].pose_at(0).translation;
  const GtView v = raytrace_gt(scene, down_camera(car.x(), car.y(), 6.0), 0, 1);
  EXPECT_EQ(v.object_id.at(10, 10), 2.0);
  EXPECT_NEAR(v.depth.at(10, 10), 6.0 - 1.5, 1e-12);
  EXPECT_LT(v.depth.at(10, 10), 6.0);
}

TEST(RaytraceGt, WorkerCountDoesNotChangeImage) {
  const SynthScene scene = generate(small_spec());
  const GtView a = raytrace_gt(scene, scene.cameras[1], 1, 1);
  const GtView b = raytrace_gt(scene, scene.cameras[1], 1, 3);
  EXPECT_EQ(a.color.data, b.color.data);
  EXPECT_EQ(a.depth.data, b.depth.data);
}

TEST(SimulateLidar, GroundOnlyReturnsLieOnPlane) {
  SynthSceneSpec s = small_spec();
  s.vehicles.clear();
  s.buildings.clear();
  const SynthScene scene = generate(s);
  const LidarFrame f = simulate_lidar(scene, scene.lidar_pose(0), s.lidar, 0);
  ASSERT_FALSE(f.points.empty());
  for (const auto& p : f.points) EXPECT_LE(std::abs(p.z()), 1e-6);
  LidarSpec short_range = s.lidar;
  short_range.max_range = 1.5;
  EXPECT_TRUE(simulate_lidar(scene, scene.lidar_pose(0), short_range, 0).points.empty());
}

TEST(SimulateLidar, DynamicLabelExactlyOnVehicles) {
  const SynthScene scene = generate(SynthSceneSpec::defaults());
  const int t = 5;
  const LidarFrame f = simulate_lidar(scene, scene.lidar_pose(t), scene.spec.lidar, t);
  int dynamic = 0;
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    const bool in_box = inside_any_box(scene.tracks, t, f.points[i], 1e-9);
    EXPECT_EQ(f.is_dynamic[i] == 1, in_box) << "point " << i;
    dynamic += f.is_dynamic[i];
  }
  EXPECT_GT(dynamic, 0);
}

TEST(SimulateLidar, ReturnsLieOnAnalyticSurfaces) {
  const SynthScene scene = generate(SynthSceneSpec::defaults());
  const LidarFrame f = simulate_lidar(scene, scene.lidar_pose(0), scene.spec.lidar, 0);
  for (const auto& p : f.points) {
    double best = std::abs(p.z());
    for (const auto& b : scene.buildings) {
      const Vec3 local = b.pose.inverse().apply(p);
      const Vec3 gap = (local.cwiseAbs() - 0.5 * b.size);
      if ((gap.array() <= 1e-9).all()) best = std::min(best, -gap.maxCoeff());
    }
    for (const auto& tr : scene.tracks) {
      const Vec3 local = tr.pose_at(0).inverse().apply(p);
      const Vec3 gap = (local.cwiseAbs() - 0.5 * tr.size);
      if ((gap.array() <= 1e-9).all()) best = std::min(best, -gap.maxCoeff());
    }
    EXPECT_LT(best, 1e-6);
  }
}

TEST(Dataset, ExportLoadRoundTrip) {
  const fs::path dir = scratch_dir("roundtrip");
  const SynthScene scene = generate(small_spec());
  export_dataset(scene, dir, 1);
  const Dataset ds = load_dataset(dir);
  ASSERT_EQ(ds.frame_count(), 4);
  ASSERT_EQ(ds.images.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_LE((ds.cameras[i].world_to_camera.rotation - scene.cameras[i].world_to_camera.rotation).norm(), 1e-9);
    EXPECT_LE((ds.cameras[i].world_to_camera.translation - scene.cameras[i].world_to_camera.translation).norm(),
              1e-9);
    const LidarFrame f = simulate_lidar(scene, scene.lidar_pose(i), scene.spec.lidar, i);
    EXPECT_EQ(ds.lidar[i].points, f.points);
    EXPECT_EQ(ds.lidar[i].is_dynamic, f.is_dynamic);
    const Image gt = raytrace_gt(scene, scene.cameras[i], i, 1).color;
    for (std::size_t p = 0; p < gt.data.size(); ++p) {
      EXPECT_NEAR(ds.images[i].data[p], gt.data[p], 0.5 / 255.0 + 1e-12);
    }
  }
  ASSERT_EQ(ds.tracks.size(), scene.tracks.size());
  EXPECT_EQ(ds.tracks[1].size, scene.tracks[1].size);
  EXPECT_EQ(ds.tracks[1].pose_at(3).translation, scene.tracks[1].pose_at(3).translation);
  ASSERT_EQ(ds.lanes.size(), scene.markings.size());
  EXPECT_EQ(ds.lanes.back().polygon, scene.markings.back().polygon);
  ASSERT_TRUE(ds.spec.has_value());
  EXPECT_EQ(ds.spec->seed, scene.spec.seed);
  EXPECT_EQ(ds.intr.fx, 25.0);
}

TEST(Dataset, ZeroVehiclesGiveEmptyTrackFile) {
  const fs::path dir = scratch_dir("novehicles");
  SynthSceneSpec s = small_spec();
  s.vehicles.clear();
  s.frames = 2;
  export_dataset(generate(s), dir, 1);
  EXPECT_TRUE(load_dataset(dir).tracks.empty());
}

TEST(Dataset, TruncatedPlyNamesTheFrame) {
  const fs::path dir = scratch_dir("truncated");
  SynthSceneSpec s = small_spec();
  s.frames = 2;
  export_dataset(generate(s), dir, 1);
  const fs::path ply = dir / "lidar" / "0001.ply";
  fs::resize_file(ply, fs::file_size(ply) / 2);
  try {
    load_dataset(dir);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("0001.ply"), std::string::npos) << e.what();
  }
  fs::remove(dir / "poses.csv");
  EXPECT_THROW(load_dataset(dir), LoadError);
}

TEST(Dataset, DefaultSceneHasFortyFrames) {
  const SynthScene scene = generate(SynthSceneSpec::defaults());
  EXPECT_EQ(scene.frame_count(), 40);
  EXPECT_EQ(scene.tracks.size(), 2u);
  for (const auto& tr : scene.tracks) EXPECT_EQ(tr.poses.size(), 40u);
}
