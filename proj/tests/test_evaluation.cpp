#include "splatdrive/evaluation.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace splatdrive;
using namespace splatdrive::testing;
namespace fs = std::filesystem;

namespace {

SynthSceneSpec tiny_spec(bool vehicles) {
  SynthSceneSpec s = SynthSceneSpec::defaults();
  s.frames = 6;
  s.camera.intr.width = 48;
  s.camera.intr.height = 32;
  s.camera.intr.fx = s.camera.intr.fy = 30.0;
  s.camera.intr.cx = 23.5;
  s.camera.intr.cy = 15.5;
  s.lidar.channels = 12;
  s.lidar.azimuth_step_deg = 3.0;
  if (!vehicles) s.vehicles.clear();
  return s;
}

Dataset tiny_dataset(bool vehicles, const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("splatdrive_eval_" + tag);
  fs::remove_all(dir);
  export_dataset(generate(tiny_spec(vehicles)), dir, 1);
  return load_dataset(dir);
}

CameraPose forward_camera() {
  CameraPose cam = axis_camera(64, 48, 40.0);
  cam.intr.cx = 31.5;
  cam.intr.cy = 23.5;
  return cam;
}

}  // namespace

TEST(ProjectBox, BoxInFrontMatchesCornerProjection) {
  const CameraPose cam = forward_camera();
  Se3 pose;
  pose.translation = Vec3(0, 0, 10);
  const auto b = project_box(pose, Vec3::Zero(), Vec3(2, 2, 2), cam);
  ASSERT_TRUE(b.has_value());
  // nearest face at z = 9 spans +-1 m: 40 * 1 / 9 pixels around the center
  EXPECT_NEAR(b->x_min, 31.5 - 40.0 / 9.0, 1e-12);
  EXPECT_NEAR(b->x_max, 31.5 + 40.0 / 9.0, 1e-12);
  EXPECT_NEAR(b->y_min, 23.5 - 40.0 / 9.0, 1e-12);
}

TEST(ProjectBox, BehindCameraOrOffImageIsEmpty) {
  const CameraPose cam = forward_camera();
  Se3 behind;
  behind.translation = Vec3(0, 0, -10);
  EXPECT_FALSE(project_box(behind, Vec3::Zero(), Vec3(2, 2, 2), cam).has_value());
  Se3 aside;
  aside.translation = Vec3(100, 0, 10);
  EXPECT_FALSE(project_box(aside, Vec3::Zero(), Vec3(2, 2, 2), cam).has_value());
}

TEST(ProjectBox, ClippedToImage) {
  const CameraPose cam = forward_camera();
  Se3 pose;
  pose.translation = Vec3(0, 0, 3);
  const auto b = project_box(pose, Vec3::Zero(), Vec3(10, 10, 2), cam);
  ASSERT_TRUE(b.has_value());
  EXPECT_EQ(b->x_min, -0.5);
  EXPECT_EQ(b->x_max, 63.5);
  EXPECT_EQ(b->y_max, 47.5);
}

TEST(FittedBoxes, OpaqueGaussiansDefineTheBox) {
  const CameraPose cam = forward_camera();
  SceneModel scene;
  ObjectModel obj;
  obj.id = 1;
  Se3 pose;
  pose.translation = Vec3(0.5, 0, 12);
  obj.poses[0] = pose;
  for (const Vec3& p : {Vec3(-1, -0.5, -0.5), Vec3(1, 0.5, 0.5), Vec3(0, 0, 0)}) {
    Gaussian3D g;
    g.position = p;
    g.opacity_logit = 2.0;
    obj.gaussians.push_back(g);
  }
  Gaussian3D faint;
  faint.position = Vec3(5, 5, 5);
  faint.opacity_logit = -3.0;
  obj.gaussians.push_back(faint);
  scene.objects.push_back(obj);
  const auto boxes = fitted_object_boxes(scene, cam, 0);
  ASSERT_EQ(boxes.size(), 1u);
  const auto expected = project_box(pose, Vec3::Zero(), Vec3(2, 1, 1), cam);
  EXPECT_NEAR(boxes[0].x_min, expected->x_min, 1e-12);
  EXPECT_NEAR(boxes[0].y_max, expected->y_max, 1e-12);
  EXPECT_TRUE(fitted_object_boxes(scene, cam, 5).empty());
}

TEST(TrackBoxes, VisibleFilter) {
  const CameraPose cam = forward_camera();
  ObjectTrack a, b;
  a.id = 1;
  b.id = 2;
  Se3 pa, pb;
  pa.translation = Vec3(-2, 0, 10);
  pb.translation = Vec3(2, 0, 10);
  a.poses[0] = pa;
  b.poses[0] = pb;
  const std::vector<ObjectTrack> tracks = {a, b};
  EXPECT_EQ(track_boxes(tracks, cam, 0).size(), 2u);
  const std::vector<int> only = {2};
  const auto boxes = track_boxes(tracks, cam, 0, &only);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_GT(boxes[0].center().x(), 31.5);
}

TEST(LaneMask, PolygonProjectionMatchesRayCaster) {
  const SynthScene scene = generate(tiny_spec(false));
  for (int f : {0, 3}) {
    const CameraPose& cam = scene.cameras[f];
    const Image mask = lane_mask_from_polygons(scene.markings, cam);
    const GtView gt = raytrace_gt(scene, cam, f, 1);
    std::size_t lane = 0;
    for (double v : gt.lane.data) lane += v > 0.5;
    EXPECT_GT(lane, 10u);
    std::size_t differ = 0;
    for (std::size_t i = 0; i < mask.data.size(); ++i) differ += mask.data[i] != gt.lane.data[i];
    EXPECT_LE(differ, 2u);  // boundary rays may fall either side of an edge
  }
}

TEST(Evaluate, ReportsEveryRequestedFrame) {
  const Dataset ds = tiny_dataset(true, "vehicles");
  TrainConfig cfg = TrainConfig::defaults();
  cfg.holdout_every = 3;
  cfg.holdout_offset = 1;
  cfg.init.voxel_size = 0.5;
  std::mt19937_64 rng(1);
  const SceneModel scene = initial_scene(ds, cfg, rng);

  EvalOptions recorded;
  const EvalReport r0 = evaluate(scene, nullptr, ds, cfg, recorded);
  ASSERT_EQ(r0.rows.size(), 2u);
  EXPECT_EQ(r0.rows[0].frame, 1);
  EXPECT_EQ(r0.rows[1].frame, 4);

  EvalOptions shifted;
  shifted.shift = 2.0;
  const EvalReport r2 = evaluate(scene, nullptr, ds, cfg, shifted);
  ASSERT_EQ(r2.rows.size(), 6u);
  for (const auto& row : r2.rows) {
    EXPECT_GT(row.psnr, 5.0);
    EXPECT_GE(row.ssim, -1.0);
    EXPECT_LE(row.ssim, 1.0);
    EXPECT_GE(row.ntl_iou, 0.0);
    EXPECT_LE(row.ntl_iou, 1.0);
    EXPECT_TRUE(std::isfinite(row.depth_mae));
  }
  EXPECT_EQ(r2.mean.frame, -1);
  EXPECT_NEAR(r2.mean.psnr,
              (r2.rows[0].psnr + r2.rows[1].psnr + r2.rows[2].psnr + r2.rows[3].psnr + r2.rows[4].psnr +
               r2.rows[5].psnr) / 6.0,
              1e-9);
}

TEST(Evaluate, NoVehiclesFlagsAgentScore) {
  const Dataset ds = tiny_dataset(false, "empty");
  TrainConfig cfg = TrainConfig::defaults();
  cfg.init.voxel_size = 0.5;
  std::mt19937_64 rng(2);
  const SceneModel scene = initial_scene(ds, cfg, rng);
  EvalOptions opt;
  opt.shift = 1.0;
  opt.frames = {0, 2};
  const EvalReport r = evaluate(scene, nullptr, ds, cfg, opt);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_TRUE(r.rows[0].nta_empty);
  EXPECT_TRUE(r.mean.nta_empty);

  const fs::path csv = fs::temp_directory_path() / "splatdrive_eval_report.csv";
  write_eval_csv(csv, r);
  std::ifstream in(csv);
  std::string header, first, second, mean;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  std::getline(in, mean);
  EXPECT_EQ(header, eval_csv_header());
  EXPECT_EQ(first.substr(0, 4), "0,1,");
  EXPECT_NE(first.find(",nan,"), std::string::npos);
  EXPECT_EQ(mean.substr(0, 5), "mean,");
}

TEST(Evaluate, ShiftWithoutSceneSpecIsRejected) {
  Dataset ds = tiny_dataset(false, "nospec");
  ds.spec.reset();
  TrainConfig cfg = TrainConfig::defaults();
  cfg.init.voxel_size = 0.5;
  cfg.holdout_every = 2;
  cfg.holdout_offset = 0;
  std::mt19937_64 rng(3);
  const SceneModel scene = initial_scene(ds, cfg, rng);
  EvalOptions opt;
  opt.shift = 1.0;
  EXPECT_THROW(evaluate(scene, nullptr, ds, cfg, opt), InvalidInput);
  const EvalReport r = evaluate(scene, nullptr, ds, cfg, EvalOptions{});
  EXPECT_EQ(r.rows.size(), 3u);
  EXPECT_TRUE(std::isnan(r.rows[0].depth_mae));
}

TEST(Evaluate, OutOfRangeFrameIsRejected) {
  const Dataset ds = tiny_dataset(false, "range");
  TrainConfig cfg = TrainConfig::defaults();
  cfg.init.voxel_size = 0.5;
  std::mt19937_64 rng(4);
  const SceneModel scene = initial_scene(ds, cfg, rng);
  EvalOptions opt;
  opt.frames = {99};
  EXPECT_THROW(evaluate(scene, nullptr, ds, cfg, opt), InvalidInput);
}
