#include "splatdrive/scene_graph.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include <unistd.h>

using namespace splatdrive;
using namespace splatdrive::testing;

namespace {

std::vector<Vec3> plane_points(std::mt19937_64& rng, int n, double noise) {
  std::normal_distribution<double> nz(0.0, noise);
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) pts.emplace_back(uniform(rng, -20, 20), uniform(rng, -20, 20), noise > 0 ? nz(rng) : 0.0);
  return pts;
}

Se3 random_pose(std::mt19937_64& rng) {
  Se3 p;
  p.rotation = quat_to_rotmat(random_unit_quat(rng));
  p.translation = Vec3(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5));
  return p;
}

Gaussian3D random_gaussian(std::mt19937_64& rng) {
  Gaussian3D g;
  g.position = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  g.rotation = random_unit_quat(rng);
  g.log_scale = Vec3(uniform(rng, -2, 0), uniform(rng, -2, 0), uniform(rng, -2, 0));
  g.opacity_logit = uniform(rng, -2, 2);
  for (auto& c : g.sh) c = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  return g;
}

SceneModel counting_scene(std::mt19937_64& rng) {
  SceneModel s;
  for (int i = 0; i < 100; ++i) s.ground.push_back(random_gaussian(rng));
  for (int i = 0; i < 200; ++i) s.background.push_back(random_gaussian(rng));
  ObjectModel o;
  o.id = 7;
  for (int i = 0; i < 50; ++i) o.gaussians.push_back(random_gaussian(rng));
  o.poses[0] = random_pose(rng);
  o.poses[1] = random_pose(rng);
  s.objects.push_back(o);
  return s;
}

}  // namespace

TEST(SegmentGround, SeparatesExactPlaneFromRaisedPoints) {
  std::mt19937_64 rng(1);
  auto pts = plane_points(rng, 200, 0.0);
  for (int i = 0; i < 10; ++i) pts.emplace_back(uniform(rng, -5, 5), uniform(rng, -5, 5), 5.0);
  const auto seg = segment_ground(pts, GroundSegmentConfig{}, rng);
  for (int i = 0; i < 200; ++i) EXPECT_TRUE(seg.is_ground[i]) << i;
  for (int i = 200; i < 210; ++i) EXPECT_FALSE(seg.is_ground[i]) << i;
  EXPECT_EQ(seg.ground_points.size(), 200u);
  EXPECT_EQ(seg.nonground_points.size(), 10u);
  EXPECT_NEAR(seg.normal.z(), 1.0, 1e-9);
}

TEST(SegmentGround, NoisyPlaneRecallOverSeeds) {
  GroundSegmentConfig cfg;
  cfg.inlier_threshold = 0.1;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    auto pts = plane_points(rng, 300, 0.02);
    for (int i = 0; i < 60; ++i) pts.emplace_back(uniform(rng, -20, 20), uniform(rng, -20, 20), uniform(rng, 1, 8));
    const auto seg = segment_ground(pts, cfg, rng);
    int hit = 0;
    for (int i = 0; i < 300; ++i) hit += seg.is_ground[i];
    EXPECT_GE(hit, 297) << "seed " << seed;
  }
}

TEST(SegmentGround, CollinearInputFails) {
  std::mt19937_64 rng(2);
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i) pts.emplace_back(i * 0.5, 2.0 * i, -i);
  EXPECT_THROW(segment_ground(pts, GroundSegmentConfig{}, rng), SegmentationFailed);
}

TEST(SegmentGround, TooFewPointsRejected) {
  std::mt19937_64 rng(3);
  const auto pts = plane_points(rng, 49, 0.0);
  EXPECT_THROW(segment_ground(pts, GroundSegmentConfig{}, rng), InvalidInput);
}

TEST(KnnScales, MatchesBruteForce) {
  std::mt19937_64 rng(4);
  std::vector<Vec3> pts;
  for (int i = 0; i < 400; ++i) {
    // Two clusters of very different density plus a far outlier.
    const double s = i < 300 ? 1.0 : 30.0;
    pts.emplace_back(uniform(rng, 0, s), uniform(rng, 0, s), uniform(rng, 0, 0.2 * s));
  }
  pts.emplace_back(500, 500, 500);
  const auto got = knn_scales(pts, 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) d.push_back((pts[i] - pts[j]).squaredNorm());
    }
    std::sort(d.begin(), d.end());
    const double expected = std::sqrt((d[0] + d[1] + d[2]) / 3.0);
    EXPECT_NEAR(got[i], expected, 1e-12 * expected) << i;
  }
}

TEST(ObjectToWorld, IdentityAndTranslation) {
  std::mt19937_64 rng(5);
  const Gaussian3D g = random_gaussian(rng);
  const Gaussian3D same = object_to_world(g, Se3{});
  EXPECT_LT((same.position - g.position).norm(), 1e-15);
  EXPECT_LT((same.rotation - g.rotation).norm(), 1e-12);
  Se3 shift;
  shift.translation = Vec3(0, 0, 10);
  const Gaussian3D moved = object_to_world(g, shift);
  EXPECT_LT((moved.position - (g.position + Vec3(0, 0, 10))).norm(), 1e-12);
  EXPECT_LT((moved.rotation - g.rotation).norm(), 1e-12);
  EXPECT_EQ(moved.log_scale, g.log_scale);
  EXPECT_EQ(moved.opacity_logit, g.opacity_logit);
  EXPECT_EQ(moved.sh, g.sh);
}

TEST(ObjectToWorld, CovarianceIsConjugated) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const Gaussian3D g = random_gaussian(rng);
    const Se3 pose = random_pose(rng);
    const Mat3 expected = pose.rotation * build_covariance(g) * pose.rotation.transpose();
    EXPECT_LT((build_covariance(object_to_world(g, pose)) - expected).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(AssembleFrame, CountsOrderAndStaticParts) {
  std::mt19937_64 rng(7);
  const SceneModel s = counting_scene(rng);
  const auto f0 = assemble_frame(s, 0);
  const auto f1 = assemble_frame(s, 1);
  ASSERT_EQ(f0.gaussians.size(), 350u);
  for (int i = 0; i < 300; ++i) {
    EXPECT_EQ(f0.gaussians[i].position, f1.gaussians[i].position);
    EXPECT_EQ(f0.gaussians[i].rotation, f1.gaussians[i].rotation);
    EXPECT_EQ(f0.gaussians[i].sh, f1.gaussians[i].sh);
  }
  EXPECT_NE(f0.gaussians[300].position, f1.gaussians[300].position);
  const auto again = assemble_frame(s, 0);
  for (std::size_t i = 0; i < 350; ++i) EXPECT_EQ(again.gaussians[i].position, f0.gaussians[i].position);
  EXPECT_THROW(assemble_frame(s, 2), MissingPose);
}

TEST(AssembleFrame, ProvenanceRoutesEachEntryToItsSource) {
  std::mt19937_64 rng(8);
  const SceneModel s = counting_scene(rng);
  const auto f = assemble_frame(s, 1);
  std::vector<GaussianGrad> flat(f.gaussians.size());
  for (std::size_t k = 0; k < flat.size(); ++k) flat[k].opacity_logit = static_cast<double>(k + 1);
  auto routed = SceneGradients::zeros_like(s);
  route_gradients(s, f, flat, routed);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(routed.ground[i].opacity_logit, i + 1);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(routed.background[i].opacity_logit, 100 + i + 1);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(routed.objects[0][i].opacity_logit, 300 + i + 1);
}

TEST(AssembleFrame, ObjectGradientsMatchFiniteDifference) {
  std::mt19937_64 rng(9);
  SceneModel s = counting_scene(rng);
  const auto f = assemble_frame(s, 0);
  std::vector<GaussianGrad> flat(f.gaussians.size());
  for (auto& g : flat) {
    g.position = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    g.rotation = Vec4(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    g.log_scale = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  }
  auto routed = SceneGradients::zeros_like(s);
  route_gradients(s, f, flat, routed);
  // Linear probe of the assembled object entries.
  auto probe = [&] {
    const auto a = assemble_frame(s, 0);
    double v = 0.0;
    for (std::size_t k = 300; k < a.gaussians.size(); ++k) {
      v += flat[k].position.dot(a.gaussians[k].position) + flat[k].rotation.dot(a.gaussians[k].rotation) +
           flat[k].log_scale.dot(a.gaussians[k].log_scale);
    }
    return v;
  };
  for (int i = 0; i < 50; ++i) {
    Gaussian3D& g = s.objects[0].gaussians[i];
    const GaussianGrad& gr = routed.objects[0][i];
    for (int c = 0; c < 3; ++c) {
      EXPECT_TRUE(fd_agrees(gr.position[c], central_difference(g.position[c], probe)));
    }
    for (int c = 0; c < 4; ++c) {
      EXPECT_TRUE(fd_agrees(gr.rotation[c], central_difference(g.rotation[c], probe)));
    }
  }
}

TEST(InitScene, PartitionsPointsAndFusesObjects) {
  std::mt19937_64 rng(10);
  ObjectTrack car;
  car.id = 3;
  car.size = Vec3(4, 2, 1.5);
  std::vector<Vec3> local_pts;
  for (int i = 0; i < 40; ++i) {
    local_pts.emplace_back(uniform(rng, -1.9, 1.9), uniform(rng, -0.9, 0.9), uniform(rng, -0.7, 0.7));
  }
  std::vector<LidarFrame> frames(2);
  for (int t = 0; t < 2; ++t) {
    Se3 pose;
    pose.rotation = yaw_rotation(0.3 * t);
    pose.translation = Vec3(5.0 + 6.0 * t, 1.0, 0.75);
    car.poses[t] = pose;
    frames[t].timestep = t;
    frames[t].points = plane_points(rng, 300, 0.0);
    // Drop ground points that happen to sit under the car so the partition is unambiguous.
    std::erase_if(frames[t].points, [&](const Vec3& p) { return car.contains(t, p, 0.2); });
    for (int i = 0; i < 30; ++i) frames[t].points.emplace_back(uniform(rng, -20, 20), 15.0, uniform(rng, 1, 6));
    for (const auto& lp : local_pts) frames[t].points.push_back(pose.apply(lp));
  }
  SceneInitConfig cfg;
  cfg.extra_random_points = 0;
  cfg.sh_degree = 1;
  const std::vector<ObjectTrack> tracks = {car};
  const SceneModel s = init_scene(frames, tracks, cfg, rng);
  std::size_t total = 0, dynamic = 0;
  for (const auto& f : frames) {
    total += f.points.size();
    for (const auto& p : f.points) dynamic += car.contains(f.timestep, p, cfg.box_margin);
  }
  EXPECT_EQ(dynamic, 80u);
  EXPECT_EQ(s.ground.size() + s.background.size() + dynamic, total);
  EXPECT_EQ(s.background.size(), 60u);
  ASSERT_EQ(s.objects.size(), 1u);
  ASSERT_EQ(s.objects[0].gaussians.size(), 80u);
  for (int i = 0; i < 40; ++i) {
    const Vec3& a = s.objects[0].gaussians[i].position;
    const Vec3& b = s.objects[0].gaussians[40 + i].position;
    EXPECT_LT((a - b).norm(), 1e-6);
    EXPECT_LT((a - local_pts[i]).norm(), 1e-6);
  }
  for (const auto& g : s.ground) EXPECT_NEAR(sigmoid(g.opacity_logit), 0.1, 1e-12);
}

TEST(InitScene, ZeroObjectsStillAssembles) {
  std::mt19937_64 rng(11);
  std::vector<LidarFrame> frames(1);
  frames[0].points = plane_points(rng, 200, 0.01);
  SceneInitConfig cfg;
  cfg.extra_random_points = 25;
  const SceneModel s = init_scene(frames, {}, cfg, rng);
  EXPECT_TRUE(s.objects.empty());
  EXPECT_EQ(s.background.size(), 25u);
  EXPECT_EQ(assemble_frame(s, 0).gaussians.size(), s.total_count());
}

std::size_t occupied_cells(const std::vector<Vec3>& pts, double voxel) {
  std::set<std::array<long, 3>> cells;
  for (const auto& p : pts) {
    cells.insert({static_cast<long>(std::floor(p.x() / voxel)), static_cast<long>(std::floor(p.y() / voxel)),
                  static_cast<long>(std::floor(p.z() / voxel))});
  }
  return cells.size();
}

TEST(InitScene, GroundVoxelSizeThinsGroundSeparately) {
  std::vector<Vec3> road, wall;
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 40; ++j) road.emplace_back((i + 0.5) * 0.1, (j + 0.5) * 0.1, 0.0);
    for (int k = 0; k < 20; ++k) wall.emplace_back((i + 0.5) * 0.1, 5.05, 1.0 + (k + 0.5) * 0.1);
  }
  std::vector<LidarFrame> frames(1);
  frames[0].points = road;
  frames[0].points.insert(frames[0].points.end(), wall.begin(), wall.end());

  SceneInitConfig cfg;
  cfg.voxel_size = 0.4;
  cfg.extra_random_points = 0;
  std::mt19937_64 rng(13);
  const SceneModel shared = init_scene(frames, {}, cfg, rng);
  EXPECT_EQ(shared.ground.size(), occupied_cells(road, 0.4));
  EXPECT_EQ(shared.background.size(), occupied_cells(wall, 0.4));

  cfg.ground_voxel_size = 0.2;
  rng.seed(13);
  const SceneModel fine = init_scene(frames, {}, cfg, rng);
  EXPECT_EQ(fine.ground.size(), occupied_cells(road, 0.2));
  EXPECT_EQ(fine.background.size(), occupied_cells(wall, 0.4));
  EXPECT_GT(fine.ground.size(), shared.ground.size());
}

TEST(ScenePly, RoundTripIsBitwise) {
  std::mt19937_64 rng(12);
  SceneModel s = counting_scene(rng);
  s.sh_degree = 2;
  s.world_bounds = Aabb{Vec3(-1, -2, -3), Vec3(4, 5, 6)};
  s.objects[0].box_size = Vec3(4.5, 1.9, 1.5);
  const auto path = std::filesystem::temp_directory_path() / ("sg_" + std::to_string(::getpid()) + ".ply");
  save_scene_ply(path, s);
  const SceneModel back = load_scene_ply(path);
  EXPECT_EQ(back.sh_degree, 2);
  EXPECT_EQ(back.world_bounds.lo, s.world_bounds.lo);
  ASSERT_EQ(back.ground.size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(back.ground[i].position, s.ground[i].position);
    EXPECT_EQ(back.ground[i].rotation, s.ground[i].rotation);
    for (int k = 0; k < sh_coeff_count(2); ++k) EXPECT_EQ(back.ground[i].sh[k], s.ground[i].sh[k]);
  }
  ASSERT_EQ(back.objects.size(), 1u);
  EXPECT_EQ(back.objects[0].id, 7);
  EXPECT_EQ(back.objects[0].box_size, s.objects[0].box_size);
  EXPECT_EQ(back.objects[0].gaussians.size(), 50u);
  EXPECT_EQ(back.objects[0].poses.at(1).rotation, s.objects[0].poses.at(1).rotation);
  EXPECT_EQ(back.objects[0].poses.at(1).translation, s.objects[0].poses.at(1).translation);
  std::filesystem::remove(path);
}
