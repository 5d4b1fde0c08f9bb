#pragma once

// Plain records shared by scene initialization, depth supervision and the
// dataset loader.

#include "splatdrive/common.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace splatdrive {

/// One LiDAR sweep with points already expressed in the world frame.
struct LidarFrame {
  int timestep = 0;
  std::vector<Vec3> points;
  /// Optional per-point RGB in [0,1]; empty when the sweep is uncolored.
  std::vector<Vec3> colors;
  /// Optional simulator label (1 = return from a moving object). Empty for
  /// real data, where box membership is used instead.
  std::vector<std::uint8_t> is_dynamic;
};

/// Rigid object track: a box of `size` (length, width, height) centered on
/// the local origin, posed per timestep by object-to-world transforms.
struct ObjectTrack {
  int id = 0;
  Vec3 size = Vec3::Ones();
  std::map<int, Se3> poses;

  /// Throws MissingPose when the track has no pose at t.
  const Se3& pose_at(int t) const;
  bool has_pose(int t) const { return poses.count(t) != 0; }

  /// True when p (world frame) lies inside the box at timestep t, with the
  /// box grown by `margin` on every side. False when no pose exists at t.
  bool contains(int t, const Vec3& p, double margin = 0.0) const;
};

/// True when p is inside any track's box at timestep t.
bool inside_any_box(const std::vector<ObjectTrack>& tracks, int t, const Vec3& p, double margin = 0.0);

}  // namespace splatdrive
