#pragma once

// Sparse depth targets for novel views: fuse static LiDAR returns across
// sweeps, z-buffer them into a camera and blank dynamic-object pixels.

#include "splatdrive/camera.hpp"
#include "splatdrive/image_io.hpp"
#include "splatdrive/sensor_data.hpp"

#include <functional>
#include <span>
#include <vector>

namespace splatdrive {

/// Depth in meters plus a 0/1 validity image of the same size.
struct DepthMap {
  Image depth;
  Image valid;

  std::size_t valid_count() const;
};

/// Predicate over (timestep, world point, index within the sweep).
using StaticPredicate = std::function<bool(int, const Vec3&, std::size_t)>;

/// Union (no dedup) of the points passing `is_static`, sweep by sweep.
std::vector<Vec3> fuse_static(std::span<const LidarFrame> frames, const StaticPredicate& is_static);

/// Static means: outside every track box at the sweep's timestep.
std::vector<Vec3> fuse_static(std::span<const LidarFrame> frames, const std::vector<ObjectTrack>& tracks,
                              double margin = 0.0);

/// Nearest-z point per pixel (pixel = rounded projection); pixels where
/// `mask` is 1 are invalidated. An empty mask means no masking. Throws
/// InvalidInput when the mask size differs from the camera.
DepthMap project_depth(std::span<const Vec3> points, const CameraPose& cam, const Image& mask = Image());

/// 1 where the pixel ray hits any track box at timestep t (exact ray/box test).
Image dynamic_mask(const std::vector<ObjectTrack>& tracks, int t, const CameraPose& cam);

struct DepthResiduals {
  std::vector<std::size_t> pixels;  // row-major pixel indices of valid targets
  std::vector<double> values;       // rendered - target at those pixels

  double mean_abs() const;  // 0 for an empty set
};

/// Throws InvalidInput on a shape mismatch.
DepthResiduals depth_residual(const Image& rendered, const DepthMap& target);

/// Colors each point from `image` when it is the visible (nearest, within
/// `tolerance` meters) return at its pixel; other points get gray. When
/// `visible` is given it receives 1 for the colored points.
std::vector<Vec3> colorize_points(std::span<const Vec3> points, const Image& image, const CameraPose& cam,
                                  double tolerance = 0.3, std::vector<std::uint8_t>* visible = nullptr);

}  // namespace splatdrive
