#pragma once

#include "splatdrive/common.hpp"

namespace splatdrive {

/// Pinhole intrinsics. Pixel (i, j) has its center at image coordinate (i, j).
struct Intrinsics {
  double fx = 100.0;
  double fy = 100.0;
  double cx = 50.0;
  double cy = 50.0;
  int width = 100;
  int height = 100;
  double near = 0.1;
  double far = 500.0;
};

/// World-to-camera extrinsic plus intrinsics. Camera axes: x right, y down,
/// z forward.
struct CameraPose {
  Se3 world_to_camera;
  Intrinsics intr;

  Vec3 center() const { return world_to_camera.inverse().translation; }

  /// Throws InvalidInput unless fx, fy > 0, 0 < near < far and the image is
  /// non-empty.
  void validate() const;

  static CameraPose from_camera_to_world(const Se3& camera_to_world, const Intrinsics& intr);
};

/// The same camera moved `meters` along its own left axis (-x in camera
/// coordinates); orientation unchanged. Positive shifts move left.
CameraPose lateral_shift(const CameraPose& cam, double meters);

}  // namespace splatdrive
