#include "splatdrive/camera.hpp"

namespace splatdrive {

void CameraPose::validate() const {
  if (!(intr.fx > 0.0) || !(intr.fy > 0.0)) throw InvalidInput("camera focal lengths must be positive");
  if (!(intr.near > 0.0) || !(intr.far > intr.near)) throw InvalidInput("camera needs 0 < near < far");
  if (intr.width <= 0 || intr.height <= 0) throw InvalidInput("camera image size must be positive");
}

CameraPose CameraPose::from_camera_to_world(const Se3& camera_to_world, const Intrinsics& intr) {
  CameraPose cam;
  cam.world_to_camera = camera_to_world.inverse();
  cam.intr = intr;
  return cam;
}

CameraPose lateral_shift(const CameraPose& cam, double meters) {
  CameraPose out = cam;
  // Moving the center by d in world shifts camera coordinates by -R d; the
  // world-space left axis is -R^T e_x, so camera coordinates gain +meters e_x.
  out.world_to_camera.translation += Vec3(meters, 0.0, 0.0);
  return out;
}

}  // namespace splatdrive
