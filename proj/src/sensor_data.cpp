#include "splatdrive/sensor_data.hpp"

#include <string>

namespace splatdrive {

const Se3& ObjectTrack::pose_at(int t) const {
  const auto it = poses.find(t);
  if (it == poses.end()) {
    throw MissingPose("object " + std::to_string(id) + " has no pose at timestep " + std::to_string(t));
  }
  return it->second;
}

bool ObjectTrack::contains(int t, const Vec3& p, double margin) const {
  const auto it = poses.find(t);
  if (it == poses.end()) return false;
  const Vec3 local = it->second.inverse().apply(p);
  return (local.array().abs() <= (0.5 * size.array() + margin)).all();
}

bool inside_any_box(const std::vector<ObjectTrack>& tracks, int t, const Vec3& p, double margin) {
  for (const auto& tr : tracks) {
    if (tr.contains(t, p, margin)) return true;
  }
  return false;
}

}  // namespace splatdrive
