#include "splatdrive/lidar_depth.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace splatdrive {

std::size_t DepthMap::valid_count() const {
  std::size_t n = 0;
  for (double v : valid.data) n += v > 0.5;
  return n;
}

std::vector<Vec3> fuse_static(std::span<const LidarFrame> frames, const StaticPredicate& is_static) {
  std::vector<Vec3> out;
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < f.points.size(); ++i) {
      if (is_static(f.timestep, f.points[i], i)) out.push_back(f.points[i]);
    }
  }
  return out;
}

std::vector<Vec3> fuse_static(std::span<const LidarFrame> frames, const std::vector<ObjectTrack>& tracks,
                              double margin) {
  return fuse_static(frames, [&](int t, const Vec3& p, std::size_t) { return !inside_any_box(tracks, t, p, margin); });
}

namespace {

// Pixel hit by a world point, with its camera depth; nullopt when clipped.
std::optional<std::pair<std::size_t, double>> pixel_of(const Vec3& p, const CameraPose& cam) {
  const Intrinsics& k = cam.intr;
  const Vec3 pc = cam.world_to_camera.apply(p);
  if (!(pc.z() > k.near && pc.z() < k.far)) return std::nullopt;
  const double u = k.fx * pc.x() / pc.z() + k.cx;
  const double v = k.fy * pc.y() / pc.z() + k.cy;
  const double iu = std::round(u), iv = std::round(v);
  if (iu < 0 || iv < 0 || iu >= k.width || iv >= k.height) return std::nullopt;
  return std::make_pair(static_cast<std::size_t>(iv) * k.width + static_cast<std::size_t>(iu), pc.z());
}

}  // namespace

DepthMap project_depth(std::span<const Vec3> points, const CameraPose& cam, const Image& mask) {
  cam.validate();
  const int w = cam.intr.width, h = cam.intr.height;
  if (!mask.data.empty() && (mask.width != w || mask.height != h || mask.channels != 1)) {
    throw InvalidInput("dynamic mask size does not match the camera");
  }
  DepthMap out{Image(w, h, 1), Image(w, h, 1)};
  std::vector<double> zbuf(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
  for (const auto& p : points) {
    const auto hit = pixel_of(p, cam);
    if (hit && hit->second < zbuf[hit->first]) zbuf[hit->first] = hit->second;
  }
  for (std::size_t i = 0; i < zbuf.size(); ++i) {
    const bool masked = !mask.data.empty() && mask.data[i] > 0.5;
    if (std::isfinite(zbuf[i]) && !masked) {
      out.depth.data[i] = zbuf[i];
      out.valid.data[i] = 1.0;
    }
  }
  return out;
}

Image dynamic_mask(const std::vector<ObjectTrack>& tracks, int t, const CameraPose& cam) {
  cam.validate();
  const Intrinsics& k = cam.intr;
  Image mask(k.width, k.height, 1);
  const Se3 cam_to_world = cam.world_to_camera.inverse();
  for (const auto& tr : tracks) {
    if (!tr.has_pose(t)) continue;
    const Se3 world_to_obj = tr.pose_at(t).inverse();
    const Se3 cam_to_obj = world_to_obj * cam_to_world;
    const Vec3 origin = cam_to_obj.translation;
    const Vec3 half = 0.5 * tr.size;
    for (int py = 0; py < k.height; ++py) {
      for (int px = 0; px < k.width; ++px) {
        const Vec3 dir_cam((px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0);
        const Vec3 dir = cam_to_obj.rotation * dir_cam;
        // Slab test in the box frame; the ray parameter is camera-z.
        double t0 = k.near, t1 = k.far;
        for (int a = 0; a < 3 && t0 <= t1; ++a) {
          if (std::abs(dir[a]) < 1e-15) {
            if (std::abs(origin[a]) > half[a]) t0 = t1 + 1.0;
            continue;
          }
          double ta = (-half[a] - origin[a]) / dir[a];
          double tb = (half[a] - origin[a]) / dir[a];
          if (ta > tb) std::swap(ta, tb);
          t0 = std::max(t0, ta);
          t1 = std::min(t1, tb);
        }
        if (t0 <= t1) mask.at(px, py) = 1.0;
      }
    }
  }
  return mask;
}

double DepthResiduals::mean_abs() const {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += std::abs(v);
  return s / static_cast<double>(values.size());
}

DepthResiduals depth_residual(const Image& rendered, const DepthMap& target) {
  if (!rendered.same_shape(target.depth) || !target.valid.same_shape(target.depth)) {
    throw InvalidInput("rendered depth and target depth differ in shape");
  }
  DepthResiduals r;
  for (std::size_t i = 0; i < rendered.data.size(); ++i) {
    if (target.valid.data[i] > 0.5) {
      r.pixels.push_back(i);
      r.values.push_back(rendered.data[i] - target.depth.data[i]);
    }
  }
  return r;
}

std::vector<Vec3> colorize_points(std::span<const Vec3> points, const Image& image, const CameraPose& cam,
                                  double tolerance, std::vector<std::uint8_t>* visible) {
  const std::size_t n_pix = static_cast<std::size_t>(cam.intr.width) * cam.intr.height;
  if (image.width != cam.intr.width || image.height != cam.intr.height || image.channels != 3) {
    throw InvalidInput("colorize_points: image does not match the camera");
  }
  std::vector<double> zbuf(n_pix, std::numeric_limits<double>::infinity());
  std::vector<std::optional<std::pair<std::size_t, double>>> hits(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    hits[i] = pixel_of(points[i], cam);
    if (hits[i] && hits[i]->second < zbuf[hits[i]->first]) zbuf[hits[i]->first] = hits[i]->second;
  }
  std::vector<Vec3> colors(points.size(), Vec3::Constant(0.5));
  if (visible != nullptr) visible->assign(points.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!hits[i] || hits[i]->second > zbuf[hits[i]->first] + tolerance) continue;
    if (visible != nullptr) (*visible)[i] = 1;
    const std::size_t pix = hits[i]->first;
    colors[i] = Vec3(image.data[3 * pix], image.data[3 * pix + 1], image.data[3 * pix + 2]);
  }
  return colors;
}

}  // namespace splatdrive
