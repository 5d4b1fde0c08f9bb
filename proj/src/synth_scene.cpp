#include "splatdrive/synth_scene.hpp"

#include "splatdrive/ply.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace splatdrive {

// ── Spec ────────────────────────────────────────────────────────

SynthSceneSpec SynthSceneSpec::defaults() {
  SynthSceneSpec s;
  s.buildings = {
      {Vec2(8.0, 9.0), Vec2(28.0, 17.0), 8.0, Vec3(0.75, 0.6, 0.45)},
      {Vec2(34.0, -18.0), Vec2(58.0, -9.0), 10.0, Vec3(0.5, 0.55, 0.7)},
      {Vec2(90.0, -14.0), Vec2(93.0, 14.0), 6.0, Vec3(0.65, 0.3, 0.25)},
  };
  VehicleSpec oncoming;
  oncoming.albedo = Vec3(0.15, 0.3, 0.8);
  oncoming.waypoints = {Vec2(80.0, 1.75), Vec2(48.0, 1.75), Vec2(15.0, 1.75)};
  VehicleSpec ahead;
  ahead.albedo = Vec3(0.8, 0.15, 0.1);
  ahead.waypoints = {Vec2(36.0, -1.75), Vec2(58.0, -1.75), Vec2(80.0, -1.75)};
  s.vehicles = {oncoming, ahead};
  s.camera.intr.width = 160;
  s.camera.intr.height = 96;
  s.camera.intr.fx = s.camera.intr.fy = 100.0;
  s.camera.intr.cx = 79.5;
  s.camera.intr.cy = 47.5;
  s.camera.intr.near = 0.1;
  s.camera.intr.far = 200.0;
  return s;
}

void SynthSceneSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("scene spec: " + m); };
  if (frames < 2) fail("frames must be at least 2");
  if (!(road_length > 0.0) || !(lane_width > 0.0)) fail("road length and lane width must be positive");
  if (!(ground_x_max > ground_x_min) || !(ground_half_width > lane_width)) fail("ground rectangle too small");
  if (!(dash_length > 0.0) || !(dash_gap >= 0.0) || !(marking_width > 0.0)) fail("bad marking pattern");
  if (camera.intr.width <= 0 || camera.intr.height <= 0 || !(camera.intr.fx > 0.0) || !(camera.intr.fy > 0.0)) {
    fail("bad camera intrinsics");
  }
  if (!(camera.height > 0.0)) fail("camera height must be positive");
  if (lidar.channels < 1 || !(lidar.azimuth_step_deg > 0.0) || !(lidar.max_range > 0.0)) fail("bad lidar spec");
  if (lidar.elevation_max_deg < lidar.elevation_min_deg) fail("lidar elevation range reversed");
  if (jitter < 0.0) fail("jitter must be non-negative");
  for (const auto& b : buildings) {
    if (!(b.max_xy.array() > b.min_xy.array()).all() || !(b.height > 0.0)) fail("degenerate building");
  }
  for (const auto& v : vehicles) {
    if (v.waypoints.size() < 2) fail("a vehicle needs at least 2 waypoints");
    if (!(v.size.array() > 0.0).all()) fail("vehicle size must be positive");
    for (const auto& w : v.waypoints) {
      if (w.x() < ground_x_min || w.x() > ground_x_max || std::abs(w.y()) > ground_half_width) {
        fail("vehicle waypoint outside the ground rectangle");
      }
    }
  }
}

namespace {

const std::set<std::string> kSpecKeys = {
    "road_length", "lane_width", "ground_x_min", "ground_x_max", "ground_half_width", "dash_length",
    "dash_gap", "marking_width", "turn_arrow", "arrow_x", "building", "vehicle", "image_width",
    "image_height", "fx", "fy", "cx", "cy", "near", "far", "camera_height", "camera_pitch_deg",
    "lidar_channels", "lidar_elevation_min_deg", "lidar_elevation_max_deg", "lidar_azimuth_step_deg",
    "lidar_max_range", "lidar_mount_height", "frames", "ego_start_x", "ego_end_x", "ego_y", "jitter", "seed"};

Vec3 vec3_of(const std::vector<double>& v, std::size_t at) { return Vec3(v[at], v[at + 1], v[at + 2]); }

}  // namespace

SynthSceneSpec synth_spec_from(const KeyValueFile& kv) {
  kv.reject_unknown(kSpecKeys);
  SynthSceneSpec s = SynthSceneSpec::defaults();
  s.road_length = kv.get_double("road_length", s.road_length);
  s.lane_width = kv.get_double("lane_width", s.lane_width);
  s.ground_x_min = kv.get_double("ground_x_min", s.ground_x_min);
  s.ground_x_max = kv.get_double("ground_x_max", s.ground_x_max);
  s.ground_half_width = kv.get_double("ground_half_width", s.ground_half_width);
  s.dash_length = kv.get_double("dash_length", s.dash_length);
  s.dash_gap = kv.get_double("dash_gap", s.dash_gap);
  s.marking_width = kv.get_double("marking_width", s.marking_width);
  s.turn_arrow = kv.get_bool("turn_arrow", s.turn_arrow);
  s.arrow_x = kv.get_double("arrow_x", s.arrow_x);
  if (kv.has("building")) {
    s.buildings.clear();
    for (const auto& text : kv.get_all("building")) {
      if (text == "none") continue;
      const auto v = parse_numbers(text, kv.origin() + ": building");
      if (v.size() != 8) throw ConfigError(kv.origin() + ": building expects 'xmin ymin xmax ymax height r g b'");
      s.buildings.push_back({Vec2(v[0], v[1]), Vec2(v[2], v[3]), v[4], vec3_of(v, 5)});
    }
  }
  if (kv.has("vehicle")) {
    s.vehicles.clear();
    for (const auto& text : kv.get_all("vehicle")) {
      if (text == "none") continue;
      const auto bar = text.find('|');
      if (bar == std::string::npos) {
        throw ConfigError(kv.origin() + ": vehicle expects 'length width height r g b | x y x y ...'");
      }
      const auto head = parse_numbers(text.substr(0, bar), kv.origin() + ": vehicle");
      const auto pts = parse_numbers(text.substr(bar + 1), kv.origin() + ": vehicle waypoints");
      if (head.size() != 6 || pts.size() % 2 != 0) {
        throw ConfigError(kv.origin() + ": vehicle expects 6 numbers, '|', then x y pairs");
      }
      VehicleSpec veh;
      veh.size = vec3_of(head, 0);
      veh.albedo = vec3_of(head, 3);
      for (std::size_t i = 0; i < pts.size(); i += 2) veh.waypoints.emplace_back(pts[i], pts[i + 1]);
      s.vehicles.push_back(veh);
    }
  }
  auto& k = s.camera.intr;
  k.width = kv.get_int("image_width", k.width);
  k.height = kv.get_int("image_height", k.height);
  k.fx = kv.get_double("fx", k.fx);
  k.fy = kv.get_double("fy", k.fy);
  k.cx = kv.get_double("cx", k.cx);
  k.cy = kv.get_double("cy", k.cy);
  k.near = kv.get_double("near", k.near);
  k.far = kv.get_double("far", k.far);
  s.camera.height = kv.get_double("camera_height", s.camera.height);
  s.camera.pitch_deg = kv.get_double("camera_pitch_deg", s.camera.pitch_deg);
  s.lidar.channels = kv.get_int("lidar_channels", s.lidar.channels);
  s.lidar.elevation_min_deg = kv.get_double("lidar_elevation_min_deg", s.lidar.elevation_min_deg);
  s.lidar.elevation_max_deg = kv.get_double("lidar_elevation_max_deg", s.lidar.elevation_max_deg);
  s.lidar.azimuth_step_deg = kv.get_double("lidar_azimuth_step_deg", s.lidar.azimuth_step_deg);
  s.lidar.max_range = kv.get_double("lidar_max_range", s.lidar.max_range);
  s.lidar.mount_height = kv.get_double("lidar_mount_height", s.lidar.mount_height);
  s.frames = kv.get_int("frames", s.frames);
  s.ego_start_x = kv.get_double("ego_start_x", s.ego_start_x);
  s.ego_end_x = kv.get_double("ego_end_x", s.ego_end_x);
  s.ego_y = kv.get_double("ego_y", s.ego_y);
  s.jitter = kv.get_double("jitter", s.jitter);
  s.seed = kv.get_u64("seed", s.seed);
  s.validate();
  return s;
}

SynthSceneSpec load_synth_spec(const std::filesystem::path& path) {
  return synth_spec_from(KeyValueFile::load(path));
}

void save_synth_spec(const std::filesystem::path& path, const SynthSceneSpec& s) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  auto put = [&](const char* key, double v) { out << key << " = " << format_exact(v) << "\n"; };
  put("road_length", s.road_length);
  put("lane_width", s.lane_width);
  put("ground_x_min", s.ground_x_min);
  put("ground_x_max", s.ground_x_max);
  put("ground_half_width", s.ground_half_width);
  put("dash_length", s.dash_length);
  put("dash_gap", s.dash_gap);
  put("marking_width", s.marking_width);
  out << "turn_arrow = " << (s.turn_arrow ? "true" : "false") << "\n";
  put("arrow_x", s.arrow_x);
  if (s.buildings.empty()) out << "building = none\n";
  for (const auto& b : s.buildings) {
    out << "building =";
    for (double v : {b.min_xy.x(), b.min_xy.y(), b.max_xy.x(), b.max_xy.y(), b.height, b.albedo.x(),
                     b.albedo.y(), b.albedo.z()}) {
      out << " " << format_exact(v);
    }
    out << "\n";
  }
  if (s.vehicles.empty()) out << "vehicle = none\n";
  for (const auto& v : s.vehicles) {
    out << "vehicle =";
    for (int i = 0; i < 3; ++i) out << " " << format_exact(v.size[i]);
    for (int i = 0; i < 3; ++i) out << " " << format_exact(v.albedo[i]);
    out << " |";
    for (const auto& w : v.waypoints) out << " " << format_exact(w.x()) << " " << format_exact(w.y());
    out << "\n";
  }
  const auto& k = s.camera.intr;
  out << "image_width = " << k.width << "\nimage_height = " << k.height << "\n";
  put("fx", k.fx);
  put("fy", k.fy);
  put("cx", k.cx);
  put("cy", k.cy);
  put("near", k.near);
  put("far", k.far);
  put("camera_height", s.camera.height);
  put("camera_pitch_deg", s.camera.pitch_deg);
  out << "lidar_channels = " << s.lidar.channels << "\n";
  put("lidar_elevation_min_deg", s.lidar.elevation_min_deg);
  put("lidar_elevation_max_deg", s.lidar.elevation_max_deg);
  put("lidar_azimuth_step_deg", s.lidar.azimuth_step_deg);
  put("lidar_max_range", s.lidar.max_range);
  put("lidar_mount_height", s.lidar.mount_height);
  out << "frames = " << s.frames << "\n";
  put("ego_start_x", s.ego_start_x);
  put("ego_end_x", s.ego_end_x);
  put("ego_y", s.ego_y);
  put("jitter", s.jitter);
  out << "seed = " << s.seed << "\n";
}

// ── Generation ──────────────────────────────────────────────────

namespace {

Marking rect_marking(double x0, double y0, double x1, double y1) {
  return Marking{{Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)}};
}

std::vector<Marking> lay_markings(const SynthSceneSpec& s) {
  std::vector<Marking> out;
  const double hw = 0.5 * s.marking_width;
  const double edge = s.lane_width - hw;
  out.push_back(rect_marking(0.0, -edge - hw, s.road_length, -edge + hw));
  out.push_back(rect_marking(0.0, edge - hw, s.road_length, edge + hw));
  for (double x = 0.0; x < s.road_length; x += s.dash_length + s.dash_gap) {
    out.push_back(rect_marking(x, -hw, std::min(x + s.dash_length, s.road_length), hw));
  }
  if (s.turn_arrow) {
    // Left-turn glyph in the right-hand lane: a stem along +x, a bar bending
    // toward +y and a triangular head pointing left.
    const double ax = s.arrow_x, yc = -0.5 * s.lane_width;
    out.push_back(rect_marking(ax, yc - 0.15, ax + 3.0, yc + 0.15));
    out.push_back(rect_marking(ax + 2.7, yc - 0.15, ax + 3.0, yc + 0.8));
    out.push_back(Marking{{Vec2(ax + 3.5, yc + 0.8), Vec2(ax + 2.85, yc + 1.45), Vec2(ax + 2.2, yc + 0.8)}});
  }
  return out;
}

struct SplineSample {
  Vec2 position;
  Vec2 tangent;
};

// Uniform Catmull-Rom through the waypoints, reflected at both ends.
SplineSample catmull_rom(const std::vector<Vec2>& w, double u) {
  const int n = static_cast<int>(w.size());
  const int i = std::clamp(static_cast<int>(std::floor(u)), 0, n - 2);
  const double s = u - i;
  auto at = [&](int k) -> Vec2 {
    if (k < 0) return 2.0 * w[0] - w[1];
    if (k >= n) return 2.0 * w[n - 1] - w[n - 2];
    return w[k];
  };
  const Vec2 p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
  const double s2 = s * s, s3 = s2 * s;
  SplineSample out;
  out.position = 0.5 * (2.0 * p1 + (-p0 + p2) * s + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s2 +
                        (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s3);
  out.tangent = 0.5 * ((-p0 + p2) + 2.0 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s +
                       3.0 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s2);
  return out;
}

Se3 camera_to_world(const SynthSceneSpec& s, double x, double y) {
  const double p = s.camera.pitch_deg * std::numbers::pi / 180.0;
  const Vec3 forward(std::cos(p), 0.0, -std::sin(p));
  const Vec3 right(0.0, -1.0, 0.0);
  const Vec3 down = forward.cross(right);
  Se3 c2w;
  c2w.rotation.col(0) = right;
  c2w.rotation.col(1) = down;
  c2w.rotation.col(2) = forward;
  c2w.translation = Vec3(x, y, s.camera.height);
  return c2w;
}

double ego_x(const SynthSceneSpec& s, int t) {
  return s.ego_start_x + (s.ego_end_x - s.ego_start_x) * t / static_cast<double>(s.frames - 1);
}

}  // namespace

Vec3 SynthScene::marking_color() const {
  return marking_albedo * (0.4 + 0.6 * std::max(0.0, light_dir.z()));
}

Se3 SynthScene::lidar_pose(int frame) const {
  Se3 pose;
  pose.translation = Vec3(ego_x(spec, frame), spec.ego_y, spec.lidar.mount_height);
  return pose;
}

Aabb SynthScene::bounds() const {
  Aabb box;
  box.lo = Vec3(spec.ground_x_min, -spec.ground_half_width, 0.0);
  box.hi = Vec3(spec.ground_x_max, spec.ground_half_width, 0.0);
  auto grow = [&](const Se3& pose, const Vec3& size) {
    for (int c = 0; c < 8; ++c) {
      const Vec3 local(((c & 1) ? 0.5 : -0.5) * size.x(), ((c & 2) ? 0.5 : -0.5) * size.y(),
                       ((c & 4) ? 0.5 : -0.5) * size.z());
      const Vec3 w = pose.apply(local);
      box.lo = box.lo.cwiseMin(w);
      box.hi = box.hi.cwiseMax(w);
    }
  };
  for (const auto& b : buildings) grow(b.pose, b.size);
  for (const auto& tr : tracks) {
    for (const auto& [t, pose] : tr.poses) grow(pose, tr.size);
  }
  for (const auto& cam : cameras) {
    box.lo = box.lo.cwiseMin(cam.center());
    box.hi = box.hi.cwiseMax(cam.center());
  }
  return box;
}

SynthScene generate(const SynthSceneSpec& spec) {
  spec.validate();
  SynthScene scene;
  scene.spec = spec;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  scene.markings = lay_markings(spec);
  for (const auto& b : spec.buildings) {
    const double h = std::max(1.0, b.height + spec.jitter * unit(rng));
    SolidBox box;
    box.size = Vec3(b.max_xy.x() - b.min_xy.x(), b.max_xy.y() - b.min_xy.y(), h);
    box.pose.translation = Vec3(0.5 * (b.min_xy.x() + b.max_xy.x()), 0.5 * (b.min_xy.y() + b.max_xy.y()), 0.5 * h);
    box.albedo = b.albedo;
    scene.buildings.push_back(box);
  }
  for (std::size_t v = 0; v < spec.vehicles.size(); ++v) {
    const auto& veh = spec.vehicles[v];
    std::vector<Vec2> way = veh.waypoints;
    for (auto& w : way) {
      w.x() += spec.jitter * unit(rng);
      w.y() += 0.1 * spec.jitter * unit(rng);
    }
    ObjectTrack tr;
    tr.id = static_cast<int>(v) + 1;
    tr.size = veh.size;
    const double span = static_cast<double>(way.size() - 1);
    for (int t = 0; t < spec.frames; ++t) {
      const SplineSample s = catmull_rom(way, span * t / (spec.frames - 1));
      Se3 pose;
      pose.rotation = yaw_rotation(std::atan2(s.tangent.y(), s.tangent.x()));
      pose.translation = Vec3(s.position.x(), s.position.y(), 0.5 * veh.size.z());
      tr.poses[t] = pose;
    }
    scene.tracks.push_back(tr);
    scene.vehicle_albedo.push_back(veh.albedo);
  }
  for (int t = 0; t < spec.frames; ++t) {
    scene.cameras.push_back(
        CameraPose::from_camera_to_world(camera_to_world(spec, ego_x(spec, t), spec.ego_y), spec.camera.intr));
  }
  return scene;
}

// ── Ray casting ─────────────────────────────────────────────────

namespace {

enum class Surface { None, Ground, Building, Vehicle };

struct Hit {
  double s = std::numeric_limits<double>::infinity();  // ray parameter
  Surface surface = Surface::None;
  Vec3 normal = Vec3::UnitZ();
  Vec3 albedo = Vec3::Zero();
  int object_id = 0;
  bool marking = false;
};

bool inside_convex(const std::vector<Vec2>& poly, const Vec2& p) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % n];
    const double cross = (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
    if (cross < 0.0) return false;
  }
  return true;
}

// Slab test against a posed box; updates `hit` when closer than its current s.
void intersect_box(const Vec3& origin, const Vec3& dir, const Se3& pose, const Vec3& size, double s_min, Hit& hit,
                   Surface surface, const Vec3& albedo, int id) {
  const Mat3 rt = pose.rotation.transpose();
  const Vec3 o = rt * (origin - pose.translation);
  const Vec3 d = rt * dir;
  const Vec3 half = 0.5 * size;
  double t0 = s_min, t1 = hit.s;
  int axis = -1;
  double sign = 1.0;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (std::abs(o[a]) > half[a]) return;
      continue;
    }
    double ta = (-half[a] - o[a]) / d[a];
    double tb = (half[a] - o[a]) / d[a];
    double face = -1.0;
    if (ta > tb) {
      std::swap(ta, tb);
      face = 1.0;
    }
    if (ta > t0) {
      t0 = ta;
      axis = a;
      sign = face;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return;
  }
  if (axis < 0) return;  // origin inside the box
  Vec3 n = Vec3::Zero();
  n[axis] = sign;
  hit.s = t0;
  hit.surface = surface;
  hit.normal = pose.rotation * n;
  hit.albedo = albedo;
  hit.object_id = id;
  hit.marking = false;
}

Hit cast(const SynthScene& scene, int t, const Vec3& origin, const Vec3& dir, double s_min, double s_max) {
  Hit hit;
  hit.s = s_max;
  const auto& sp = scene.spec;
  if (dir.z() != 0.0) {
    const double s = -origin.z() / dir.z();
    if (s > s_min && s < hit.s) {
      const Vec3 p = origin + s * dir;
      if (p.x() >= sp.ground_x_min && p.x() <= sp.ground_x_max && std::abs(p.y()) <= sp.ground_half_width) {
        hit.s = s;
        hit.surface = Surface::Ground;
        hit.normal = Vec3::UnitZ();
        const Vec2 xy(p.x(), p.y());
        bool marking = false;
        for (const auto& m : scene.markings) {
          if (inside_convex(m.polygon, xy)) {
            marking = true;
            break;
          }
        }
        hit.marking = marking;
        const bool on_road = p.x() >= 0.0 && p.x() <= sp.road_length && std::abs(p.y()) <= sp.lane_width;
        hit.albedo = marking ? scene.marking_albedo : (on_road ? scene.asphalt_albedo : scene.verge_albedo);
      }
    }
  }
  for (const auto& b : scene.buildings) {
    intersect_box(origin, dir, b.pose, b.size, s_min, hit, Surface::Building, b.albedo, 0);
  }
  for (std::size_t v = 0; v < scene.tracks.size(); ++v) {
    const auto& tr = scene.tracks[v];
    if (!tr.has_pose(t)) continue;
    intersect_box(origin, dir, tr.pose_at(t), tr.size, s_min, hit, Surface::Vehicle, scene.vehicle_albedo[v], tr.id);
  }
  if (hit.s >= s_max) hit.surface = Surface::None;
  return hit;
}

Vec3 shade(const SynthScene& scene, const Hit& hit) {
  if (hit.surface == Surface::None) return Vec3::Zero();
  return hit.albedo * (0.4 + 0.6 * std::max(0.0, hit.normal.dot(scene.light_dir)));
}

}  // namespace

GtView raytrace_gt(const SynthScene& scene, const CameraPose& cam, int t, int workers) {
  cam.validate();
  const Intrinsics& k = cam.intr;
  GtView out{Image(k.width, k.height, 3), Image(k.width, k.height, 1), Image(k.width, k.height, 1),
             Image(k.width, k.height, 1), Image(k.width, k.height, 1)};
  const Se3 c2w = cam.world_to_camera.inverse();
  const Vec3 origin = c2w.translation;
  constexpr double kSub[3] = {-1.0 / 3.0, 0.0, 1.0 / 3.0};
  parallel_for(static_cast<std::size_t>(k.height), workers == 0 ? default_workers() : workers,
               [&](std::size_t y0, std::size_t y1, int) {
                 for (std::size_t py = y0; py < y1; ++py) {
                   for (int px = 0; px < k.width; ++px) {
                     Vec3 color = Vec3::Zero();
                     for (double oy : kSub) {
                       for (double ox : kSub) {
                         // Unnormalized direction: the ray parameter equals camera z.
                         const Vec3 dir_cam((px + ox - k.cx) / k.fx, (static_cast<double>(py) + oy - k.cy) / k.fy,
                                            1.0);
                         const Hit h = cast(scene, t, origin, c2w.rotation * dir_cam, k.near, k.far);
                         color += shade(scene, h);
                         if (ox == 0.0 && oy == 0.0 && h.surface != Surface::None) {
                           const int y = static_cast<int>(py);
                           out.depth.at(px, y) = h.s;
                           out.hit.at(px, y) = 1.0;
                           out.lane.at(px, y) = h.marking ? 1.0 : 0.0;
                           out.object_id.at(px, y) = h.object_id;
                         }
                       }
                     }
                     color /= 9.0;
                     for (int c = 0; c < 3; ++c) out.color.at(px, static_cast<int>(py), c) = color[c];
                   }
                 }
               });
  return out;
}

LidarFrame simulate_lidar(const SynthScene& scene, const Se3& sensor_to_world, const LidarSpec& lidar, int t) {
  LidarFrame frame;
  frame.timestep = t;
  const double deg = std::numbers::pi / 180.0;
  const int n_az = static_cast<int>(std::round(360.0 / lidar.azimuth_step_deg));
  constexpr double kMinRange = 1.0;
  for (int c = 0; c < lidar.channels; ++c) {
    const double el = lidar.channels == 1
                          ? lidar.elevation_min_deg
                          : lidar.elevation_min_deg +
                                (lidar.elevation_max_deg - lidar.elevation_min_deg) * c / (lidar.channels - 1);
    for (int a = 0; a < n_az; ++a) {
      const double az = a * lidar.azimuth_step_deg * deg;
      const Vec3 local(std::cos(el * deg) * std::cos(az), std::cos(el * deg) * std::sin(az), std::sin(el * deg));
      const Vec3 dir = sensor_to_world.rotation * local;
      const Hit h = cast(scene, t, sensor_to_world.translation, dir, kMinRange, lidar.max_range);
      if (h.surface == Surface::None) continue;
      Vec3 p = sensor_to_world.translation + h.s * dir;
      if (h.surface == Surface::Ground) p.z() = 0.0;
      frame.points.push_back(p);
      frame.is_dynamic.push_back(h.surface == Surface::Vehicle ? 1 : 0);
    }
  }
  return frame;
}

// ── Dataset export / load ───────────────────────────────────────

namespace {

std::string frame_name(int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d.%s", i, ext);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

void write_pose_row(std::ostream& out, const Se3& pose) {
  double v[12];
  se3_to_row_major(pose, v);
  for (double x : v) out << "," << format_exact(x);
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p, std::size_t columns) {
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) {
      throw LoadError(p.string() + ":" + std::to_string(number) + ": expected " + std::to_string(columns) +
                      " columns, got " + std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

double cell_number(const std::string& s, const std::filesystem::path& p) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw LoadError(p.string() + ": '" + s + "' is not a number");
  return v;
}

int cell_int(const std::string& s, const std::filesystem::path& p) {
  const double v = cell_number(s, p);
  if (v != std::floor(v)) throw LoadError(p.string() + ": '" + s + "' is not an integer");
  return static_cast<int>(v);
}

Se3 pose_from_cells(const std::vector<std::string>& cells, std::size_t first, const std::filesystem::path& p) {
  double v[12];
  for (int i = 0; i < 12; ++i) v[i] = cell_number(cells[first + i], p);
  return se3_from_row_major(v);
}

}  // namespace

void export_dataset(const SynthScene& scene, const std::filesystem::path& dir, int workers) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "lidar");
  const Intrinsics& k = scene.spec.camera.intr;
  {
    auto out = open_out(dir / "calib.txt");
    out << "fx = " << format_exact(k.fx) << "\nfy = " << format_exact(k.fy) << "\ncx = " << format_exact(k.cx)
        << "\ncy = " << format_exact(k.cy) << "\nwidth = " << k.width << "\nheight = " << k.height
        << "\nnear = " << format_exact(k.near) << "\nfar = " << format_exact(k.far) << "\n";
  }
  {
    auto out = open_out(dir / "poses.csv");
    out << "frame,r00,r01,r02,t0,r10,r11,r12,t1,r20,r21,r22,t2\n";
    for (int i = 0; i < scene.frame_count(); ++i) {
      out << i;
      write_pose_row(out, scene.cameras[i].world_to_camera);
      out << "\n";
    }
  }
  {
    auto out = open_out(dir / "tracks.csv");
    out << "frame,object_id,r00,r01,r02,t0,r10,r11,r12,t1,r20,r21,r22,t2,length,width,height\n";
    for (int i = 0; i < scene.frame_count(); ++i) {
      for (const auto& tr : scene.tracks) {
        if (!tr.has_pose(i)) continue;
        out << i << "," << tr.id;
        write_pose_row(out, tr.pose_at(i));
        for (int a = 0; a < 3; ++a) out << "," << format_exact(tr.size[a]);
        out << "\n";
      }
    }
  }
  {
    auto out = open_out(dir / "lanes.csv");
    out << "marking_id,vertex,x,y,z\n";
    for (std::size_t m = 0; m < scene.markings.size(); ++m) {
      const auto& poly = scene.markings[m].polygon;
      for (std::size_t v = 0; v < poly.size(); ++v) {
        out << m << "," << v << "," << format_exact(poly[v].x()) << "," << format_exact(poly[v].y()) << ",0\n";
      }
    }
  }
  save_synth_spec(dir / "scene.cfg", scene.spec);
  for (int i = 0; i < scene.frame_count(); ++i) {
    write_ppm(dir / "images" / frame_name(i, "ppm"), raytrace_gt(scene, scene.cameras[i], i, workers).color);
    const LidarFrame sweep = simulate_lidar(scene, scene.lidar_pose(i), scene.spec.lidar, i);
    PlyFile ply;
    ply.comments.push_back("frame " + std::to_string(i));
    auto& el = ply.add_element("vertex", sweep.points.size());
    el.add_property("x", PlyType::Float64);
    el.add_property("y", PlyType::Float64);
    el.add_property("z", PlyType::Float64);
    el.add_property("is_dynamic", PlyType::UInt8);
    for (std::size_t p = 0; p < sweep.points.size(); ++p) {
      for (int a = 0; a < 3; ++a) el.columns[a][p] = sweep.points[p][a];
      el.columns[3][p] = sweep.is_dynamic[p];
    }
    write_ply(dir / "lidar" / frame_name(i, "ply"), ply);
  }
  spdlog::info("exported {} frames to {}", scene.frame_count(), dir.string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  {
    const fs::path p = dir / "calib.txt";
    if (!fs::exists(p)) throw LoadError("missing " + p.string());
    try {
      const auto kv = KeyValueFile::load(p);
      kv.reject_unknown({"fx", "fy", "cx", "cy", "width", "height", "near", "far"});
      for (const char* key : {"fx", "fy", "cx", "cy", "width", "height"}) {
        if (!kv.has(key)) throw LoadError(p.string() + ": missing key " + key);
      }
      ds.intr.fx = kv.get_double("fx", 0.0);
      ds.intr.fy = kv.get_double("fy", 0.0);
      ds.intr.cx = kv.get_double("cx", 0.0);
      ds.intr.cy = kv.get_double("cy", 0.0);
      ds.intr.width = kv.get_int("width", 0);
      ds.intr.height = kv.get_int("height", 0);
      ds.intr.near = kv.get_double("near", ds.intr.near);
      ds.intr.far = kv.get_double("far", ds.intr.far);
    } catch (const ConfigError& e) {
      throw LoadError(e.what());
    }
  }
  {
    const fs::path p = dir / "poses.csv";
    const auto rows = read_csv(p, 13);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (cell_int(rows[r][0], p) != static_cast<int>(r)) {
        throw LoadError(p.string() + ": frame indices must be dense and ascending from 0");
      }
      CameraPose cam;
      cam.world_to_camera = pose_from_cells(rows[r], 1, p);
      cam.intr = ds.intr;
      ds.cameras.push_back(cam);
    }
    if (ds.cameras.empty()) throw LoadError(p.string() + ": no frames");
  }
  {
    const fs::path p = dir / "tracks.csv";
    const auto rows = read_csv(p, 17);
    std::map<int, std::size_t> index;
    for (const auto& row : rows) {
      const int frame = cell_int(row[0], p), id = cell_int(row[1], p);
      auto it = index.find(id);
      if (it == index.end()) {
        it = index.emplace(id, ds.tracks.size()).first;
        ObjectTrack tr;
        tr.id = id;
        tr.size = Vec3(cell_number(row[14], p), cell_number(row[15], p), cell_number(row[16], p));
        ds.tracks.push_back(tr);
      }
      ds.tracks[it->second].poses[frame] = pose_from_cells(row, 2, p);
    }
  }
  {
    const fs::path p = dir / "lanes.csv";
    const auto rows = read_csv(p, 5);
    for (const auto& row : rows) {
      const int m = cell_int(row[0], p);
      if (m < 0) throw LoadError(p.string() + ": negative marking id");
      if (static_cast<std::size_t>(m) >= ds.lanes.size()) ds.lanes.resize(m + 1);
      ds.lanes[m].polygon.emplace_back(cell_number(row[2], p), cell_number(row[3], p));
    }
  }
  if (fs::exists(dir / "scene.cfg")) {
    try {
      ds.spec = load_synth_spec(dir / "scene.cfg");
    } catch (const ConfigError& e) {
      throw LoadError(e.what());
    }
  }
  for (int i = 0; i < ds.frame_count(); ++i) {
    Image img = read_ppm(dir / "images" / frame_name(i, "ppm"));
    if (img.width != ds.intr.width || img.height != ds.intr.height || img.channels != 3) {
      throw LoadError("image " + frame_name(i, "ppm") + " does not match calib.txt");
    }
    ds.images.push_back(std::move(img));
    const fs::path lp = dir / "lidar" / frame_name(i, "ply");
    const PlyFile ply = read_ply(lp);
    const PlyElement* el = ply.find("vertex");
    if (el == nullptr || !el->has("x") || !el->has("y") || !el->has("z")) {
      throw LoadError(lp.string() + ": missing vertex x/y/z");
    }
    LidarFrame f;
    f.timestep = i;
    const auto &xs = el->column("x"), &ys = el->column("y"), &zs = el->column("z");
    for (std::size_t k = 0; k < el->count; ++k) f.points.emplace_back(xs[k], ys[k], zs[k]);
    if (el->has("is_dynamic")) {
      for (double d : el->column("is_dynamic")) f.is_dynamic.push_back(static_cast<std::uint8_t>(d));
    }
    ds.lidar.push_back(std::move(f));
  }
  return ds;
}

}  // namespace splatdrive
