#include "splatdrive/scene_graph.hpp"

#include "splatdrive/ply.hpp"

#include <spdlog/spdlog.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace splatdrive {

const Se3& ObjectModel::pose_at(int t) const {
  const auto it = poses.find(t);
  if (it == poses.end()) {
    throw MissingPose("object " + std::to_string(id) + " has no pose at timestep " + std::to_string(t));
  }
  return it->second;
}

std::size_t SceneModel::total_count() const {
  std::size_t n = ground.size() + background.size();
  for (const auto& o : objects) n += o.gaussians.size();
  return n;
}

// ── Ground segmentation ─────────────────────────────────────────

namespace {

std::size_t count_inliers(std::span<const Vec3> pts, const Vec3& n, double d, double tau) {
  std::size_t c = 0;
  for (const auto& p : pts) c += std::abs(n.dot(p) + d) <= tau;
  return c;
}

// Total-least-squares plane through the points flagged in `mask`.
bool fit_plane(std::span<const Vec3> pts, const std::vector<std::uint8_t>& mask, Vec3& n, double& d) {
  Vec3 mean = Vec3::Zero();
  std::size_t m = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (mask[i]) {
      mean += pts[i];
      ++m;
    }
  }
  if (m < 3) return false;
  mean /= static_cast<double>(m);
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (mask[i]) cov += (pts[i] - mean) * (pts[i] - mean).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  n = eig.eigenvectors().col(0).normalized();
  d = -n.dot(mean);
  return true;
}

}  // namespace

GroundSegmentation segment_ground(std::span<const Vec3> points, const GroundSegmentConfig& cfg,
                                  std::mt19937_64& rng) {
  const std::size_t n = points.size();
  if (n < 50) {
    throw InvalidInput("ground segmentation needs at least 50 points, got " + std::to_string(n));
  }
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = std::max((hi - lo).norm(), 1e-12);

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t best = 0;
  Vec3 best_n = Vec3::UnitZ();
  double best_d = 0.0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    const Vec3 cr = (points[b] - points[a]).cross(points[c] - points[a]);
    if (cr.norm() <= 1e-9 * extent * extent) continue;
    const Vec3 nrm = cr.normalized();
    const double d = -nrm.dot(points[a]);
    const std::size_t cnt = count_inliers(points, nrm, d, cfg.inlier_threshold);
    if (cnt > best) {
      best = cnt;
      best_n = nrm;
      best_d = d;
    }
  }
  const auto needed = static_cast<std::size_t>(std::ceil(cfg.min_inlier_fraction * static_cast<double>(n)));
  if (best == 0 || best < needed) {
    throw SegmentationFailed("no plane with " + std::to_string(needed) + " inliers (best " +
                             std::to_string(best) + " of " + std::to_string(n) + ")");
  }

  GroundSegmentation out;
  out.is_ground.resize(n);
  auto classify = [&](const Vec3& nrm, double d) {
    for (std::size_t i = 0; i < n; ++i) {
      out.is_ground[i] = std::abs(nrm.dot(points[i]) + d) <= cfg.inlier_threshold;
    }
  };
  classify(best_n, best_d);
  Vec3 ref_n;
  double ref_d;
  if (fit_plane(points, out.is_ground, ref_n, ref_d) &&
      count_inliers(points, ref_n, ref_d, cfg.inlier_threshold) >= best) {
    best_n = ref_n;
    best_d = ref_d;
    classify(best_n, best_d);
  }
  if (best_n.z() < 0.0) {
    best_n = -best_n;
    best_d = -best_d;
  }
  out.normal = best_n;
  out.offset = best_d;
  for (std::size_t i = 0; i < n; ++i) {
    (out.is_ground[i] ? out.ground_points : out.nonground_points).push_back(points[i]);
  }
  return out;
}

// ── Point utilities ─────────────────────────────────────────────

namespace {

using CellKey = std::int64_t;

CellKey cell_key(std::int64_t x, std::int64_t y, std::int64_t z) {
  constexpr std::int64_t kOff = 1 << 20;
  return ((x + kOff) << 42) | ((y + kOff) << 21) | (z + kOff);
}

std::array<std::int64_t, 3> cell_of(const Vec3& p, double cell) {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell)),
          static_cast<std::int64_t>(std::floor(p.y() / cell)),
          static_cast<std::int64_t>(std::floor(p.z() / cell))};
}

}  // namespace

void voxel_downsample(std::vector<Vec3>& points, std::vector<Vec3>* colors, double voxel) {
  if (voxel <= 0.0 || points.empty()) return;
  std::unordered_set<CellKey> seen;
  seen.reserve(points.size());
  std::size_t w = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = cell_of(points[i], voxel);
    if (!seen.insert(cell_key(c[0], c[1], c[2])).second) continue;
    points[w] = points[i];
    if (colors != nullptr && !colors->empty()) (*colors)[w] = (*colors)[i];
    ++w;
  }
  points.resize(w);
  if (colors != nullptr && !colors->empty()) colors->resize(w);
}

std::vector<double> knn_scales(std::span<const Vec3> points, int k) {
  const std::size_t n = points.size();
  std::vector<double> out(n, 0.0);
  if (n < 2 || k <= 0) return out;
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Vec3 ext = (hi - lo).cwiseMax(Vec3::Constant(1e-9));
  std::sort(ext.data(), ext.data() + 3, std::greater<>());
  // About two points per cell whether the cloud is volumetric, planar or linear.
  const double per = 2.0 / static_cast<double>(n);
  const double cell = std::max({std::cbrt(ext.prod() * per), std::sqrt(ext[0] * ext[1] * per), ext[0] * per});
  std::unordered_map<CellKey, std::vector<std::uint32_t>> grid;
  grid.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = cell_of(points[i], cell);
    grid[cell_key(c[0], c[1], c[2])].push_back(static_cast<std::uint32_t>(i));
  }
  const auto max_ring = static_cast<std::int64_t>(std::ceil(ext.maxCoeff() / cell)) + 1;
  const std::size_t want = std::min<std::size_t>(k, n - 1);
  constexpr std::int64_t kMaxRing = 6;

  std::vector<double> best;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = cell_of(points[i], cell);
    best.clear();
    auto offer = [&](std::size_t j) {
      if (j == i) return;
      const double d2 = (points[j] - points[i]).squaredNorm();
      if (best.size() < want) {
        best.push_back(d2);
        std::push_heap(best.begin(), best.end());
      } else if (d2 < best.front()) {
        std::pop_heap(best.begin(), best.end());
        best.back() = d2;
        std::push_heap(best.begin(), best.end());
      }
    };
    bool done = false;
    for (std::int64_t r = 0; r <= std::min<std::int64_t>(max_ring, kMaxRing); ++r) {
      for (std::int64_t dx = -r; dx <= r; ++dx) {
        for (std::int64_t dy = -r; dy <= r; ++dy) {
          for (std::int64_t dz = -r; dz <= r; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
            const auto it = grid.find(cell_key(c[0] + dx, c[1] + dy, c[2] + dz));
            if (it == grid.end()) continue;
            for (std::uint32_t j : it->second) offer(j);
          }
        }
      }
      // Unvisited cells are at least r * cell away from the query.
      if (best.size() == want && best.front() <= (r * cell) * (r * cell)) {
        done = true;
        break;
      }
    }
    if (!done) {
      // Isolated point: a linear scan beats enumerating mostly empty shells.
      best.clear();
      for (std::size_t j = 0; j < n; ++j) offer(j);
    }
    double sum = 0.0;
    for (double d2 : best) sum += d2;
    out[i] = std::sqrt(sum / static_cast<double>(best.size()));
  }
  return out;
}

std::vector<Vec3> fuse_object_points(std::span<const LidarFrame> frames, const ObjectTrack& track,
                                     double margin, std::vector<Vec3>* colors) {
  std::vector<Vec3> out;
  for (const auto& f : frames) {
    if (!track.has_pose(f.timestep)) continue;
    const Se3 inv = track.pose_at(f.timestep).inverse();
    for (std::size_t i = 0; i < f.points.size(); ++i) {
      const Vec3 local = inv.apply(f.points[i]);
      if ((local.array().abs() <= (0.5 * track.size.array() + margin)).all()) {
        out.push_back(local);
        if (colors != nullptr && !f.colors.empty()) colors->push_back(f.colors[i]);
      }
    }
  }
  return out;
}

// ── Initialization ──────────────────────────────────────────────

namespace {

std::vector<Gaussian3D> gaussians_at(const std::vector<Vec3>& pts, const std::vector<Vec3>& colors,
                                     const SceneInitConfig& cfg) {
  const auto scales = knn_scales(pts, cfg.knn);
  std::vector<Gaussian3D> out(pts.size());
  const double opacity_logit = logit(cfg.initial_opacity);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Gaussian3D& g = out[i];
    g.position = pts[i];
    const double s = std::clamp(scales[i] > 0.0 ? scales[i] : cfg.min_scale, cfg.min_scale, cfg.max_scale);
    g.log_scale = Vec3::Constant(std::log(s));
    g.opacity_logit = opacity_logit;
    g.sh.fill(Vec3::Zero());
    g.sh[0] = sh_dc_from_color(colors.empty() ? Vec3::Constant(0.5) : colors[i]);
  }
  return out;
}

// Points on the faces of a centered box, used when an object received no returns.
std::vector<Vec3> box_surface_samples(const Vec3& size, int count, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::uniform_int_distribution<int> face(0, 5);
  std::vector<Vec3> out;
  for (int i = 0; i < count; ++i) {
    Vec3 p(u(rng), u(rng), u(rng));
    const int f = face(rng);
    p[f / 2] = (f % 2 == 0) ? -0.5 : 0.5;
    out.push_back(p.cwiseProduct(size));
  }
  return out;
}

}  // namespace

SceneModel init_scene(std::span<const LidarFrame> frames, std::span<const ObjectTrack> tracks,
                      const SceneInitConfig& cfg, std::mt19937_64& rng) {
  if (frames.empty()) throw InvalidInput("scene initialization needs at least one LiDAR frame");
  if (cfg.sh_degree < 0 || cfg.sh_degree > kMaxShDegree) {
    throw ConfigError("sh_degree must be within 0.." + std::to_string(kMaxShDegree));
  }
  const std::vector<ObjectTrack> track_list(tracks.begin(), tracks.end());

  std::vector<Vec3> static_pts, static_cols;
  bool colored = true;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& f : frames) {
    colored = colored && f.colors.size() == f.points.size();
    for (std::size_t i = 0; i < f.points.size(); ++i) {
      const Vec3& p = f.points[i];
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      const bool labelled = !f.is_dynamic.empty() && f.is_dynamic[i] != 0;
      if (labelled || inside_any_box(track_list, f.timestep, p, cfg.box_margin)) continue;
      static_pts.push_back(p);
      if (colored) static_cols.push_back(f.colors[i]);
    }
  }
  if (!colored) static_cols.clear();
  // Segment at the finer of the two voxel sizes, then thin each part to its own.
  const double ground_voxel = cfg.ground_voxel_size > 0.0 ? cfg.ground_voxel_size : cfg.voxel_size;
  const double fine = cfg.voxel_size > 0.0 && ground_voxel > 0.0 ? std::min(cfg.voxel_size, ground_voxel) : 0.0;
  voxel_downsample(static_pts, &static_cols, fine);

  const GroundSegmentation seg = segment_ground(static_pts, cfg.ground, rng);
  std::vector<Vec3> ground_pts, ground_cols, bg_pts, bg_cols;
  for (std::size_t i = 0; i < static_pts.size(); ++i) {
    const bool g = seg.is_ground[i] != 0;
    (g ? ground_pts : bg_pts).push_back(static_pts[i]);
    if (!static_cols.empty()) (g ? ground_cols : bg_cols).push_back(static_cols[i]);
  }
  if (ground_voxel != fine) voxel_downsample(ground_pts, ground_cols.empty() ? nullptr : &ground_cols, ground_voxel);
  if (cfg.voxel_size != fine) voxel_downsample(bg_pts, bg_cols.empty() ? nullptr : &bg_cols, cfg.voxel_size);
  if (ground_pts.empty()) throw SegmentationFailed("ground segment is empty");

  SceneModel scene;
  scene.sh_degree = cfg.sh_degree;
  const bool bounds_given = (cfg.world_bounds.hi.array() > cfg.world_bounds.lo.array()).all();
  scene.world_bounds = bounds_given ? cfg.world_bounds : Aabb{lo, hi};

  if (cfg.extra_random_points > 0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 e = scene.world_bounds.extent();
    for (int i = 0; i < cfg.extra_random_points; ++i) {
      bg_pts.push_back(scene.world_bounds.lo + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(e));
      if (!static_cols.empty()) bg_cols.push_back(Vec3::Constant(0.5));
    }
  }

  scene.ground = gaussians_at(ground_pts, ground_cols, cfg);
  scene.background = gaussians_at(bg_pts, bg_cols, cfg);

  for (const auto& tr : track_list) {
    std::vector<Vec3> cols;
    std::vector<Vec3> pts = fuse_object_points(frames, tr, cfg.box_margin, colored ? &cols : nullptr);
    voxel_downsample(pts, &cols, cfg.voxel_size);
    if (pts.empty()) {
      spdlog::warn("object {} has no LiDAR returns; seeding its box surface", tr.id);
      pts = box_surface_samples(tr.size, 200, rng);
      cols.clear();
    }
    ObjectModel obj;
    obj.id = tr.id;
    obj.box_size = tr.size;
    obj.poses = tr.poses;
    obj.gaussians = gaussians_at(pts, cols, cfg);
    scene.objects.push_back(std::move(obj));
  }
  spdlog::info("initialized scene: {} ground, {} background, {} objects", scene.ground.size(),
               scene.background.size(), scene.objects.size());
  return scene;
}

// ── Assembly and gradient routing ───────────────────────────────

Gaussian3D object_to_world(const Gaussian3D& g, const Se3& pose) {
  Gaussian3D w = g;
  w.position = pose.apply(g.position);
  w.rotation = rot_quat(pose.rotation, g.rotation);
  return w;
}

AssembledFrame assemble_frame(const SceneModel& scene, int t) {
  AssembledFrame f;
  f.timestep = t;
  f.gaussians.reserve(scene.total_count());
  f.provenance.reserve(scene.total_count());
  for (std::size_t i = 0; i < scene.ground.size(); ++i) {
    f.gaussians.push_back(scene.ground[i]);
    f.provenance.push_back({Component::Ground, -1, static_cast<int>(i)});
  }
  for (std::size_t i = 0; i < scene.background.size(); ++i) {
    f.gaussians.push_back(scene.background[i]);
    f.provenance.push_back({Component::Background, -1, static_cast<int>(i)});
  }
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    const auto& obj = scene.objects[o];
    const Se3& pose = obj.pose_at(t);
    for (std::size_t i = 0; i < obj.gaussians.size(); ++i) {
      f.gaussians.push_back(object_to_world(obj.gaussians[i], pose));
      f.provenance.push_back({Component::Object, static_cast<int>(o), static_cast<int>(i)});
    }
  }
  return f;
}

SceneGradients SceneGradients::zeros_like(const SceneModel& scene) {
  SceneGradients g;
  g.ground.assign(scene.ground.size(), GaussianGrad{});
  g.background.assign(scene.background.size(), GaussianGrad{});
  for (const auto& o : scene.objects) g.objects.emplace_back(o.gaussians.size(), GaussianGrad{});
  return g;
}

SceneScalars SceneScalars::zeros_like(const SceneModel& scene) {
  SceneScalars s;
  s.ground.assign(scene.ground.size(), 0.0);
  s.background.assign(scene.background.size(), 0.0);
  for (const auto& o : scene.objects) s.objects.emplace_back(o.gaussians.size(), 0.0);
  return s;
}

void route_gradients(const SceneModel& scene, const AssembledFrame& frame,
                     std::span<const GaussianGrad> flat, SceneGradients& out) {
  if (flat.size() != frame.provenance.size()) {
    throw InvalidInput("gradient count does not match the assembled frame");
  }
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const Provenance& pv = frame.provenance[k];
    switch (pv.component) {
      case Component::Ground:
        out.ground[pv.source_index] += flat[k];
        break;
      case Component::Background:
        out.background[pv.source_index] += flat[k];
        break;
      case Component::Object: {
        const auto& obj = scene.objects[pv.object_index];
        const Se3& pose = obj.pose_at(frame.timestep);
        const Gaussian3D& local = obj.gaussians[pv.source_index];
        GaussianGrad g = flat[k];
        g.position = pose.rotation.transpose() * flat[k].position;
        g.rotation = rot_quat_backward(pose.rotation, local.rotation, flat[k].rotation).quat;
        out.objects[pv.object_index][pv.source_index] += g;
        break;
      }
    }
  }
}

void route_scalars(const AssembledFrame& frame, std::span<const double> flat, SceneScalars& out) {
  if (flat.size() != frame.provenance.size()) {
    throw InvalidInput("statistic count does not match the assembled frame");
  }
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const Provenance& pv = frame.provenance[k];
    switch (pv.component) {
      case Component::Ground: out.ground[pv.source_index] += flat[k]; break;
      case Component::Background: out.background[pv.source_index] += flat[k]; break;
      case Component::Object: out.objects[pv.object_index][pv.source_index] += flat[k]; break;
    }
  }
}

// ── Persistence ─────────────────────────────────────────────────

namespace {

void add_gaussian_element(PlyFile& ply, const std::string& name, const std::vector<const Gaussian3D*>& gs,
                          const std::vector<int>& object_ids, Component comp, int sh_count) {
  PlyElement& e = ply.add_element(name, gs.size());
  const char* scalar_names[] = {"x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
                                "log_scale_0", "log_scale_1", "log_scale_2", "opacity_logit"};
  for (const char* s : scalar_names) e.add_property(s, PlyType::Float64);
  for (int j = 0; j < 3 * sh_count; ++j) e.add_property("sh_" + std::to_string(j), PlyType::Float64);
  e.add_property("component", PlyType::UInt8);
  e.add_property("object_id", PlyType::Int32);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const Gaussian3D& g = *gs[i];
    for (int c = 0; c < 3; ++c) e.column(scalar_names[c])[i] = g.position[c];
    for (int c = 0; c < 4; ++c) e.column(scalar_names[3 + c])[i] = g.rotation[c];
    for (int c = 0; c < 3; ++c) e.column(scalar_names[7 + c])[i] = g.log_scale[c];
    e.column("opacity_logit")[i] = g.opacity_logit;
    for (int j = 0; j < 3 * sh_count; ++j) e.column("sh_" + std::to_string(j))[i] = g.sh[j / 3][j % 3];
    e.column("component")[i] = static_cast<double>(comp);
    e.column("object_id")[i] = object_ids.empty() ? -1 : object_ids[i];
  }
}

const PlyElement& require(const PlyFile& ply, const std::string& name, const std::filesystem::path& path) {
  const PlyElement* e = ply.find(name);
  if (e == nullptr) throw LoadError(path.string() + ": missing element '" + name + "'");
  return *e;
}

const std::vector<double>& col(const PlyElement& e, const std::string& name, const std::filesystem::path& path) {
  if (!e.has(name)) throw LoadError(path.string() + ": element '" + e.name + "' lacks property '" + name + "'");
  return e.column(name);
}

std::vector<Gaussian3D> read_gaussians(const PlyElement& e, int sh_count, const std::filesystem::path& path) {
  std::vector<Gaussian3D> out(e.count);
  const char* pos[] = {"x", "y", "z"};
  for (std::size_t i = 0; i < e.count; ++i) {
    Gaussian3D& g = out[i];
    for (int c = 0; c < 3; ++c) g.position[c] = col(e, pos[c], path)[i];
    for (int c = 0; c < 4; ++c) g.rotation[c] = col(e, "rot_" + std::to_string(c), path)[i];
    for (int c = 0; c < 3; ++c) g.log_scale[c] = col(e, "log_scale_" + std::to_string(c), path)[i];
    g.opacity_logit = col(e, "opacity_logit", path)[i];
    g.sh.fill(Vec3::Zero());
    for (int j = 0; j < 3 * sh_count; ++j) g.sh[j / 3][j % 3] = col(e, "sh_" + std::to_string(j), path)[i];
  }
  return out;
}

}  // namespace

void save_scene_ply(const std::filesystem::path& path, const SceneModel& scene) {
  const int sh_count = sh_coeff_count(scene.sh_degree);
  PlyFile ply;
  ply.comments.push_back("splatdrive scene checkpoint");

  PlyElement& info = ply.add_element("scene_info", 1);
  info.add_property("sh_degree", PlyType::Int32);
  const char* bnames[] = {"lo_x", "lo_y", "lo_z", "hi_x", "hi_y", "hi_z"};
  for (const char* b : bnames) info.add_property(b, PlyType::Float64);
  info.column("sh_degree")[0] = scene.sh_degree;
  for (int c = 0; c < 3; ++c) {
    info.column(bnames[c])[0] = scene.world_bounds.lo[c];
    info.column(bnames[3 + c])[0] = scene.world_bounds.hi[c];
  }

  auto pointers = [](const std::vector<Gaussian3D>& v) {
    std::vector<const Gaussian3D*> p;
    for (const auto& g : v) p.push_back(&g);
    return p;
  };
  add_gaussian_element(ply, "ground", pointers(scene.ground), {}, Component::Ground, sh_count);
  add_gaussian_element(ply, "background", pointers(scene.background), {}, Component::Background, sh_count);
  std::vector<const Gaussian3D*> obj_ptrs;
  std::vector<int> obj_ids;
  for (const auto& o : scene.objects) {
    for (const auto& g : o.gaussians) {
      obj_ptrs.push_back(&g);
      obj_ids.push_back(o.id);
    }
  }
  add_gaussian_element(ply, "object", obj_ptrs, obj_ids, Component::Object, sh_count);

  PlyElement& oi = ply.add_element("object_info", scene.objects.size());
  oi.add_property("object_id", PlyType::Int32);
  for (const char* s : {"size_x", "size_y", "size_z"}) oi.add_property(s, PlyType::Float64);
  std::size_t pose_count = 0;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    oi.column("object_id")[i] = o.id;
    oi.column("size_x")[i] = o.box_size.x();
    oi.column("size_y")[i] = o.box_size.y();
    oi.column("size_z")[i] = o.box_size.z();
    pose_count += o.poses.size();
  }

  PlyElement& op = ply.add_element("object_pose", pose_count);
  op.add_property("object_id", PlyType::Int32);
  op.add_property("timestep", PlyType::Int32);
  for (int j = 0; j < 12; ++j) op.add_property("p_" + std::to_string(j), PlyType::Float64);
  std::size_t row = 0;
  for (const auto& o : scene.objects) {
    for (const auto& [t, pose] : o.poses) {
      double m[12];
      se3_to_row_major(pose, m);
      op.column("object_id")[row] = o.id;
      op.column("timestep")[row] = t;
      for (int j = 0; j < 12; ++j) op.column("p_" + std::to_string(j))[row] = m[j];
      ++row;
    }
  }
  write_ply(path, ply);
}

SceneModel load_scene_ply(const std::filesystem::path& path) {
  const PlyFile ply = read_ply(path);
  SceneModel scene;
  const PlyElement& info = require(ply, "scene_info", path);
  if (info.count != 1) throw LoadError(path.string() + ": scene_info must have exactly one row");
  scene.sh_degree = static_cast<int>(col(info, "sh_degree", path)[0]);
  if (scene.sh_degree < 0 || scene.sh_degree > kMaxShDegree) {
    throw LoadError(path.string() + ": invalid sh_degree");
  }
  const char* bnames[] = {"lo_x", "lo_y", "lo_z", "hi_x", "hi_y", "hi_z"};
  for (int c = 0; c < 3; ++c) {
    scene.world_bounds.lo[c] = col(info, bnames[c], path)[0];
    scene.world_bounds.hi[c] = col(info, bnames[3 + c], path)[0];
  }
  const int sh_count = sh_coeff_count(scene.sh_degree);
  scene.ground = read_gaussians(require(ply, "ground", path), sh_count, path);
  scene.background = read_gaussians(require(ply, "background", path), sh_count, path);

  const PlyElement& oi = require(ply, "object_info", path);
  std::unordered_map<int, std::size_t> index_of;
  for (std::size_t i = 0; i < oi.count; ++i) {
    ObjectModel o;
    o.id = static_cast<int>(col(oi, "object_id", path)[i]);
    o.box_size = Vec3(col(oi, "size_x", path)[i], col(oi, "size_y", path)[i], col(oi, "size_z", path)[i]);
    index_of[o.id] = scene.objects.size();
    scene.objects.push_back(std::move(o));
  }
  const PlyElement& oe = require(ply, "object", path);
  const auto obj_gs = read_gaussians(oe, sh_count, path);
  const auto& ids = col(oe, "object_id", path);
  for (std::size_t i = 0; i < obj_gs.size(); ++i) {
    const auto it = index_of.find(static_cast<int>(ids[i]));
    if (it == index_of.end()) throw LoadError(path.string() + ": Gaussian references unknown object id");
    scene.objects[it->second].gaussians.push_back(obj_gs[i]);
  }
  const PlyElement& op = require(ply, "object_pose", path);
  for (std::size_t r = 0; r < op.count; ++r) {
    const auto it = index_of.find(static_cast<int>(col(op, "object_id", path)[r]));
    if (it == index_of.end()) throw LoadError(path.string() + ": pose references unknown object id");
    double m[12];
    for (int j = 0; j < 12; ++j) m[j] = col(op, "p_" + std::to_string(j), path)[r];
    scene.objects[it->second].poses[static_cast<int>(col(op, "timestep", path)[r])] = se3_from_row_major(m);
  }
  return scene;
}

}  // namespace splatdrive
