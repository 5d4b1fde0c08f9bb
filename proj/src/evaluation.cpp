#include "splatdrive/evaluation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace splatdrive {

std::optional<Box2D> project_box(const Se3& pose, const Vec3& center, const Vec3& size, const CameraPose& cam) {
  const Intrinsics& k = cam.intr;
  Box2D b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  int in_front = 0;
  for (int c = 0; c < 8; ++c) {
    const Vec3 local = center + 0.5 * Vec3((c & 1) ? size.x() : -size.x(), (c & 2) ? size.y() : -size.y(),
                                           (c & 4) ? size.z() : -size.z());
    const Vec3 pc = cam.world_to_camera.apply(pose.apply(local));
    if (pc.z() <= k.near) continue;
    ++in_front;
    const double u = k.fx * pc.x() / pc.z() + k.cx;
    const double v = k.fy * pc.y() / pc.z() + k.cy;
    b.x_min = std::min(b.x_min, u);
    b.x_max = std::max(b.x_max, u);
    b.y_min = std::min(b.y_min, v);
    b.y_max = std::max(b.y_max, v);
  }
  if (in_front == 0) return std::nullopt;
  // Pixel centers sit on integers, so the image spans [-0.5, size - 0.5].
  b.x_min = std::max(b.x_min, -0.5);
  b.y_min = std::max(b.y_min, -0.5);
  b.x_max = std::min(b.x_max, k.width - 0.5);
  b.y_max = std::min(b.y_max, k.height - 0.5);
  if (!b.valid()) return std::nullopt;
  return b;
}

std::vector<Box2D> fitted_object_boxes(const SceneModel& scene, const CameraPose& cam, int t) {
  std::vector<Box2D> out;
  for (const auto& obj : scene.objects) {
    if (obj.poses.count(t) == 0) continue;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    bool any = false;
    for (const auto& g : obj.gaussians) {
      if (g.opacity() < 0.5) continue;
      lo = lo.cwiseMin(g.position);
      hi = hi.cwiseMax(g.position);
      any = true;
    }
    if (!any) continue;
    if (auto b = project_box(obj.pose_at(t), 0.5 * (lo + hi), hi - lo, cam)) out.push_back(*b);
  }
  return out;
}

std::vector<Box2D> track_boxes(const std::vector<ObjectTrack>& tracks, const CameraPose& cam, int t,
                               const std::vector<int>* visible_ids) {
  std::vector<Box2D> out;
  for (const auto& tr : tracks) {
    if (!tr.has_pose(t)) continue;
    if (visible_ids != nullptr && std::find(visible_ids->begin(), visible_ids->end(), tr.id) == visible_ids->end()) {
      continue;
    }
    if (auto b = project_box(tr.pose_at(t), Vec3::Zero(), tr.size, cam)) out.push_back(*b);
  }
  return out;
}

namespace {

bool inside_convex(const std::vector<Vec2>& poly, const Vec2& p) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    const double cross = (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
    if (cross < 0.0) return false;
  }
  return true;
}

}  // namespace

Image lane_mask_from_polygons(const std::vector<Marking>& lanes, const CameraPose& cam) {
  const Intrinsics& k = cam.intr;
  Image mask(k.width, k.height, 1);
  const Se3 c2w = cam.world_to_camera.inverse();
  const Vec3 origin = c2w.translation;
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 dir = c2w.rotation * Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      if (dir.z() >= 0.0) continue;
      const double s = -origin.z() / dir.z();
      if (s <= 0.0) continue;
      const Vec3 p = origin + s * dir;
      const Vec2 q(p.x(), p.y());
      for (const auto& m : lanes) {
        if (inside_convex(m.polygon, q)) {
          mask.at(x, y) = 1.0;
          break;
        }
      }
    }
  }
  return mask;
}

EvalReport evaluate(const SceneModel& scene, const NtdNet* ntd, const Dataset& ds, const TrainConfig& cfg,
                    const EvalOptions& options) {
  if (options.shift != 0.0 && !ds.spec) {
    throw InvalidInput("dataset has no scene.cfg, so shifted views have no ground truth");
  }
  std::vector<int> frames = options.frames;
  if (frames.empty()) {
    for (int f = 0; f < ds.frame_count(); ++f) {
      if (options.shift != 0.0 || is_holdout(cfg, f)) frames.push_back(f);
    }
  }
  std::optional<SynthScene> synth;
  if (ds.spec) synth = generate(*ds.spec);
  const Vec3 marking = synth ? synth->marking_color() : SynthScene{}.marking_color();

  EvalReport report;
  report.shift = options.shift;
  for (int f : frames) {
    if (f < 0 || f >= ds.frame_count()) throw InvalidInput("frame " + std::to_string(f) + " is out of range");
    const CameraPose cam = options.shift == 0.0 ? ds.cameras[f] : lateral_shift(ds.cameras[f], options.shift);
    const RenderOutput out = render_view(scene, ntd, ds.cameras[f], options.shift, f, ds.frame_count(),
                                         options.workers);
    EvalRow row;
    row.frame = f;
    Image gt_color, gt_lane;
    std::vector<int> visible_ids;
    double depth_sum = 0.0;
    std::size_t depth_count = 0;
    if (synth) {
      const GtView gt = raytrace_gt(*synth, cam, f, options.workers);
      gt_color = gt.color;
      gt_lane = gt.lane;
      for (std::size_t i = 0; i < gt.hit.data.size(); ++i) {
        const int id = static_cast<int>(gt.object_id.data[i]);
        if (id > 0 && std::find(visible_ids.begin(), visible_ids.end(), id) == visible_ids.end()) {
          visible_ids.push_back(id);
        }
        if (gt.hit.data[i] > 0.0) {
          depth_sum += std::abs(out.depth.data[i] - gt.depth.data[i]);
          ++depth_count;
        }
      }
    } else {
      gt_color = ds.images[f];
      gt_lane = lane_mask_from_polygons(ds.lanes, cam);
    }
    row.psnr = psnr(out.color, gt_color);
    row.ssim = ssim(out.color, gt_color);
    const auto candidates = fitted_object_boxes(scene, cam, f);
    const auto truth = track_boxes(ds.tracks, cam, f, synth ? &visible_ids : nullptr);
    const NtaScore nta = nta_iou(candidates, truth);
    row.nta_iou = nta.mean_iou;
    row.nta_empty = nta.empty;
    row.ntl_iou = ntl_iou(lane_mask_from_color(out.color, marking, options.lane_tolerance), gt_lane);
    row.depth_mae = depth_count > 0 ? depth_sum / static_cast<double>(depth_count)
                                    : std::numeric_limits<double>::quiet_NaN();
    report.rows.push_back(row);
  }

  EvalRow& m = report.mean;
  m.frame = -1;
  int nta_frames = 0;
  for (const auto& r : report.rows) {
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.ntl_iou += r.ntl_iou;
    m.depth_mae += r.depth_mae;
    if (!r.nta_empty) {
      m.nta_iou += r.nta_iou;
      ++nta_frames;
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(report.rows.size(), 1));
  m.psnr /= n;
  m.ssim /= n;
  m.ntl_iou /= n;
  m.depth_mae /= n;
  m.nta_empty = nta_frames == 0;
  m.nta_iou = nta_frames > 0 ? m.nta_iou / nta_frames : 0.0;
  return report;
}

std::string eval_csv_header() { return "frame,shift,psnr,ssim,nta_iou,ntl_iou,depth_mae"; }

namespace {

std::string eval_csv_row(const EvalRow& r, double shift) {
  char nta[32];
  if (r.nta_empty) {
    std::snprintf(nta, sizeof(nta), "nan");
  } else {
    std::snprintf(nta, sizeof(nta), "%.9g", r.nta_iou);
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%s,%.9g,%.9g",
                r.frame < 0 ? "mean" : std::to_string(r.frame).c_str(), shift, r.psnr, r.ssim, nta, r.ntl_iou,
                r.depth_mae);
  return buf;
}

}  // namespace

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << eval_csv_header() << "\n";
  for (const auto& r : report.rows) out << eval_csv_row(r, report.shift) << "\n";
  out << eval_csv_row(report.mean, report.shift) << "\n";
}

}  // namespace splatdrive
