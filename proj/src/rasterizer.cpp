#include "splatdrive/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace splatdrive {

namespace {

struct Projection {
  Vec3 cam_point;
  Mat3 cov3d;
  Eigen::Matrix<double, 2, 3> jw;  // J * W
  Mat2 cov2d;
  Vec2 mean;
};

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& pc, const Intrinsics& k) {
  const double z = pc.z(), z2 = z * z;
  Eigen::Matrix<double, 2, 3> j;
  j << k.fx / z, 0.0, -k.fx * pc.x() / z2,
       0.0, k.fy / z, -k.fy * pc.y() / z2;
  return j;
}

// Shared by project_gaussian and the rasterizer's preprocess; returns false
// when the Gaussian lies outside the (near, far) slab or its center falls
// outside the guard band around the image.
bool project_geometry(const Gaussian3D& g, const CameraPose& cam, Projection& out) {
  const Mat3& w = cam.world_to_camera.rotation;
  out.cam_point = cam.world_to_camera.apply(g.position);
  const double z = out.cam_point.z();
  if (!(z > cam.intr.near) || !(z < cam.intr.far)) return false;
  out.cov3d = build_covariance(g);
  out.jw = projection_jacobian(out.cam_point, cam.intr) * w;
  out.cov2d = out.jw * out.cov3d * out.jw.transpose();
  out.cov2d(0, 0) += kLowPassFilter;
  out.cov2d(1, 1) += kLowPassFilter;
  out.mean = Vec2(cam.intr.fx * out.cam_point.x() / z + cam.intr.cx,
                  cam.intr.fy * out.cam_point.y() / z + cam.intr.cy);
  // Centers far outside the view have a degenerate linearized footprint.
  const double hx = 0.5 * cam.intr.width, hy = 0.5 * cam.intr.height;
  return std::abs(out.mean.x() - (hx - 0.5)) <= kFrustumGuard * hx &&
         std::abs(out.mean.y() - (hy - 0.5)) <= kFrustumGuard * hy;
}

double footprint_radius(const Mat2& cov2d) {
  const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
  const double det = cov2d.determinant();
  const double lambda_max = mid + std::sqrt(std::max(mid * mid - det, 0.0));
  return kFootprintSigmas * std::sqrt(lambda_max);
}

bool footprint_hits_image(const Vec2& mean, double r, const Intrinsics& k) {
  return mean.x() + r >= -0.5 && mean.x() - r <= k.width - 0.5 && mean.y() + r >= -0.5 &&
         mean.y() - r <= k.height - 0.5;
}

// Hot fields of one splat, copied contiguously per tile for the pixel loop.
struct PackedSplat {
  double mx, my, a, b, c, min_power;
};

int tile_index(double coord) { return static_cast<int>(std::floor((coord + 0.5) / kTileSize)); }

struct SplatGrad {
  Vec2 mean = Vec2::Zero();
  double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  double depth = 0.0;

  void add(const SplatGrad& o) {
    mean += o.mean;
    conic_a += o.conic_a;
    conic_b += o.conic_b;
    conic_c += o.conic_c;
    color += o.color;
    opacity += o.opacity;
    depth += o.depth;
  }
};

}  // namespace

std::optional<Splat2D> project_gaussian(const Gaussian3D& g, int sh_degree, const CameraPose& cam) {
  Projection p;
  if (!project_geometry(g, cam, p)) return std::nullopt;
  if (!footprint_hits_image(p.mean, footprint_radius(p.cov2d), cam.intr)) return std::nullopt;
  Splat2D s;
  s.mean = p.mean;
  s.cov2d = p.cov2d;
  s.depth = p.cam_point.z();
  const Vec3 dir = (g.position - cam.center()).normalized();
  s.color = sh_to_color(std::span(g.sh.data(), sh_coeff_count(sh_degree)), dir);
  s.alpha_base = g.opacity();
  return s;
}

RenderOutput render(std::span<const Gaussian3D> gaussians, int sh_degree, const CameraPose& cam,
                    RenderState* state_out, int workers, double min_alpha) {
  cam.validate();
  const Intrinsics& k = cam.intr;
  RenderState local;
  RenderState& st = state_out ? *state_out : local;
  st = RenderState{};
  st.tiles_x = (k.width + kTileSize - 1) / kTileSize;
  st.tiles_y = (k.height + kTileSize - 1) / kTileSize;
  const std::size_t n = gaussians.size();
  st.prepared.resize(n);
  const Vec3 center = cam.center();
  const int coeffs = sh_coeff_count(sh_degree);

  parallel_for(n, workers, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t i = begin; i < end; ++i) {
      const Gaussian3D& g = gaussians[i];
      auto& pr = st.prepared[i];
      Projection p;
      if (!project_geometry(g, cam, p)) continue;
      const double r = footprint_radius(p.cov2d);
      if (!footprint_hits_image(p.mean, r, k)) continue;
      pr.visible = true;
      pr.mean = p.mean;
      pr.conic = p.cov2d.inverse();
      pr.cam_point = p.cam_point;
      pr.radius = r;
      const Vec3 v = g.position - center;
      pr.view_dist = v.norm();
      pr.view_dir = v / pr.view_dist;
      pr.color = sh_to_color(std::span(g.sh.data(), coeffs), pr.view_dir);
      pr.opacity = g.opacity();
      pr.min_power = pr.opacity > min_alpha ? std::log(min_alpha / pr.opacity)
                                                : std::numeric_limits<double>::infinity();
    }
  });

  std::vector<int> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (st.prepared[i].visible) order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return st.prepared[a].cam_point.z() < st.prepared[b].cam_point.z();
  });

  st.tile_lists.assign(static_cast<std::size_t>(st.tiles_x) * st.tiles_y, {});
  for (int idx : order) {
    const auto& pr = st.prepared[idx];
    const int x0 = std::max(0, tile_index(pr.mean.x() - pr.radius));
    const int x1 = std::min(st.tiles_x - 1, tile_index(pr.mean.x() + pr.radius));
    const int y0 = std::max(0, tile_index(pr.mean.y() - pr.radius));
    const int y1 = std::min(st.tiles_y - 1, tile_index(pr.mean.y() + pr.radius));
    for (int ty = y0; ty <= y1; ++ty) {
      for (int tx = x0; tx <= x1; ++tx) st.tile_lists[static_cast<std::size_t>(ty) * st.tiles_x + tx].push_back(idx);
    }
  }

  RenderOutput out{Image(k.width, k.height, 3), Image(k.width, k.height, 1), Image(k.width, k.height, 1)};
  const std::size_t pixels = static_cast<std::size_t>(k.width) * k.height;
  st.contrib_count.assign(pixels, 0);
  st.final_transmittance.assign(pixels, 1.0);
  st.depth_numerator.assign(pixels, 0.0);
  st.accum_alpha.assign(pixels, 0.0);

  parallel_for(st.tile_lists.size(), workers, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t t = begin; t < end; ++t) {
      const auto& list = st.tile_lists[t];
      const int tx = static_cast<int>(t) % st.tiles_x;
      const int ty = static_cast<int>(t) / st.tiles_x;
      const int px_end = std::min(k.width, (tx + 1) * kTileSize);
      const int py_end = std::min(k.height, (ty + 1) * kTileSize);
      std::vector<PackedSplat> packed(list.size());
      for (std::size_t j = 0; j < list.size(); ++j) {
        const auto& pr = st.prepared[list[j]];
        packed[j] = {pr.mean.x(), pr.mean.y(), pr.conic(0, 0), pr.conic(0, 1), pr.conic(1, 1), pr.min_power};
      }
      for (int py = ty * kTileSize; py < py_end; ++py) {
        for (int px = tx * kTileSize; px < px_end; ++px) {
          double trans = 1.0, depth_num = 0.0, acc = 0.0;
          Vec3 color = Vec3::Zero();
          int count = 0;
          for (std::size_t j = 0; j < list.size(); ++j) {
            const PackedSplat& ps = packed[j];
            const double dx = px - ps.mx, dy = py - ps.my;
            const double power = -0.5 * (ps.a * dx * dx + 2.0 * ps.b * dx * dy + ps.c * dy * dy);
            if (power < ps.min_power) continue;
            const auto& pr = st.prepared[list[j]];
            const double alpha = std::min(kMaxAlpha, pr.opacity * std::exp(power));
            const double next = trans * (1.0 - alpha);
            if (next < kMinTransmittance) break;
            const double w = alpha * trans;
            color += w * pr.color;
            depth_num += w * pr.cam_point.z();
            acc += w;
            trans = next;
            count = static_cast<int>(j) + 1;
          }
          const std::size_t pix = static_cast<std::size_t>(py) * k.width + px;
          st.contrib_count[pix] = count;
          st.final_transmittance[pix] = trans;
          st.depth_numerator[pix] = depth_num;
          st.accum_alpha[pix] = acc;
          for (int c = 0; c < 3; ++c) out.color.at(px, py, c) = color[c];
          out.alpha.at(px, py) = acc;
          out.depth.at(px, py) = acc > 0.0 ? depth_num / acc : 0.0;
        }
      }
    }
  });
  return out;
}

void render_backward(std::span<const Gaussian3D> gaussians, int sh_degree, const CameraPose& cam,
                     const RenderState& st, const RenderGrads& up, std::span<GaussianGrad> grads,
                     std::span<double> mean2d_grad_norm, int workers) {
  const Intrinsics& k = cam.intr;
  const std::size_t n = gaussians.size();
  if (grads.size() != n) throw InvalidInput("gradient buffer size does not match Gaussian count");
  if (st.prepared.size() != n) throw InvalidInput("render state does not match Gaussian list");
  const bool has_color = !up.color.data.empty();
  const bool has_depth = !up.depth.data.empty();
  const bool has_alpha = !up.alpha.data.empty();
  if (workers <= 0) workers = default_workers();
  workers = std::max(1, std::min<int>(workers, static_cast<int>(st.tile_lists.size())));

  // Partials live per tile, aligned with the tile's sorted list, and are
  // summed in tile order so the result does not depend on the worker count.
  std::vector<std::vector<SplatGrad>> tile_grads(st.tile_lists.size());
  parallel_for(st.tile_lists.size(), workers, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t t = begin; t < end; ++t) {
      const auto& list = st.tile_lists[t];
      if (list.empty()) continue;
      auto& buf = tile_grads[t];
      buf.assign(list.size(), SplatGrad{});
      const int tx = static_cast<int>(t) % st.tiles_x;
      const int ty = static_cast<int>(t) / st.tiles_x;
      const int px_end = std::min(k.width, (tx + 1) * kTileSize);
      const int py_end = std::min(k.height, (ty + 1) * kTileSize);
      for (int py = ty * kTileSize; py < py_end; ++py) {
        for (int px = tx * kTileSize; px < px_end; ++px) {
          const std::size_t pix = static_cast<std::size_t>(py) * k.width + px;
          const int count = st.contrib_count[pix];
          if (count == 0) continue;
          const Vec3 g_color = has_color ? Vec3(up.color.at(px, py, 0), up.color.at(px, py, 1),
                                                up.color.at(px, py, 2))
                                         : Vec3::Zero();
          const double acc = st.accum_alpha[pix];
          const double depth = acc > 0.0 ? st.depth_numerator[pix] / acc : 0.0;
          double g_num = 0.0;
          double g_acc = has_alpha ? up.alpha.at(px, py) : 0.0;
          if (has_depth && acc > 0.0) {
            const double gd = up.depth.at(px, py);
            g_num = gd / acc;
            g_acc -= gd * depth / acc;
          }
          const double t_final = st.final_transmittance[pix];
          double trans = t_final;
          Vec3 acc_color = Vec3::Zero(), last_color = Vec3::Zero();
          double acc_depth = 0.0, last_depth = 0.0, last_alpha = 0.0;
          for (int j = count - 1; j >= 0; --j) {
            const int idx = list[j];
            const auto& pr = st.prepared[idx];
            const double dx = px - pr.mean.x(), dy = py - pr.mean.y();
            const double power = -0.5 * (pr.conic(0, 0) * dx * dx + 2.0 * pr.conic(0, 1) * dx * dy +
                                         pr.conic(1, 1) * dy * dy);
            if (power < pr.min_power) continue;
            const double gauss = std::exp(power);
            const double raw = pr.opacity * gauss;
            const double alpha = std::min(kMaxAlpha, raw);
            trans /= (1.0 - alpha);
            const double w = alpha * trans;
            const double z = pr.cam_point.z();
            SplatGrad& sg = buf[j];
            sg.color += w * g_color;
            sg.depth += w * g_num;

            acc_color = last_alpha * last_color + (1.0 - last_alpha) * acc_color;
            acc_depth = last_alpha * last_depth + (1.0 - last_alpha) * acc_depth;
            last_alpha = alpha;
            last_color = pr.color;
            last_depth = z;

            const double g_alpha = trans * (g_color.dot(pr.color - acc_color) + g_num * (z - acc_depth)) +
                                   g_acc * t_final / (1.0 - alpha);
            if (raw >= kMaxAlpha) continue;
            sg.opacity += g_alpha * gauss;
            const double g_power = g_alpha * alpha;
            sg.mean.x() += g_power * (pr.conic(0, 0) * dx + pr.conic(0, 1) * dy);
            sg.mean.y() += g_power * (pr.conic(0, 1) * dx + pr.conic(1, 1) * dy);
            sg.conic_a += -0.5 * g_power * dx * dx;
            sg.conic_b += -g_power * dx * dy;
            sg.conic_c += -0.5 * g_power * dy * dy;
          }
        }
      }
    }
  });
  std::vector<SplatGrad> splat_grads(n);
  for (std::size_t t = 0; t < tile_grads.size(); ++t) {
    const auto& list = st.tile_lists[t];
    for (std::size_t j = 0; j < tile_grads[t].size(); ++j) splat_grads[list[j]].add(tile_grads[t][j]);
  }

  const Mat3& rot_cw = cam.world_to_camera.rotation;
  const int coeffs = sh_coeff_count(sh_degree);
  parallel_for(n, workers, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t i = begin; i < end; ++i) {
      GaussianGrad& out = grads[i];
      out = GaussianGrad{};
      if (!mean2d_grad_norm.empty()) mean2d_grad_norm[i] = 0.0;
      const auto& pr = st.prepared[i];
      if (!pr.visible) continue;
      const Gaussian3D& g = gaussians[i];
      const SplatGrad& sg = splat_grads[i];

      out.opacity_logit = sg.opacity * pr.opacity * (1.0 - pr.opacity);

      const Vec3 g_dir = sh_to_color_backward(std::span(g.sh.data(), coeffs), pr.view_dir, sg.color,
                                              std::span(out.sh.data(), coeffs));
      Vec3 g_world = (g_dir - pr.view_dir * pr.view_dir.dot(g_dir)) / pr.view_dist;

      const Vec3& pc = pr.cam_point;
      const double z = pc.z(), z2 = z * z, z3 = z2 * z;
      Vec3 g_pc = Vec3::Zero();
      g_pc.x() += sg.mean.x() * k.fx / z;
      g_pc.y() += sg.mean.y() * k.fy / z;
      g_pc.z() += -sg.mean.x() * k.fx * pc.x() / z2 - sg.mean.y() * k.fy * pc.y() / z2;
      g_pc.z() += sg.depth;

      Mat2 g_conic;
      g_conic << sg.conic_a, 0.5 * sg.conic_b, 0.5 * sg.conic_b, sg.conic_c;
      const Mat2& conic = pr.conic;
      const Mat2 g_cov2d = -conic * g_conic * conic;

      const Mat3 cov3d = build_covariance(g);
      const Eigen::Matrix<double, 2, 3> jw = projection_jacobian(pc, k) * rot_cw;
      const Mat3 g_cov3d = jw.transpose() * g_cov2d * jw;
      const Eigen::Matrix<double, 2, 3> g_jw = (g_cov2d + g_cov2d.transpose()) * jw * cov3d;
      const Eigen::Matrix<double, 2, 3> g_j = g_jw * rot_cw.transpose();
      g_pc.x() += g_j(0, 2) * (-k.fx / z2);
      g_pc.y() += g_j(1, 2) * (-k.fy / z2);
      g_pc.z() += g_j(0, 0) * (-k.fx / z2) + g_j(0, 2) * (2.0 * k.fx * pc.x() / z3) +
                  g_j(1, 1) * (-k.fy / z2) + g_j(1, 2) * (2.0 * k.fy * pc.y() / z3);

      const CovarianceGrad cg = build_covariance_backward(g.rotation, g.log_scale, g_cov3d);
      out.rotation = cg.rotation;
      out.log_scale = cg.log_scale;
      g_world += rot_cw.transpose() * g_pc;
      out.position = g_world;
      if (!mean2d_grad_norm.empty()) mean2d_grad_norm[i] = sg.mean.norm();
    }
  });
}

std::vector<GaussianGrad> render_backward(std::span<const Gaussian3D> gaussians, int sh_degree,
                                          const CameraPose& cam, const RenderGrads& upstream,
                                          int workers, double min_alpha) {
  RenderState st;
  render(gaussians, sh_degree, cam, &st, workers, min_alpha);
  std::vector<GaussianGrad> grads(gaussians.size());
  render_backward(gaussians, sh_degree, cam, st, upstream, grads, {}, workers);
  return grads;
}

}  // namespace splatdrive
