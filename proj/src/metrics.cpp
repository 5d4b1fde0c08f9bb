#include "splatdrive/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace splatdrive {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw InvalidInput(std::string(what) + ": image shapes differ");
}

using Plane = std::vector<double>;

Plane channel(const Image& img, int c) {
  Plane p(img.pixel_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * img.channels + c];
  return p;
}

// Valid-mode separable filtering: output is (w - 10) x (h - 10).
Plane filter_valid(const Plane& x, int w, int h, const std::array<double, kSsimWindow>& k) {
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  Plane tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < ow; ++i) {
      double s = 0.0;
      for (int u = 0; u < kSsimWindow; ++u) s += k[u] * x[static_cast<std::size_t>(y) * w + i + u];
      tmp[static_cast<std::size_t>(y) * ow + i] = s;
    }
  }
  Plane out(static_cast<std::size_t>(ow) * oh);
  for (int j = 0; j < oh; ++j) {
    for (int i = 0; i < ow; ++i) {
      double s = 0.0;
      for (int v = 0; v < kSsimWindow; ++v) s += k[v] * tmp[static_cast<std::size_t>(j + v) * ow + i];
      out[static_cast<std::size_t>(j) * ow + i] = s;
    }
  }
  return out;
}

// Adjoint of filter_valid: scatters a (w - 10) x (h - 10) map back to w x h.
Plane filter_adjoint(const Plane& g, int w, int h, const std::array<double, kSsimWindow>& k) {
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  Plane tmp(static_cast<std::size_t>(ow) * h, 0.0);
  for (int j = 0; j < oh; ++j) {
    for (int v = 0; v < kSsimWindow; ++v) {
      for (int i = 0; i < ow; ++i) {
        tmp[static_cast<std::size_t>(j + v) * ow + i] += k[v] * g[static_cast<std::size_t>(j) * ow + i];
      }
    }
  }
  Plane out(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < ow; ++i) {
      const double t = tmp[static_cast<std::size_t>(y) * ow + i];
      for (int u = 0; u < kSsimWindow; ++u) out[static_cast<std::size_t>(y) * w + i + u] += k[u] * t;
    }
  }
  return out;
}

double ssim_impl(const Image& a, const Image& b, Image* grad_a) {
  require_same(a, b, "ssim");
  if (a.width < kSsimWindow || a.height < kSsimWindow) {
    throw InvalidInput("ssim: images must be at least 11x11");
  }
  const int w = a.width, h = a.height;
  const auto k = ssim_taps();
  const std::size_t n_out = static_cast<std::size_t>(w - kSsimWindow + 1) * (h - kSsimWindow + 1);
  const double norm = 1.0 / static_cast<double>(n_out * a.channels);
  if (grad_a != nullptr) *grad_a = Image(w, h, a.channels);
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const Plane pa = channel(a, c), pb = channel(b, c);
    Plane paa(pa.size()), pbb(pa.size()), pab(pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const Plane mu_a = filter_valid(pa, w, h, k), mu_b = filter_valid(pb, w, h, k);
    const Plane e_aa = filter_valid(paa, w, h, k), e_bb = filter_valid(pbb, w, h, k);
    const Plane e_ab = filter_valid(pab, w, h, k);
    Plane g_mu(n_out), g_aa(n_out), g_ab(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
      const double A = mu_a[i], B = mu_b[i];
      const double n1 = 2.0 * A * B + kSsimC1;
      const double n2 = 2.0 * (e_ab[i] - A * B) + kSsimC2;
      const double d1 = A * A + B * B + kSsimC1;
      const double d2 = (e_aa[i] - A * A) + (e_bb[i] - B * B) + kSsimC2;
      const double s = (n1 * n2) / (d1 * d2);
      total += s;
      g_mu[i] = norm * s * (2.0 * B / n1 - 2.0 * B / n2 - 2.0 * A / d1 + 2.0 * A / d2);
      g_aa[i] = -norm * s / d2;
      g_ab[i] = 2.0 * norm * s / n2;
    }
    if (grad_a != nullptr) {
      const Plane G_mu = filter_adjoint(g_mu, w, h, k);
      const Plane G_aa = filter_adjoint(g_aa, w, h, k);
      const Plane G_ab = filter_adjoint(g_ab, w, h, k);
      for (std::size_t p = 0; p < pa.size(); ++p) {
        grad_a->data[p * a.channels + c] = G_mu[p] + 2.0 * pa[p] * G_aa[p] + pb[p] * G_ab[p];
      }
    }
  }
  return total * norm;
}

}  // namespace

std::array<double, kSsimWindow> ssim_taps() {
  std::array<double, kSsimWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    k[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

double mse(const Image& a, const Image& b) {
  require_same(a, b, "mse");
  if (a.data.empty()) throw InvalidInput("mse: empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(m));
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

double ssim_with_grad(const Image& a, const Image& b, Image& grad_a) { return ssim_impl(a, b, &grad_a); }

double box_iou(const Box2D& a, const Box2D& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

NtaScore nta_iou(std::span<const Box2D> candidates, std::span<const Box2D> ground_truth) {
  NtaScore s;
  if (ground_truth.empty()) {
    s.empty = true;
    return s;
  }
  double sum = 0.0;
  for (const auto& gt : ground_truth) {
    const Box2D* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
      const double d = (c.center() - gt.center()).norm();
      if (d < best_d) {
        best_d = d;
        best = &c;
      }
    }
    if (best != nullptr) sum += box_iou(*best, gt);
  }
  s.mean_iou = sum / static_cast<double>(ground_truth.size());
  return s;
}

double mask_class_iou(const Image& a, const Image& b, int cls) {
  require_same(a, b, "mask iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool ia = (a.data[i] > 0.5) == (cls == 1);
    const bool ib = (b.data[i] > 0.5) == (cls == 1);
    inter += ia && ib;
    uni += ia || ib;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double ntl_iou(const Image& rendered_lanes, const Image& gt_lanes) {
  return 0.5 * (mask_class_iou(rendered_lanes, gt_lanes, 1) + mask_class_iou(rendered_lanes, gt_lanes, 0));
}

Image lane_mask_from_color(const Image& rgb, const Vec3& marking, double tolerance) {
  if (rgb.channels != 3) throw InvalidInput("lane mask needs an RGB image");
  Image m(rgb.width, rgb.height, 1);
  for (std::size_t p = 0; p < m.data.size(); ++p) {
    const Vec3 c(rgb.data[3 * p], rgb.data[3 * p + 1], rgb.data[3 * p + 2]);
    m.data[p] = (c - marking).norm() <= tolerance ? 1.0 : 0.0;
  }
  return m;
}

}  // namespace splatdrive
