#pragma once

// Image-quality and geometric agreement metrics.

#include "splatdrive/common.hpp"
#include "splatdrive/image_io.hpp"

#include <algorithm>
#include <array>
#include <span>

namespace splatdrive {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean squared error over all channels. Throws InvalidInput on shape mismatch.
double mse(const Image& a, const Image& b);

/// 10 log10(1 / MSE), capped at kPsnrCap for identical images.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over every full 11x11 window position and channel (no padding).
/// Throws InvalidInput on shape mismatch or images smaller than the window.
double ssim(const Image& a, const Image& b);

/// SSIM together with dSSIM/da.
double ssim_with_grad(const Image& a, const Image& b, Image& grad_a);

/// Normalized 1D Gaussian taps of the SSIM window.
std::array<double, kSsimWindow> ssim_taps();

struct Box2D {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double area() const { return std::max(0.0, x_max - x_min) * std::max(0.0, y_max - y_min); }
  Vec2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
  bool valid() const { return x_min < x_max && y_min < y_max; }
};

double box_iou(const Box2D& a, const Box2D& b);

struct NtaScore {
  double mean_iou = 0.0;
  bool empty = false;  // no ground-truth boxes: score is 0 and meaningless
};

/// Each ground-truth box is matched to the candidate with the nearest center
/// (Euclidean, pixels); unmatched ground truth contributes 0.
NtaScore nta_iou(std::span<const Box2D> candidates, std::span<const Box2D> ground_truth);

/// IoU of the pixels where both masks equal `cls` (0 or 1); 1 when neither has any.
double mask_class_iou(const Image& a, const Image& b, int cls);

/// Mean of the lane-class and background-class IoU of two binary masks.
double ntl_iou(const Image& rendered_lanes, const Image& gt_lanes);

/// 1 where the pixel lies within `tolerance` (Euclidean RGB) of `marking`.
Image lane_mask_from_color(const Image& rgb, const Vec3& marking, double tolerance);

}  // namespace splatdrive
