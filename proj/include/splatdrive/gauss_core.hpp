#pragma once

// Gaussian primitive math: quaternion algebra, covariance assembly and
// spherical-harmonics color, each paired with its reverse-mode derivative.

#include "splatdrive/common.hpp"

#include <array>
#include <span>

namespace splatdrive {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxShCoeffs = (kMaxShDegree + 1) * (kMaxShDegree + 1);

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Band-0 basis constant; the DC term maps to color as C0 * sh[0] + 0.5.
inline constexpr double kShC0 = 0.28209479177387814;
inline Vec3 sh_dc_from_color(const Vec3& rgb) { return (rgb - Vec3::Constant(0.5)) / kShC0; }
inline Vec3 color_from_sh_dc(const Vec3& dc) { return kShC0 * dc + Vec3::Constant(0.5); }

/// Degree for a coefficient count; throws InvalidInput unless the count is
/// (d+1)^2 with d <= 3.
int sh_degree_for_count(std::size_t count);

/// One anisotropic Gaussian. Scales live in log space and opacity as a logit so
/// that unconstrained updates keep them valid.
struct Gaussian3D {
  Vec3 position = Vec3::Zero();
  Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  std::array<Vec3, kMaxShCoeffs> sh;

  Gaussian3D() { sh.fill(Vec3::Zero()); }

  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 scale() const { return log_scale.array().exp(); }
};

/// Gradient (or any per-parameter quantity) with the layout of Gaussian3D.
struct GaussianGrad {
  Vec3 position = Vec3::Zero();
  Vec4 rotation = Vec4::Zero();
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  std::array<Vec3, kMaxShCoeffs> sh;

  GaussianGrad() { sh.fill(Vec3::Zero()); }

  GaussianGrad& operator+=(const GaussianGrad& o);
  bool all_finite() const;
};

Vec4 normalize_quat(const Vec4& q);

/// Hamilton product a * b.
Vec4 quat_multiply(const Vec4& a, const Vec4& b);

/// Rotation matrix of q / |q|. Throws InvalidInput on a zero quaternion.
Mat3 quat_to_rotmat(const Vec4& q);
/// dL/dq given dL/dR, including the internal normalization.
Vec4 quat_to_rotmat_backward(const Vec4& q, const Mat3& grad_rot);

/// Unit quaternion of a rotation matrix (Shepperd's branch selection).
Vec4 rotmat_to_quat(const Mat3& rot);
Mat3 rotmat_to_quat_backward(const Mat3& rot, const Vec4& grad_q);

/// Quaternion of the rotation R_t * R(q): the object-to-world rotation rule.
Vec4 rot_quat(const Mat3& rot, const Vec4& q);

struct RotQuatGrad {
  Mat3 rot = Mat3::Zero();
  Vec4 quat = Vec4::Zero();
};
RotQuatGrad rot_quat_backward(const Mat3& rot, const Vec4& q, const Vec4& grad_out);

/// Sigma = R S S^T R^T with S = diag(exp(log_scale)).
Mat3 build_covariance(const Vec4& rotation, const Vec3& log_scale);
inline Mat3 build_covariance(const Gaussian3D& g) {
  return build_covariance(g.rotation, g.log_scale);
}

struct CovarianceGrad {
  Vec4 rotation = Vec4::Zero();
  Vec3 log_scale = Vec3::Zero();
};
/// `grad_cov` holds dL/dSigma_ij treating all nine entries as independent.
CovarianceGrad build_covariance_backward(const Vec4& rotation, const Vec3& log_scale,
                                         const Mat3& grad_cov);

/// Real SH color with a +0.5 offset, clamped to [0, 1] per channel.
/// `view_dir` is the unit direction from the camera center to the Gaussian.
Vec3 sh_to_color(std::span<const Vec3> coeffs, const Vec3& view_dir);

/// Accumulates dL/dcoeffs into `grad_coeffs` and returns dL/dview_dir.
/// Channels clamped in the forward pass pass no gradient.
Vec3 sh_to_color_backward(std::span<const Vec3> coeffs, const Vec3& view_dir,
                          const Vec3& grad_color, std::span<Vec3> grad_coeffs);

}  // namespace splatdrive
