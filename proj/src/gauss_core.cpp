#include "splatdrive/gauss_core.hpp"

#include <cmath>
#include <string>

namespace splatdrive {

namespace {

constexpr double kC0 = kShC0;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};

// Basis values and their partials w.r.t. (x, y, z), in the 3DGS coefficient order.
void sh_basis(int degree, const Vec3& d, double* basis, Vec3* dbasis) {
  const double x = d.x(), y = d.y(), z = d.z();
  basis[0] = kC0;
  if (dbasis) dbasis[0] = Vec3::Zero();
  if (degree < 1) return;
  basis[1] = -kC1 * y;
  basis[2] = kC1 * z;
  basis[3] = -kC1 * x;
  if (dbasis) {
    dbasis[1] = Vec3(0, -kC1, 0);
    dbasis[2] = Vec3(0, 0, kC1);
    dbasis[3] = Vec3(-kC1, 0, 0);
  }
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  basis[4] = kC2[0] * x * y;
  basis[5] = kC2[1] * y * z;
  basis[6] = kC2[2] * (2.0 * zz - xx - yy);
  basis[7] = kC2[3] * x * z;
  basis[8] = kC2[4] * (xx - yy);
  if (dbasis) {
    dbasis[4] = kC2[0] * Vec3(y, x, 0);
    dbasis[5] = kC2[1] * Vec3(0, z, y);
    dbasis[6] = kC2[2] * Vec3(-2 * x, -2 * y, 4 * z);
    dbasis[7] = kC2[3] * Vec3(z, 0, x);
    dbasis[8] = kC2[4] * Vec3(2 * x, -2 * y, 0);
  }
  if (degree < 3) return;
  basis[9] = kC3[0] * y * (3.0 * xx - yy);
  basis[10] = kC3[1] * x * y * z;
  basis[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  basis[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  basis[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  basis[14] = kC3[5] * z * (xx - yy);
  basis[15] = kC3[6] * x * (xx - 3.0 * yy);
  if (dbasis) {
    dbasis[9] = kC3[0] * Vec3(6 * x * y, 3 * xx - 3 * yy, 0);
    dbasis[10] = kC3[1] * Vec3(y * z, x * z, x * y);
    dbasis[11] = kC3[2] * Vec3(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
    dbasis[12] = kC3[3] * Vec3(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
    dbasis[13] = kC3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
    dbasis[14] = kC3[5] * Vec3(2 * x * z, -2 * y * z, xx - yy);
    dbasis[15] = kC3[6] * Vec3(3 * xx - 3 * yy, -6 * x * y, 0);
  }
}

// Derivatives of the rotation matrix w.r.t. the unit quaternion components.
std::array<Mat3, 4> rotmat_partials(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -2 * z, 2 * y,
          2 * z, 0, -2 * x,
          -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z,
          2 * y, -4 * x, -2 * w,
          2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w,
          2 * x, 0, 2 * z,
          -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x,
          2 * w, -4 * z, 2 * y,
          2 * x, 2 * y, 0;
  return d;
}

// Left-multiplication matrix: quat_multiply(a, b) == left_matrix(a) * b.
Eigen::Matrix4d left_matrix(const Vec4& a) {
  Eigen::Matrix4d m;
  m << a[0], -a[1], -a[2], -a[3],
       a[1], a[0], -a[3], a[2],
       a[2], a[3], a[0], -a[1],
       a[3], -a[2], a[1], a[0];
  return m;
}

// One Shepperd branch: the pivot component is 0.5*sqrt(sum of signed diagonal
// terms); every other component is a signed pair of off-diagonal terms / (4*pivot).
struct ShepperdBranch {
  int pivot;
  std::array<double, 3> diag_sign;
  // For components in order w, x, y, z (pivot entry ignored):
  // (row_a, col_a, sign_a, row_b, col_b, sign_b)
  std::array<std::array<int, 6>, 4> pairs;
};

constexpr ShepperdBranch kBranches[4] = {
    {0, {1, 1, 1}, {{{0, 0, 0, 0, 0, 0}, {2, 1, 1, 1, 2, -1}, {0, 2, 1, 2, 0, -1}, {1, 0, 1, 0, 1, -1}}}},
    {1, {1, -1, -1}, {{{2, 1, 1, 1, 2, -1}, {0, 0, 0, 0, 0, 0}, {0, 1, 1, 1, 0, 1}, {0, 2, 1, 2, 0, 1}}}},
    {2, {-1, 1, -1}, {{{0, 2, 1, 2, 0, -1}, {0, 1, 1, 1, 0, 1}, {0, 0, 0, 0, 0, 0}, {1, 2, 1, 2, 1, 1}}}},
    {3, {-1, -1, 1}, {{{1, 0, 1, 0, 1, -1}, {0, 2, 1, 2, 0, 1}, {1, 2, 1, 2, 1, 1}, {0, 0, 0, 0, 0, 0}}}},
};

const ShepperdBranch& pick_branch(const Mat3& r) {
  const double tr = r.trace();
  int best = 0;
  double best_val = tr;
  for (int i = 0; i < 3; ++i) {
    if (r(i, i) > best_val) {
      best_val = r(i, i);
      best = i + 1;
    }
  }
  return kBranches[best];
}

double branch_radicand(const ShepperdBranch& b, const Mat3& r) {
  return 1.0 + b.diag_sign[0] * r(0, 0) + b.diag_sign[1] * r(1, 1) + b.diag_sign[2] * r(2, 2);
}

}  // namespace

int sh_degree_for_count(std::size_t count) {
  for (int d = 0; d <= kMaxShDegree; ++d) {
    if (static_cast<std::size_t>(sh_coeff_count(d)) == count) return d;
  }
  throw InvalidInput("SH coefficient count " + std::to_string(count) +
                     " is not (degree+1)^2 for a degree <= 3");
}

GaussianGrad& GaussianGrad::operator+=(const GaussianGrad& o) {
  position += o.position;
  rotation += o.rotation;
  log_scale += o.log_scale;
  opacity_logit += o.opacity_logit;
  for (int i = 0; i < kMaxShCoeffs; ++i) sh[i] += o.sh[i];
  return *this;
}

bool GaussianGrad::all_finite() const {
  bool ok = position.allFinite() && rotation.allFinite() && log_scale.allFinite() &&
            std::isfinite(opacity_logit);
  for (const auto& c : sh) ok = ok && c.allFinite();
  return ok;
}

Vec4 normalize_quat(const Vec4& q) {
  const double n = q.norm();
  if (!(n > 1e-12)) throw InvalidInput("zero-norm quaternion");
  return q / n;
}

Vec4 quat_multiply(const Vec4& a, const Vec4& b) { return left_matrix(a) * b; }

Mat3 quat_to_rotmat(const Vec4& q_in) {
  const Vec4 q = normalize_quat(q_in);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec4 quat_to_rotmat_backward(const Vec4& q_in, const Mat3& grad_rot) {
  const double n = q_in.norm();
  if (!(n > 1e-12)) throw InvalidInput("zero-norm quaternion");
  const Vec4 q = q_in / n;
  const auto partials = rotmat_partials(q);
  Vec4 g_unit;
  for (int i = 0; i < 4; ++i) g_unit[i] = (partials[i].array() * grad_rot.array()).sum();
  return (g_unit - q * q.dot(g_unit)) / n;
}

Vec4 rotmat_to_quat(const Mat3& r) {
  const ShepperdBranch& b = pick_branch(r);
  const double s = 0.5 * std::sqrt(std::max(branch_radicand(b, r), 0.0));
  Vec4 q;
  for (int k = 0; k < 4; ++k) {
    if (k == b.pivot) {
      q[k] = s;
      continue;
    }
    const auto& p = b.pairs[k];
    q[k] = (p[2] * r(p[0], p[1]) + p[5] * r(p[3], p[4])) / (4.0 * s);
  }
  return q;
}

Mat3 rotmat_to_quat_backward(const Mat3& r, const Vec4& g) {
  const ShepperdBranch& b = pick_branch(r);
  const double s = 0.5 * std::sqrt(std::max(branch_radicand(b, r), 0.0));
  const Vec4 q = rotmat_to_quat(r);
  Mat3 out = Mat3::Zero();
  double g_pivot = g[b.pivot];
  for (int k = 0; k < 4; ++k) {
    if (k == b.pivot) continue;
    const auto& p = b.pairs[k];
    // q_k = n_k / (4 s)
    g_pivot -= g[k] * q[k] / s;
    out(p[0], p[1]) += p[2] * g[k] / (4.0 * s);
    out(p[3], p[4]) += p[5] * g[k] / (4.0 * s);
  }
  // s = 0.5 sqrt(a)  =>  ds/da = 1 / (8 s)
  const double g_a = g_pivot / (8.0 * s);
  for (int i = 0; i < 3; ++i) out(i, i) += b.diag_sign[i] * g_a;
  return out;
}

Vec4 rot_quat(const Mat3& rot, const Vec4& q) {
  return quat_multiply(rotmat_to_quat(rot), q);
}

RotQuatGrad rot_quat_backward(const Mat3& rot, const Vec4& q, const Vec4& grad_out) {
  const Vec4 q_rot = rotmat_to_quat(rot);
  RotQuatGrad g;
  g.quat = left_matrix(q_rot).transpose() * grad_out;
  // quat_multiply(a, q) is also linear in a: a * q == right_matrix(q) * a.
  Eigen::Matrix4d right;
  right << q[0], -q[1], -q[2], -q[3],
           q[1], q[0], q[3], -q[2],
           q[2], -q[3], q[0], q[1],
           q[3], q[2], -q[1], q[0];
  g.rot = rotmat_to_quat_backward(rot, right.transpose() * grad_out);
  return g;
}

Mat3 build_covariance(const Vec4& rotation, const Vec3& log_scale) {
  const Mat3 r = quat_to_rotmat(rotation);
  const Mat3 m = r * log_scale.array().exp().matrix().asDiagonal();
  return m * m.transpose();
}

CovarianceGrad build_covariance_backward(const Vec4& rotation, const Vec3& log_scale,
                                         const Mat3& grad_cov) {
  const Mat3 r = quat_to_rotmat(rotation);
  const Vec3 s = log_scale.array().exp();
  const Mat3 m = r * s.asDiagonal();
  const Mat3 g_m = (grad_cov + grad_cov.transpose()) * m;
  const Mat3 g_r = g_m * s.asDiagonal();
  const Mat3 g_s = r.transpose() * g_m;
  CovarianceGrad out;
  for (int i = 0; i < 3; ++i) out.log_scale[i] = g_s(i, i) * s[i];
  out.rotation = quat_to_rotmat_backward(rotation, g_r);
  return out;
}

Vec3 sh_to_color(std::span<const Vec3> coeffs, const Vec3& view_dir) {
  const int degree = sh_degree_for_count(coeffs.size());
  double basis[kMaxShCoeffs];
  sh_basis(degree, view_dir, basis, nullptr);
  Vec3 c = Vec3::Constant(0.5);
  for (std::size_t i = 0; i < coeffs.size(); ++i) c += basis[i] * coeffs[i];
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

Vec3 sh_to_color_backward(std::span<const Vec3> coeffs, const Vec3& view_dir,
                          const Vec3& grad_color, std::span<Vec3> grad_coeffs) {
  const int degree = sh_degree_for_count(coeffs.size());
  double basis[kMaxShCoeffs];
  Vec3 dbasis[kMaxShCoeffs];
  sh_basis(degree, view_dir, basis, dbasis);
  Vec3 raw = Vec3::Constant(0.5);
  for (std::size_t i = 0; i < coeffs.size(); ++i) raw += basis[i] * coeffs[i];
  Vec3 g = grad_color;
  for (int ch = 0; ch < 3; ++ch) {
    if (raw[ch] < 0.0 || raw[ch] > 1.0) g[ch] = 0.0;
  }
  Vec3 g_dir = Vec3::Zero();
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    grad_coeffs[i] += basis[i] * g;
    g_dir += dbasis[i] * coeffs[i].dot(g);
  }
  return g_dir;
}

}  // namespace splatdrive
