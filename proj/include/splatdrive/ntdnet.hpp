#pragma once

// Trajectory-conditioned deformation network: two ReLU MLPs (delta pose and
// encoded position/time) summed and mapped linearly to per-Gaussian deltas.

#include "splatdrive/gauss_core.hpp"
#include "splatdrive/tensor_blob.hpp"

#include <Eigen/Dense>

#include <random>
#include <span>
#include <string>
#include <vector>

namespace splatdrive {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Matrix = Eigen::MatrixXd;

/// Position (3), rotation (4), log-scale (3), opacity logit (1).
inline constexpr int kDeltaWidth = 11;

/// Normalized pose offset between two body-to-world poses: world-frame
/// translation difference and axis-angle of R_ori^T R_novel, both over L.
Vec6 delta_pose(const Se3& novel, const Se3& original, double length);

/// Per component: v, then sin(2^k pi v), cos(2^k pi v) for k < bands.
std::vector<double> positional_encode(std::span<const double> v, int bands);
inline int encoded_width(int dims, int bands) { return dims * (1 + 2 * bands); }

struct DeltaGaussian {
  Vec3 d_position = Vec3::Zero();
  Vec4 d_rotation = Vec4::Zero();
  Vec3 d_log_scale = Vec3::Zero();
  double d_opacity_logit = 0.0;
};

DeltaGaussian delta_from_column(const Matrix& deltas, Eigen::Index col);

struct NtdConfig {
  int layers = 8;
  int hidden = 256;
  int pe_bands_x = 10;
  int pe_bands_t = 6;
  double length = 6.0;  // delta-pose normalization L, meters
};

struct LinearLayer {
  Matrix weight;  // out x in
  Matrix bias;    // out x 1
};

/// Weights of both MLPs and the output layer; also used for gradients.
struct NtdParams {
  std::vector<LinearLayer> pose;
  std::vector<LinearLayer> field;
  LinearLayer out;

  NtdParams zeros_like() const;
  /// Every tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  std::size_t parameter_count() const;
};

class NtdNet {
 public:
  /// PyTorch-style uniform init for the MLPs, zero output layer. `bounds`
  /// maps positions to [-1, 1] before encoding. Throws ConfigError on
  /// invalid shapes or L <= 0.
  NtdNet(const NtdConfig& cfg, const Aabb& bounds, std::mt19937_64& rng);
  NtdNet(const NtdConfig& cfg, const Aabb& bounds, NtdParams params);

  const NtdConfig& config() const { return cfg_; }
  const Aabb& bounds() const { return bounds_; }
  NtdParams& params() { return params_; }
  const NtdParams& params() const { return params_; }

  int field_input_width() const { return encoded_width(3, cfg_.pe_bands_x) + encoded_width(1, cfg_.pe_bands_t); }

  struct Cache {
    Vec6 pose_input = Vec6::Zero();
    std::vector<Matrix> pose_acts;   // post-ReLU, one column each
    Matrix field_input;              // encoded inputs, one column per Gaussian
    std::vector<Matrix> field_acts;  // post-ReLU
    Matrix summed;                   // hidden x N
    std::vector<Vec3> positions;
  };

  /// kDeltaWidth x N deltas for the given world positions at normalized time t.
  Matrix forward(const Vec6& dp, std::span<const Vec3> positions, double t, Cache* cache = nullptr) const;

  /// Accumulates weight gradients into `grads` (shaped like params()) and,
  /// when non-empty, adds position gradients into `grad_positions`.
  void backward(const Cache& cache, const Matrix& grad_deltas, NtdParams& grads,
                std::span<Vec3> grad_positions = {}) const;

  std::vector<NamedTensor> to_tensors() const;
  static NtdNet from_tensors(const std::vector<NamedTensor>& tensors);

 private:
  void validate() const;
  Matrix encode_field(std::span<const Vec3> positions, double t) const;

  NtdConfig cfg_;
  Aabb bounds_;
  NtdParams params_;
};

/// g' = g + delta, quaternion renormalized. Throws InvalidInput on count mismatch.
std::vector<Gaussian3D> apply_deformation(std::span<const Gaussian3D> gaussians, const Matrix& deltas);

/// Pulls gradients w.r.t. deformed Gaussians back to the undeformed Gaussians
/// (overwrites `grads` in place) and returns the kDeltaWidth x N delta gradient.
Matrix apply_deformation_backward(std::span<const Gaussian3D> gaussians, const Matrix& deltas,
                                  std::span<GaussianGrad> grads);

}  // namespace splatdrive
