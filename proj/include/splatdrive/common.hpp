#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

namespace splatdrive {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;  // quaternions are stored (w, x, y, z)
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// ── Errors ──────────────────────────────────────────────────────

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SegmentationFailed : public Error {
 public:
  using Error::Error;
};

class MissingPose : public Error {
 public:
  using Error::Error;
};

class RestorationFailed : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

// ── Rigid transforms ────────────────────────────────────────────

/// Rigid transform x' = rotation * x + translation.
struct Se3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Se3 inverse() const {
    Se3 inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }
  Se3 operator*(const Se3& rhs) const {
    Se3 out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }
};

Se3 se3_from_row_major(const double* twelve);
void se3_to_row_major(const Se3& pose, double* twelve);

/// Rotation about +z by `yaw` radians.
Mat3 yaw_rotation(double yaw);

// ── Axis-aligned box ────────────────────────────────────────────

struct Aabb {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
};

// ── Parallelism ─────────────────────────────────────────────────

/// Runs fn(begin, end, worker) over [0, count) in `workers` static contiguous
/// chunks. Chunk boundaries depend only on (count, workers).
void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t, std::size_t, int)>& fn);

/// Worker count used when a caller passes 0.
int default_workers();
void set_default_workers(int workers);

/// Configures the process logger from SPLATDRIVE_LOG (error|warn|info|debug).
void init_logging();

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace splatdrive
