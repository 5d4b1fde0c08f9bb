#pragma once

// Tile-based EWA splatting: project, depth-sort, alpha-composite, plus the
// exact reverse pass back to every Gaussian parameter.

#include "splatdrive/camera.hpp"
#include "splatdrive/gauss_core.hpp"
#include "splatdrive/image_io.hpp"

#include <optional>
#include <span>
#include <vector>

namespace splatdrive {

inline constexpr int kTileSize = 16;
inline constexpr double kLowPassFilter = 0.3;
inline constexpr double kMaxAlpha = 0.99;
/// Default per-pixel contribution cutoff: splats whose alpha at a pixel is
/// below it are skipped there. Pass kExactAlpha to composite every term,
/// which keeps the image smooth in the parameters (finite-difference checks).
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kExactAlpha = 0.0;
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr double kFootprintSigmas = 3.0;
/// Projected centers beyond this multiple of the half-image from the image
/// center are culled.
inline constexpr double kFrustumGuard = 1.3;

struct Splat2D {
  Vec2 mean = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  double alpha_base = 0.0;
};

/// std::nullopt when the Gaussian is culled (camera-z outside (near, far),
/// center outside the guard band, or 3-sigma footprint entirely off the image).
std::optional<Splat2D> project_gaussian(const Gaussian3D& g, int sh_degree, const CameraPose& cam);

struct RenderOutput {
  Image color;  // 3 channels
  Image depth;  // alpha-normalized expected camera-z; 0 where nothing was hit
  Image alpha;  // accumulated opacity, 1 - final transmittance
};

/// Forward-pass cache consumed by render_backward.
struct RenderState {
  struct Prepared {
    Vec2 mean;
    Mat2 conic;
    Vec3 color;
    Vec3 cam_point;
    Vec3 view_dir;
    double view_dist = 0.0;
    double opacity = 0.0;
    double radius = 0.0;
    double min_power = 0.0;  // exponent below which alpha < min_alpha
    bool visible = false;
  };
  std::vector<Prepared> prepared;
  std::vector<std::vector<int>> tile_lists;  // sorted front to back
  std::vector<int> contrib_count;            // per pixel
  std::vector<double> final_transmittance;   // per pixel
  std::vector<double> depth_numerator;       // per pixel
  std::vector<double> accum_alpha;           // per pixel
  int tiles_x = 0;
  int tiles_y = 0;
};

/// `workers` = 0 uses default_workers(). Output is bitwise independent of the
/// worker count.
RenderOutput render(std::span<const Gaussian3D> gaussians, int sh_degree, const CameraPose& cam,
                    RenderState* state = nullptr, int workers = 0, double min_alpha = kMinAlpha);

/// Upstream gradients; an empty image means zero gradient for that output.
struct RenderGrads {
  Image color;
  Image depth;
  Image alpha;
};

/// Writes dLoss/dparams for every Gaussian into `grads` (overwritten, sized
/// like `gaussians`). When `mean2d_grad_norm` is non-empty it receives the
/// screen-space positional gradient norm per Gaussian (0 if culled).
void render_backward(std::span<const Gaussian3D> gaussians, int sh_degree, const CameraPose& cam,
                     const RenderState& state, const RenderGrads& upstream,
                     std::span<GaussianGrad> grads, std::span<double> mean2d_grad_norm = {},
                     int workers = 0);

/// Convenience overload that recomputes the forward state.
std::vector<GaussianGrad> render_backward(std::span<const Gaussian3D> gaussians, int sh_degree,
                                          const CameraPose& cam, const RenderGrads& upstream,
                                          int workers = 0, double min_alpha = kMinAlpha);

}  // namespace splatdrive
