#pragma once

// Stand-in for a learned video restorer on synthetic data: each novel-view
// render is pulled toward a degraded ray-traced ground truth of the same
// view. The degradation (blur, gain, partial blend with the render, and an
// optional lateral overshoot of the target camera) keeps a gap between the
// pseudo targets and the true images.

#include "splatdrive/trainer.hpp"

#include <optional>
#include <string>

namespace splatdrive {

struct RestoreSimConfig {
  double mix = 0.8;         // weight of the degraded ground truth in the output
  double blur_sigma = 0.7;  // pixels; 0 disables
  double gain = 0.97;
  // The target is ray traced from shift * (1 + pose_bias), so the pseudo
  // targets are spatially misaligned with the view they supervise.
  double pose_bias = 0.0;
};

/// Separable Gaussian blur with clamped borders, radius ceil(3 sigma).
Image gaussian_blur(const Image& image, double sigma);

/// Parses a restore_item_name stem back into (frame, shift).
std::optional<std::pair<int, double>> parse_restore_item_name(const std::string& stem);

class SimulatedRestorer : public Restorer {
 public:
  SimulatedRestorer(SynthScene scene, RestoreSimConfig cfg, int workers = 1);
  std::vector<Image> restore(const std::vector<RestoreItem>& items) override;
  std::string describe() const override { return "simulated"; }

  /// Restores one render of frame t seen from the recorded camera shifted
  /// laterally by `shift`. Throws RestorationFailed on a bad frame or shape.
  Image restore_one(const Image& render, int t, double shift) const;

 private:
  SynthScene scene_;
  RestoreSimConfig cfg_;
  int workers_;
};

}  // namespace splatdrive
