#include "splatdrive/restore_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace splatdrive {

Image gaussian_blur(const Image& image, double sigma) {
  if (sigma <= 0.0) return image;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int w = image.width, h = image.height, ch = image.channels;
  Image tmp(w, h, ch), out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * image.at(std::clamp(x + i, 0, w - 1), y, c);
        tmp.at(x, y, c) = acc;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1), c);
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

std::optional<std::pair<int, double>> parse_restore_item_name(const std::string& stem) {
  int frame = 0;
  double shift = 0.0;
  char tail = 0;
  if (std::sscanf(stem.c_str(), "%d_%lf%c", &frame, &shift, &tail) != 2) return std::nullopt;
  return std::make_pair(frame, shift);
}

SimulatedRestorer::SimulatedRestorer(SynthScene scene, RestoreSimConfig cfg, int workers)
    : scene_(std::move(scene)), cfg_(cfg), workers_(workers) {}

Image SimulatedRestorer::restore_one(const Image& render, int t, double shift) const {
  if (t < 0 || t >= static_cast<int>(scene_.cameras.size())) {
    throw RestorationFailed("frame " + std::to_string(t) + " is outside the scene");
  }
  const CameraPose cam = lateral_shift(scene_.cameras[t], shift * (1.0 + cfg_.pose_bias));
  Image target = gaussian_blur(raytrace_gt(scene_, cam, t, workers_).color, cfg_.blur_sigma);
  if (!target.same_shape(render)) throw RestorationFailed("render size differs from the scene camera");
  for (std::size_t i = 0; i < target.data.size(); ++i) {
    const double restored = cfg_.mix * cfg_.gain * target.data[i] + (1.0 - cfg_.mix) * render.data[i];
    target.data[i] = std::clamp(restored, 0.0, 1.0);
  }
  return target;
}

std::vector<Image> SimulatedRestorer::restore(const std::vector<RestoreItem>& items) {
  std::vector<Image> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(restore_one(item.image, item.frame, item.shift));
  return out;
}

}  // namespace splatdrive
