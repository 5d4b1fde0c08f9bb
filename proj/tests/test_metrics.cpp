#include "splatdrive/metrics.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace splatdrive;
using namespace splatdrive::testing;

namespace {

Image random_image(std::mt19937_64& rng, int w, int h, int c) {
  Image img(w, h, c);
  for (auto& v : img.data) v = uniform(rng, 0.0, 1.0);
  return img;
}

// Direct 2D windowed SSIM without separable filtering or any shared helper.
double ssim_oracle(const Image& a, const Image& b) {
  double g[11];
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-(i - 5) * (i - 5) / (2.0 * 1.5 * 1.5));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y0 = 0; y0 + 11 <= a.height; ++y0) {
      for (int x0 = 0; x0 + 11 <= a.width; ++x0) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int v = 0; v < 11; ++v) {
          for (int u = 0; u < 11; ++u) {
            const double w = g[u] * g[v];
            const double pa = a.at(x0 + u, y0 + v, c), pb = b.at(x0 + u, y0 + v, c);
            ma += w * pa;
            mb += w * pb;
            saa += w * pa * pa;
            sbb += w * pb * pb;
            sab += w * pa * pb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / count;
}

}  // namespace

TEST(Psnr, KnownOffsetAndCap) {
  Image a(8, 8, 3, 0.4);
  Image b(8, 8, 3, 0.5);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_THROW(psnr(a, Image(8, 7, 3)), InvalidInput);
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
  std::mt19937_64 rng(11);
  const Image clean = random_image(rng, 32, 32, 3);
  Image noise(32, 32, 3);
  for (auto& v : noise.data) v = uniform(rng, -1.0, 1.0);
  double prev = kPsnrCap + 1.0;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Image noisy = clean;
    for (std::size_t i = 0; i < noisy.data.size(); ++i) noisy.data[i] += amp * noise.data[i];
    const double p = psnr(clean, noisy);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, TapsAreNormalizedAndSymmetric) {
  const auto k = ssim_taps();
  double s = 0.0;
  for (double v : k) s += v;
  EXPECT_NEAR(s, 1.0, 1e-15);
  for (int i = 0; i < kSsimWindow; ++i) EXPECT_EQ(k[i], k[kSsimWindow - 1 - i]);
}

TEST(Ssim, IdentityIsOne) {
  std::mt19937_64 rng(12);
  const Image a = random_image(rng, 20, 17, 3);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, MatchesDirectWindowedOracle) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 4; ++trial) {
    const int w = 11 + trial * 5, h = 11 + trial * 3;
    const Image a = random_image(rng, w, h, trial % 2 == 0 ? 3 : 1);
    Image b = a;
    for (auto& v : b.data) v = std::clamp(v + uniform(rng, -0.3, 0.3), 0.0, 1.0);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-6);
  }
}

TEST(Ssim, SymmetricAndBounded) {
  std::mt19937_64 rng(14);
  const Image a = random_image(rng, 24, 24, 3), b = random_image(rng, 24, 24, 3);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-14);
  EXPECT_LT(ssim(a, b), 1.0);
  EXPECT_GE(ssim(a, b), -1.0);
}

TEST(Ssim, RejectsSmallOrMismatchedImages) {
  EXPECT_THROW(ssim(Image(10, 20, 3), Image(10, 20, 3)), InvalidInput);
  EXPECT_THROW(ssim(Image(20, 20, 3), Image(20, 20, 1)), InvalidInput);
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  Image a = random_image(rng, 16, 14, 3);
  const Image b = random_image(rng, 16, 14, 3);
  Image grad;
  const double s = ssim_with_grad(a, b, grad);
  EXPECT_EQ(s, ssim(a, b));
  ASSERT_TRUE(grad.same_shape(a));
  int agree = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double num = central_difference(a.data[i], [&] { return ssim(a, b); });
    agree += fd_agrees(grad.data[i], num);
  }
  EXPECT_EQ(agree, static_cast<int>(a.data.size()));
}

TEST(BoxIou, Cases) {
  const Box2D a{0, 0, 2, 2};
  EXPECT_EQ(box_iou(a, a), 1.0);
  EXPECT_EQ(box_iou(a, Box2D{5, 5, 6, 6}), 0.0);
  // Half overlap: intersection 2, union 6.
  EXPECT_NEAR(box_iou(a, Box2D{1, 0, 3, 2}), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(box_iou(Box2D{}, Box2D{}), 0.0);
}

TEST(NtaIou, NearestCenterMatchingAndEmptyFlag) {
  const std::vector<Box2D> gt = {{0, 0, 2, 2}, {10, 10, 12, 12}};
  const std::vector<Box2D> cand = {{10, 10, 12, 12}, {1, 0, 3, 2}};
  const NtaScore s = nta_iou(cand, gt);
  EXPECT_FALSE(s.empty);
  EXPECT_NEAR(s.mean_iou, 0.5 * (1.0 / 3.0 + 1.0), 1e-15);
  EXPECT_EQ(nta_iou({}, gt).mean_iou, 0.0);
  EXPECT_TRUE(nta_iou(cand, {}).empty);
}

TEST(NtlIou, PixelCountOracle) {
  Image gt(10, 10, 1), pred(10, 10, 1);
  for (int y = 0; y < 10; ++y) {
    for (int x = 3; x < 5; ++x) gt.at(x, y) = 1.0;
    // Prediction dilated by one pixel on each side.
    for (int x = 2; x < 6; ++x) pred.at(x, y) = 1.0;
  }
  // Lane: 20 / 40. Background: 60 / 80.
  EXPECT_NEAR(mask_class_iou(pred, gt, 1), 0.5, 1e-15);
  EXPECT_NEAR(mask_class_iou(pred, gt, 0), 0.75, 1e-15);
  EXPECT_NEAR(ntl_iou(pred, gt), 0.625, 1e-15);
  EXPECT_EQ(ntl_iou(gt, gt), 1.0);
  EXPECT_EQ(mask_class_iou(Image(4, 4, 1), Image(4, 4, 1), 1), 1.0);
}

TEST(LaneMask, ColorThreshold) {
  Image rgb(3, 1, 3, 0.2);
  rgb.at(1, 0, 0) = rgb.at(1, 0, 1) = rgb.at(1, 0, 2) = 0.95;
  const Image m = lane_mask_from_color(rgb, Vec3::Constant(1.0), 0.15);
  EXPECT_EQ(m.data, (std::vector<double>{0, 1, 0}));
  EXPECT_THROW(lane_mask_from_color(Image(3, 1, 1), Vec3::Ones(), 0.1), InvalidInput);
}
