/*
 * Copyright 2026 The UltraZoom Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ultrazoom/degrade.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "test_support.hpp"

namespace uz {
namespace {

TEST(ColorStats, ConstantRegion) {
  Image img(20, 20, 3, 0.5f);
  const auto s = color_stats(img, {2, 2, 12, 12});
  for (int c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(*std::max_element(s.hist[c].begin(), s.hist[c].end()), 1.0);
    EXPECT_DOUBLE_EQ(s.hist[c][128], 1.0);
  }
}

TEST(ColorStats, TwoTone) {
  Image img(10, 10, 3, 0.0f);
  for (int y = 0; y < 10; ++y)
    for (int x = 5; x < 10; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = 1.0f;
  const auto s = color_stats(img);
  for (int c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(s.cdf[c][0], 0.5);
    EXPECT_DOUBLE_EQ(s.cdf[c][254], 0.5);
    EXPECT_DOUBLE_EQ(s.cdf[c][255], 1.0);
  }
}

TEST(ColorStats, RandomRegionSumsToOne) {
  const Image img = test::uniform_noise(64, 48, 3, 9);
  const auto s = color_stats(img, {3, 5, 50, 40});
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(std::accumulate(s.hist[c].begin(), s.hist[c].end(), 0.0), 1.0, 1e-9);
    EXPECT_NEAR(s.cdf[c][255], 1.0, 1e-9);
    for (int b = 1; b < 256; ++b) EXPECT_GE(s.cdf[c][b], s.cdf[c][b - 1]);
  }
}

TEST(ColorStats, EmptyRegion) {
  Image img(8, 8, 3);
  EXPECT_THROW(color_stats(img, {4, 4, 4, 8}), Error);
  EXPECT_THROW(color_stats(img, {4, 4, 12, 8}), Error);
}

TEST(MatchColor, SelfMatchIsIdentity) {
  const Image img = quantize8(test::textured(64, 64, 4));
  const Image out = match_color(img, color_stats(img));
  for (size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(out.data[i], img.data[i], 1.0 / 255);
}

TEST(MatchColor, ConstantToConstant) {
  const Image src(16, 16, 3, 0.2f);
  const Image dst(16, 16, 3, 0.7f);
  const Image out = match_color(src, color_stats(dst));
  // Output lands on the 8-bit level that holds the target mass.
  for (float v : out.data) EXPECT_NEAR(v, std::lround(0.7 * 255) / 255.0, 1e-6);
}

// Independent empirical CDF on the 8-bit grid.
std::array<double, 256> empirical_cdf(const Image& img, int c) {
  std::array<double, 256> h{};
  for (size_t i = 0; i < img.pixel_count(); ++i)
    h[std::lround(std::clamp(img.data[i * img.channels + c], 0.0f, 1.0f) * 255)] += 1;
  double acc = 0;
  for (auto& v : h) {
    acc += v;
    v = acc / img.pixel_count();
  }
  return h;
}

TEST(MatchColor, OutputCdfTracksTarget) {
  // Source: every 8-bit level exactly 256 times, shuffled, so no level holds
  // more than 1/256 of the mass (the resolution limit of a 256-entry LUT).
  Image src(256, 256, 3);
  Rng rng(17);
  for (int c = 0; c < 3; ++c) {
    std::vector<int> levels(256 * 256);
    for (size_t i = 0; i < levels.size(); ++i) levels[i] = static_cast<int>(i % 256);
    for (size_t i = levels.size() - 1; i > 0; --i) std::swap(levels[i], levels[rng.index(i + 1)]);
    for (size_t i = 0; i < levels.size(); ++i) src.data[i * 3 + c] = levels[i] / 255.0f;
  }
  Image target = test::uniform_noise(100, 80, 3, 3);
  for (float& v : target.data) v = v * v;  // skewed target
  const auto ts = color_stats(target);
  const Image out = match_color(src, ts);
  for (int c = 0; c < 3; ++c) {
    const auto cdf = empirical_cdf(out, c);
    double sup = 0;
    for (int b = 0; b < 256; ++b) sup = std::max(sup, std::abs(cdf[b] - ts.cdf[c][b]));
    EXPECT_LE(sup, 1.0 / 256 + 1e-12) << c;
  }
}

TEST(MatchColor, LutIsMonotone) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Image a = test::uniform_noise(40, 40, 3, seed);
    Image b = test::textured(40, 40, seed + 1);
    const auto lut = matching_lut(color_stats(a), color_stats(b));
    for (int c = 0; c < 3; ++c)
      for (int i = 1; i < 256; ++i) EXPECT_GE(lut[c][i], lut[c][i - 1]);
  }
}

TEST(Resample, FactorOneIsIdentity) {
  const Image img = test::textured(37, 29, 2);
  const Image out = resample_bicubic(img, 1.0);
  ASSERT_TRUE(out.same_shape(img));
  EXPECT_EQ(out.data, img.data);
}

TEST(Resample, ConstantsAreExact) {
  const Image img(33, 21, 3, 0.3f);
  for (double f : {0.1, 0.25, 0.5, 0.77, 1.3, 2.0, 4.0, 6.93}) {
    const Image out = resample_bicubic(img, f);
    EXPECT_EQ(out.width, static_cast<int>(std::lround(33 * f)));
    for (float v : out.data) EXPECT_NEAR(v, 0.3f, 1e-6f) << f;
  }
}

TEST(Resample, RampDownsample) {
  const int w = 256;
  const Image img = test::hramp(w, 16, 0.1f, 0.9f);
  const Image out = resample_bicubic(img, 0.25);
  ASSERT_EQ(out.width, 64);
  double dev = 0;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double u = (x + 0.5) / 0.25 - 0.5;  // source coordinate of this sample
      dev += std::abs(out.at(x, y, 0) - (0.1 + 0.8 * u / (w - 1)));
    }
  EXPECT_LT(dev / (out.width * out.height), 1e-3);
}

TEST(Resample, TooSmall) {
  try {
    resample_bicubic(Image(3, 3, 1), 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::OutputTooSmall);
  }
}

TEST(Jpeg, FlatGrayIsNearlyExact) {
  const Image img(64, 64, 3, 0.5f);
  const Image out = jpeg_roundtrip(img, 95);
  for (size_t i = 0; i < img.data.size(); ++i) EXPECT_LT(std::abs(out.data[i] - img.data[i]), 2.0 / 255);
}

TEST(Jpeg, NoiseGainsBlockiness) {
  // Noise uniform on [0.4, 0.6]. Full-range noise keeps most DCT
  // coefficients at quality 75 and shows almost no block structure.
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Image img = test::uniform_noise(128, 128, 3, seed);
    for (float& v : img.data) v = 0.4f + 0.2f * v;
    img = quantize8(img);
    EXPECT_GT(blockiness(jpeg_roundtrip(img, 75)), blockiness(img)) << seed;
  }
}

TEST(Jpeg, QualityRange) {
  const Image img(16, 16, 3, 0.5f);
  EXPECT_THROW(jpeg_roundtrip(img, 0), Error);
  EXPECT_THROW(jpeg_roundtrip(img, 101), Error);
}

TEST(Jpeg, PhaseMatchesCropOfWhole) {
  const Image whole = test::textured(96, 96, 8);
  const Image full_rt = jpeg_roundtrip(whole, 75);
  const Rect r{32, 48, 96, 96};
  const Image part = jpeg_roundtrip(crop(whole, r), 75, r.x0, r.y0);
  EXPECT_LT(mean_abs_diff(part, crop(full_rt, r)), 0.5 / 255);
}

TEST(Blockiness, ConstantIsNeutral) {
  EXPECT_DOUBLE_EQ(blockiness(Image(32, 32, 3, 0.4f)), 1.0);
}

TEST(Blockiness, BlockyImage) {
  Image img(64, 64, 3);
  Rng rng(1);
  for (int by = 0; by < 8; ++by)
    for (int bx = 0; bx < 8; ++bx) {
      const float v = static_cast<float>(rng.uniform());
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          for (int c = 0; c < 3; ++c) img.at(bx * 8 + x, by * 8 + y, c) = v + 0.002f * (x + y);
    }
  EXPECT_GT(blockiness(img), 2.0);
}

TEST(Blockiness, SmoothGradient) {
  EXPECT_NEAR(blockiness(test::hramp(64, 64, 0.0f, 1.0f)), 1.0, 0.2);
  EXPECT_THROW(blockiness(Image(15, 40, 3)), Error);
}

TEST(Degrade, DegenerateRecipeIsPlainResample) {
  const Image img = test::textured(100, 80, 3);
  DegradationRecipe r;
  r.scale = 0.5;
  r.extra_downsample = 1;
  r.jpeg_enabled = false;
  EXPECT_EQ(degrade(img, r).image.data, resample_bicubic(img, 0.5).data);
}

TEST(Degrade, ConstantStaysConstant) {
  const Image img(128, 128, 3, 0.6f);
  DegradationRecipe r;
  r.scale = 0.3;
  r.jpeg_enabled = true;
  for (float v : degrade(img, r).image.data) EXPECT_LT(std::abs(v - 0.6f), 2.0 / 255);
}

TEST(Degrade, BlurRemovesHighFrequencyEnergy) {
  const Image img = test::textured(1024, 1024, 12);
  DegradationRecipe r;
  r.scale = 0.125;
  r.extra_downsample = 2;
  r.jpeg_enabled = true;
  const Image out = degrade(img, r).image;
  EXPECT_EQ(out.width, 128);
  EXPECT_EQ(out.height, 128);
  EXPECT_LT(laplacian_variance(out), laplacian_variance(resample_bicubic(img, 0.125)));
}

TEST(Degrade, DimensionsFollowScale) {
  Rng rng(77);
  for (int k = 0; k < 30; ++k) {
    const int w = 20 + static_cast<int>(rng.index(200));
    const int h = 20 + static_cast<int>(rng.index(200));
    DegradationRecipe r;
    r.scale = rng.uniform(0.1, 0.9);
    r.extra_downsample = 1.0 + static_cast<double>(rng.index(3));
    r.jpeg_enabled = rng.index(2) == 1;
    const Image out = degrade(Image(w, h, 3, 0.5f), r).image;
    EXPECT_EQ(out.width, static_cast<int>(std::lround(w * r.scale)));
    EXPECT_EQ(out.height, static_cast<int>(std::lround(h * r.scale)));
  }
}

TEST(Degrade, Deterministic) {
  const Image img = test::textured(200, 150, 6);
  DegradationRecipe r;
  r.scale = 0.37;
  r.jpeg_enabled = true;
  EXPECT_EQ(degrade(img, r).image.data, degrade(img, r).image.data);
}

TEST(Degrade, ConditionalJpegTrigger) {
  const Image img = test::textured(256, 256, 6);
  DegradationRecipe r;
  r.scale = 0.25;
  const auto blocky = degrade(img, r, 3.0);
  EXPECT_TRUE(blocky.recipe.jpeg_enabled);
  const auto clean = degrade(img, r, 1.0);
  EXPECT_FALSE(clean.recipe.jpeg_enabled);
}

TEST(Degrade, InvalidRecipe) {
  DegradationRecipe r;
  r.scale = 1.5;
  EXPECT_THROW(degrade(Image(32, 32, 3), r), Error);
  r.scale = 0.5;
  r.jpeg_quality = 0;
  EXPECT_THROW(degrade(Image(32, 32, 3), r), Error);
}

TEST(DegradeWindow, MatchesCropOfWholeImage) {
  const Image img = quantize8(test::textured(512, 512, 21));
  DegradationRecipe r;
  r.scale = 0.25;
  r.extra_downsample = 2;
  r.jpeg_enabled = true;
  const Image whole = degrade(img, r).image;
  // Patch at an origin whose scaled position is fractional.
  const int px = 133, py = 250, size = 128;
  const Rect lr{static_cast<int>(std::lround(px * 0.25)), static_cast<int>(std::lround(py * 0.25)),
                0, 0};
  const Rect lr_rect{lr.x0, lr.y0, lr.x0 + 32, lr.y0 + 32};
  const Image win = degrade_window(crop(img, {px, py, px + size, py + size}), r, px, py, lr_rect);
  const Image ref = crop(whole, lr_rect);
  // Interior agreement (kernels that stay inside the patch).
  const Rect inner{4, 4, 28, 28};
  EXPECT_LT(mean_abs_diff(crop(win, inner), crop(ref, inner)), 0.01);
  EXPECT_LT(mean_abs_diff(win, ref), 0.02);
}

}  // namespace
}  // namespace uz
