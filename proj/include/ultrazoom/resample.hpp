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

#pragma once

#include <cmath>
#include <vector>

#include "ultrazoom/error.hpp"
#include "ultrazoom/image.hpp"

namespace uz {

// Catmull-Rom cubic (Keys kernel with a = -0.5).
inline double cubic_kernel(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t < 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

// Output sample i reads the source at coordinate start + i * step (pixel
// centers at integers). When step > 1 the kernel is widened by step so
// downsampling is antialiased.
struct AxisMap {
  int out_size = 0;
  double step = 1.0;
  double start = 0.0;
};

// Pixel-center mapping for a scale factor: src = (i + 0.5) / factor - 0.5.
inline AxisMap axis_for_factor(int out_size, double factor) {
  return {out_size, 1.0 / factor, 0.5 / factor - 0.5};
}

namespace detail {

struct Taps {
  std::vector<int> first;      // per output: offset into index/weight arrays
  std::vector<int> count;
  std::vector<int> index;      // clamped source indices
  std::vector<float> weight;   // normalized to sum 1
};

inline Taps build_taps(const AxisMap& m, int in_size) {
  Taps t;
  t.first.resize(m.out_size);
  t.count.resize(m.out_size);
  const double scale = std::max(1.0, m.step);
  const double support = 2.0 * scale;
  for (int i = 0; i < m.out_size; ++i) {
    const double center = m.start + i * m.step;
    const int lo = static_cast<int>(std::floor(center - support)) + 1;
    const int hi = static_cast<int>(std::ceil(center + support)) - 1;
    t.first[i] = static_cast<int>(t.index.size());
    double sum = 0.0;
    const size_t begin = t.weight.size();
    std::vector<double> w;
    for (int k = lo; k <= hi; ++k) {
      const double wk = cubic_kernel((k - center) / scale);
      if (wk == 0.0) continue;
      t.index.push_back(std::clamp(k, 0, in_size - 1));
      w.push_back(wk);
      sum += wk;
    }
    for (double wk : w) t.weight.push_back(static_cast<float>(wk / sum));
    t.count[i] = static_cast<int>(t.weight.size() - begin);
  }
  return t;
}

}  // namespace detail

// Separable resampling with edge clamping. Kernel weights are renormalized
// per output sample, so constants are reproduced exactly.
inline Image resample_axes(const Image& src, const AxisMap& mx, const AxisMap& my,
                           bool clamp_output = true) {
  require(!src.empty(), Errc::InvalidArgument, "resample of empty image");
  require(mx.out_size >= 1 && my.out_size >= 1, Errc::OutputTooSmall,
          "resampled output would be empty");
  const int ch = src.channels;
  const detail::Taps tx = detail::build_taps(mx, src.width);
  const detail::Taps ty = detail::build_taps(my, src.height);

  // Only source rows referenced by the vertical pass are filtered horizontally.
  std::vector<char> needed(src.height, 0);
  for (int idx : ty.index) needed[idx] = 1;

  Image horiz(mx.out_size, src.height, ch);
  for (int y = 0; y < src.height; ++y) {
    if (!needed[y]) continue;
    const auto in = src.row(y);
    auto out = horiz.row(y);
    for (int x = 0; x < mx.out_size; ++x) {
      const int f = tx.first[x];
      for (int c = 0; c < ch; ++c) {
        float acc = 0.0f;
        for (int k = 0; k < tx.count[x]; ++k)
          acc += tx.weight[f + k] * in[static_cast<size_t>(tx.index[f + k]) * ch + c];
        out[static_cast<size_t>(x) * ch + c] = acc;
      }
    }
  }

  Image out(mx.out_size, my.out_size, ch);
  const size_t row_len = static_cast<size_t>(mx.out_size) * ch;
  for (int y = 0; y < my.out_size; ++y) {
    auto dst = out.row(y);
    const int f = ty.first[y];
    for (int k = 0; k < ty.count[y]; ++k) {
      const float w = ty.weight[f + k];
      const auto srow = horiz.row(ty.index[f + k]);
      for (size_t i = 0; i < row_len; ++i) dst[i] += w * srow[i];
    }
  }
  if (clamp_output) clamp01(out);
  return out;
}

inline int scaled_size(int n, double factor) {
  return static_cast<int>(std::lround(n * factor));
}

// Bicubic resampling by `factor`; output dims round(dims * factor), values
// clamped to [0,1]. Coordinates map through the factor itself, not the
// rounded size ratio, so tiles of a larger image resample consistently.
inline Image resample_bicubic(const Image& img, double factor) {
  require(factor > 0.0 && std::isfinite(factor), Errc::InvalidArgument,
          "resample factor must be positive");
  const int w = scaled_size(img.width, factor);
  const int h = scaled_size(img.height, factor);
  require(w >= 1 && h >= 1, Errc::OutputTooSmall, "resample output would be empty");
  return resample_axes(img, axis_for_factor(w, factor), axis_for_factor(h, factor));
}

// Same mapping as resample_bicubic but with explicit output dims.
inline Image resample_bicubic_to(const Image& img, double factor, int width, int height) {
  require(factor > 0.0, Errc::InvalidArgument, "resample factor must be positive");
  return resample_axes(img, axis_for_factor(width, factor), axis_for_factor(height, factor));
}

// Resize to exact dims; the mapping uses the per-axis size ratio.
inline Image resize_bicubic(const Image& img, int width, int height) {
  require(width >= 1 && height >= 1, Errc::OutputTooSmall, "resize output would be empty");
  if (width == img.width && height == img.height) return img;
  const double fx = static_cast<double>(width) / img.width;
  const double fy = static_cast<double>(height) / img.height;
  return resample_axes(img, axis_for_factor(width, fx), axis_for_factor(height, fy));
}

}  // namespace uz
