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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ultrazoom/error.hpp"

namespace uz {

// Interleaved float image, values nominally in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }

  float& at(int x, int y, int c = 0) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  // Edge-clamped read.
  float clamped(int x, int y, int c = 0) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return at(x, y, c);
  }

  std::span<float> row(int y) {
    return {data.data() + static_cast<size_t>(y) * width * channels,
            static_cast<size_t>(width) * channels};
  }
  std::span<const float> row(int y) const {
    return {data.data() + static_cast<size_t>(y) * width * channels,
            static_cast<size_t>(width) * channels};
  }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool operator==(const Rect&) const = default;
};

inline Rect intersect(const Rect& a, const Rect& b) {
  return {std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1),
          std::min(a.y1, b.y1)};
}

// Rec. 709 luma weights.
inline constexpr float kLumaR = 0.2126f;
inline constexpr float kLumaG = 0.7152f;
inline constexpr float kLumaB = 0.0722f;

inline Image to_luma(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.width, img.height, 1);
  const size_t n = img.pixel_count();
  for (size_t i = 0; i < n; ++i) {
    const float* p = &img.data[i * img.channels];
    out.data[i] = kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2];
  }
  return out;
}

inline Image gray_to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out(img.width, img.height, 3);
  for (size_t i = 0; i < img.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = img.data[i];
  return out;
}

inline Image crop(const Image& img, const Rect& r) {
  require(r.x0 >= 0 && r.y0 >= 0 && r.x1 <= img.width && r.y1 <= img.height &&
              !r.empty(),
          Errc::InvalidArgument, "crop rectangle outside image");
  Image out(r.width(), r.height(), img.channels);
  const size_t row_len = static_cast<size_t>(r.width()) * img.channels;
  for (int y = 0; y < r.height(); ++y) {
    const float* src = &img.data[(static_cast<size_t>(r.y0 + y) * img.width + r.x0) *
                                 img.channels];
    std::copy(src, src + row_len, out.row(y).begin());
  }
  return out;
}

// Crop that replicates edge pixels for the part of `r` outside the image.
inline Image crop_clamped(const Image& img, const Rect& r) {
  Image out(r.width(), r.height(), img.channels);
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = img.clamped(r.x0 + x, r.y0 + y, c);
  return out;
}

inline void paste(Image& dst, const Image& src, int x0, int y0) {
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) dst.at(x0 + x, y0 + y, c) = src.at(x, y, c);
}

inline void clamp01(Image& img) {
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

inline uint8_t to_u8(float v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// Quantize to the 8-bit grid and back.
inline Image quantize8(const Image& img) {
  Image out = img;
  for (float& v : out.data) v = to_u8(v) / 255.0f;
  return out;
}

inline double mean_abs_diff(const Image& a, const Image& b) {
  require(a.same_shape(b), Errc::DimensionMismatch, "mean_abs_diff shape mismatch");
  if (a.data.empty()) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) acc += std::abs(double(a.data[i]) - b.data[i]);
  return acc / static_cast<double>(a.data.size());
}

inline double mean_value(const Image& img, int channel = -1) {
  double acc = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < img.pixel_count(); ++i)
    for (int c = 0; c < img.channels; ++c)
      if (channel < 0 || c == channel) {
        acc += img.data[i * img.channels + c];
        ++n;
      }
  return n ? acc / static_cast<double>(n) : 0.0;
}

// Variance of the 4-neighbour Laplacian of luma, interior pixels only.
inline double laplacian_variance(const Image& img) {
  const Image l = to_luma(img);
  if (l.width < 3 || l.height < 3) return 0.0;
  double s = 0.0, s2 = 0.0;
  size_t n = 0;
  for (int y = 1; y < l.height - 1; ++y)
    for (int x = 1; x < l.width - 1; ++x) {
      const double v = double(l.at(x - 1, y)) + l.at(x + 1, y) + l.at(x, y - 1) +
                       l.at(x, y + 1) - 4.0 * l.at(x, y);
      s += v;
      s2 += v * v;
      ++n;
    }
  const double m = s / n;
  return std::max(0.0, s2 / n - m * m);
}

}  // namespace uz
