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

// Reference implementations for metric tests, written without the library's
// helpers: plain nested vectors, Gauss-Jordan inversion, Denman-Beavers roots.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "ultrazoom/image.hpp"

namespace uz::test {

using Mat = std::vector<std::vector<double>>;

inline Mat mat_mul(const Mat& a, const Mat& b) {
  const size_t n = a.size();
  Mat c(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t k = 0; k < n; ++k)
      for (size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat mat_inv(Mat a) {
  const size_t n = a.size();
  Mat inv(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(inv[col], inv[piv]);
    const double p = a[col][col];
    for (size_t j = 0; j < n; ++j) {
      a[col][j] /= p;
      inv[col][j] /= p;
    }
    for (size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

// Principal square root of a matrix with positive real spectrum.
inline Mat denman_beavers_sqrt(const Mat& a) {
  const size_t n = a.size();
  Mat y = a, z(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) z[i][i] = 1.0;
  for (int it = 0; it < 100; ++it) {
    const Mat yi = mat_inv(y), zi = mat_inv(z);
    double change = 0.0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) {
        const double ny = 0.5 * (y[i][j] + zi[i][j]);
        const double nz = 0.5 * (z[i][j] + yi[i][j]);
        change = std::max(change, std::abs(ny - y[i][j]));
        y[i][j] = ny;
        z[i][j] = nz;
      }
    if (change < 1e-14) break;
  }
  return y;
}

inline double oracle_frechet(const Eigen::VectorXd& ma, const Eigen::MatrixXd& ca,
                             const Eigen::VectorXd& mb, const Eigen::MatrixXd& cb) {
  const size_t n = static_cast<size_t>(ma.size());
  Mat a(n, std::vector<double>(n)), b(n, std::vector<double>(n));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      a[i][j] = ca(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      b[i][j] = cb(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  const Mat root = denman_beavers_sqrt(mat_mul(a, b));
  double d = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dm = ma(static_cast<Eigen::Index>(i)) - mb(static_cast<Eigen::Index>(i));
    d += dm * dm + a[i][i] + b[i][i] - 2.0 * root[i][i];
  }
  return d;
}

// Patch descriptor recomputed term by term from its definition.
inline std::vector<double> oracle_features(const Image& p) {
  const int w = p.width, h = p.height;
  std::vector<double> f;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) sum += p.at(x, y, c);
    const double mean = sum / (w * h);
    double v = 0.0, s = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double d = p.at(x, y, c) - mean;
        v += std::pow(d, 2);
        s += std::pow(d, 3);
      }
    v /= w * h;
    s /= w * h;
    f.push_back(mean);
    f.push_back(std::sqrt(v));
    f.push_back(v > 1e-12 ? s / std::pow(v, 1.5) : 0.0);
  }
  std::vector<std::vector<float>> l(h, std::vector<float>(w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      l[y][x] = 0.2126f * p.at(x, y, 0) + 0.7152f * p.at(x, y, 1) + 0.0722f * p.at(x, y, 2);
  auto hist = [&f](const std::vector<std::vector<float>>& g) {
    std::vector<double> bins(8, 0.0);
    const int gh = static_cast<int>(g.size()), gw = static_cast<int>(g[0].size());
    for (int y = 1; y + 1 < gh; ++y)
      for (int x = 1; x + 1 < gw; ++x) {
        const double dx = (double(g[y][x + 1]) - g[y][x - 1]) / 2;
        const double dy = (double(g[y + 1][x]) - g[y - 1][x]) / 2;
        const double m = std::sqrt(dx * dx + dy * dy);
        if (m == 0.0) continue;
        const double deg = std::fmod(std::atan2(dy, dx) * 180.0 / M_PI + 360.0, 360.0);
        bins[std::min(7, static_cast<int>(deg / 45.0))] += m;
      }
    double t = 0.0;
    for (double b : bins) t += b;
    for (double b : bins) f.push_back(t > 0 ? b / t : 0.0);
  };
  hist(l);
  std::vector<std::vector<float>> half(h / 2, std::vector<float>(w / 2));
  for (int y = 0; y < h / 2; ++y)
    for (int x = 0; x < w / 2; ++x)
      half[y][x] = 0.25f * (l[2 * y][2 * x] + l[2 * y][2 * x + 1] + l[2 * y + 1][2 * x] +
                            l[2 * y + 1][2 * x + 1]);
  hist(half);
  std::vector<double> lh(12, 0.0);
  for (const auto& row : l)
    for (float v : row) lh[std::min(11, std::max(0, static_cast<int>(v * 12.0f)))] += 1.0;
  for (double b : lh) f.push_back(b / (w * h));
  std::vector<double> lap;
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x)
      lap.push_back(double(l[y][x - 1]) + l[y][x + 1] + l[y - 1][x] + l[y + 1][x] - 4.0 * l[y][x]);
  double lm = 0.0;
  for (double v : lap) lm += v;
  lm /= static_cast<double>(lap.size());
  double lv = 0.0;
  for (double v : lap) lv += (v - lm) * (v - lm);
  f.push_back(lv / static_cast<double>(lap.size()));
  return f;
}

}  // namespace uz::test
