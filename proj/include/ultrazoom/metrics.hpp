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

// Output metrics: LR consistency, fixed-position patch sampling, a handcrafted
// patch embedding, and Frechet / kernel distances between feature sets.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultrazoom/error.hpp"
#include "ultrazoom/image.hpp"
#include "ultrazoom/parallel.hpp"
#include "ultrazoom/resample.hpp"
#include "ultrazoom/rng.hpp"

namespace uz {

// Mean abs difference between F and G bicubically reduced back to F's grid.
inline double lr_mae(const Image& f, const Image& g, double zoom) {
  require(zoom > 0.0 && std::isfinite(zoom), Errc::InvalidArgument, "zoom must be positive");
  if (g.width != scaled_size(f.width, zoom) || g.height != scaled_size(f.height, zoom) ||
      g.channels != f.channels)
    throw Error(Errc::DimensionMismatch, "output dims must be round(input dims * zoom)");
  const Image down = resample_bicubic_to(g, 1.0 / zoom, f.width, f.height);
  return mean_abs_diff(f, down);
}

struct PatchPosition {
  int x = 0, y = 0;
  bool operator==(const PatchPosition&) const = default;
};

struct PatchSampleSpec {
  int patch_size = 299;
  int count = 3000;
  uint64_t seed = 0;
  std::vector<PatchPosition> positions;  // explicit positions override sampling
};

inline void to_json(nlohmann::json& j, const PatchPosition& p) { j = {p.x, p.y}; }
inline void from_json(const nlohmann::json& j, PatchPosition& p) {
  p.x = j.at(0).get<int>();
  p.y = j.at(1).get<int>();
}

inline std::vector<PatchPosition> sample_patch_positions(int width, int height,
                                                         const PatchSampleSpec& spec) {
  require(spec.patch_size >= 1 && spec.count >= 0, Errc::InvalidArgument,
          "patch_size must be positive and count non-negative");
  if (spec.patch_size > width || spec.patch_size > height)
    throw Error(Errc::PatchTooLarge, "patch does not fit in a " + std::to_string(width) + "x" +
                                         std::to_string(height) + " image");
  if (!spec.positions.empty()) {
    for (const auto& p : spec.positions)
      if (p.x < 0 || p.y < 0 || p.x + spec.patch_size > width || p.y + spec.patch_size > height)
        throw Error(Errc::PatchTooLarge, "explicit patch position out of bounds");
    return spec.positions;
  }
  Rng rng(spec.seed);
  const uint64_t nx = static_cast<uint64_t>(width - spec.patch_size) + 1;
  const uint64_t ny = static_cast<uint64_t>(height - spec.patch_size) + 1;
  std::vector<PatchPosition> out(static_cast<size_t>(spec.count));
  for (auto& p : out) {
    p.x = static_cast<int>(rng.index(nx));
    p.y = static_cast<int>(rng.index(ny));
  }
  return out;
}

inline constexpr int kFeatureDim = 38;
inline constexpr int kMinFeaturePatch = 32;

namespace metrics_detail {

inline void orientation_histogram(const Image& luma, double* bins) {
  double total = 0.0;
  double h[8] = {};
  for (int y = 1; y < luma.height - 1; ++y)
    for (int x = 1; x < luma.width - 1; ++x) {
      const double gx = 0.5 * (double(luma.at(x + 1, y)) - luma.at(x - 1, y));
      const double gy = 0.5 * (double(luma.at(x, y + 1)) - luma.at(x, y - 1));
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double a = std::atan2(gy, gx);
      if (a < 0) a += 2 * std::numbers::pi;
      const int b = std::min(7, static_cast<int>(a / (2 * std::numbers::pi) * 8));
      h[b] += mag;
      total += mag;
    }
  for (int i = 0; i < 8; ++i) bins[i] = total > 0 ? h[i] / total : 0.0;
}

inline Image half(const Image& luma) {
  Image out(luma.width / 2, luma.height / 2, 1);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      out.at(x, y) = 0.25f * (luma.at(2 * x, 2 * y) + luma.at(2 * x + 1, 2 * y) +
                              luma.at(2 * x, 2 * y + 1) + luma.at(2 * x + 1, 2 * y + 1));
  return out;
}

}  // namespace metrics_detail

// Layout: per-channel mean, std, skewness (9); magnitude-weighted 8-bin
// gradient orientation histograms of luma at full and half scale (16); 12-bin
// luma histogram (12); Laplacian variance (1). Histograms are fractions.
inline std::vector<double> patch_features(const Image& patch) {
  if (patch.width < kMinFeaturePatch || patch.height < kMinFeaturePatch)
    throw Error(Errc::TooSmall, "feature patches must be at least 32x32");
  const Image rgb = gray_to_rgb(patch);
  std::vector<double> f(kFeatureDim, 0.0);
  const size_t n = rgb.pixel_count();
  for (int c = 0; c < 3; ++c) {
    double m = 0.0;
    for (size_t i = 0; i < n; ++i) m += rgb.data[i * 3 + c];
    m /= static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double d = rgb.data[i * 3 + c] - m;
      m2 += d * d;
      m3 += d * d * d;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    const double sd = std::sqrt(m2);
    f[c * 3] = m;
    f[c * 3 + 1] = sd;
    f[c * 3 + 2] = sd > 1e-6 ? m3 / (sd * sd * sd) : 0.0;
  }
  const Image luma = to_luma(rgb);
  metrics_detail::orientation_histogram(luma, &f[9]);
  metrics_detail::orientation_histogram(metrics_detail::half(luma), &f[17]);
  for (float v : luma.data) {
    const int b = std::clamp(static_cast<int>(v * 12.0f), 0, 11);
    f[25 + b] += 1.0;
  }
  for (int b = 0; b < 12; ++b) f[25 + b] /= static_cast<double>(n);
  f[37] = laplacian_variance(rgb);
  return f;
}

inline std::vector<std::vector<double>> extract_features(const Image& img,
                                                         const std::vector<PatchPosition>& pos,
                                                         int patch_size, int threads = 0) {
  std::vector<std::vector<double>> out(pos.size());
  parallel_for(pos.size(), resolve_threads(threads), [&](size_t i) {
    out[i] = patch_features(crop(img, {pos[i].x, pos[i].y, pos[i].x + patch_size,
                                       pos[i].y + patch_size}));
  });
  return out;
}

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Two-pass mean and unbiased covariance.
inline GaussianStats gaussian_stats(const std::vector<std::vector<double>>& feats) {
  if (feats.size() < 2) throw Error(Errc::TooFewSamples, "need at least two feature vectors");
  const auto d = static_cast<Eigen::Index>(feats[0].size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(feats.size()), d);
  for (size_t i = 0; i < feats.size(); ++i) {
    if (static_cast<Eigen::Index>(feats[i].size()) != d)
      throw Error(Errc::DimensionMismatch, "feature vectors differ in length");
    x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(feats[i].data(), d);
  }
  GaussianStats s;
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - s.mean.transpose();
  s.covariance = (c.transpose() * c) / static_cast<double>(feats.size() - 1);
  return s;
}

namespace metrics_detail {

// Eigenvalues of a symmetric matrix; tiny negatives are clamped, larger ones rejected.
inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> psd_eigen(const Eigen::MatrixXd& m,
                                                                const char* what) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw Error(Errc::NotPSD, std::string(what) + ": eigensolver failed");
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-8 * scale)
    throw Error(Errc::NotPSD, std::string(what) + " is not positive semidefinite");
  return es;
}

}  // namespace metrics_detail

// d^2 = |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)). The trace of the
// product root is taken from sqrt(Sa) Sb sqrt(Sa), which is symmetric and
// shares its eigenvalues with Sa Sb.
inline double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const auto d = a.mean.size();
  if (b.mean.size() != d || a.covariance.rows() != d || a.covariance.cols() != d ||
      b.covariance.rows() != d || b.covariance.cols() != d)
    throw Error(Errc::DimensionMismatch, "Gaussian stats differ in dimension");
  const auto ea = metrics_detail::psd_eigen(a.covariance, "covariance A");
  metrics_detail::psd_eigen(b.covariance, "covariance B");
  const Eigen::VectorXd root = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sa = ea.eigenvectors() * root.asDiagonal() * ea.eigenvectors().transpose();
  const Eigen::MatrixXd m = sa * (0.5 * (b.covariance + b.covariance.transpose())) * sa;
  const auto em = metrics_detail::psd_eigen(m, "covariance product");
  const double tr_root = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double v = (a.mean - b.mean).squaredNorm() + a.covariance.trace() +
                   b.covariance.trace() - 2.0 * tr_root;
  return std::max(0.0, v);
}

// Unbiased MMD^2 with k(x, y) = (x.y / d + 1)^3.
inline double kernel_distance(const std::vector<std::vector<double>>& a,
                              const std::vector<std::vector<double>>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw Error(Errc::TooFewSamples, "kernel distance needs at least two samples per set");
  const size_t d = a[0].size();
  for (const auto* set : {&a, &b})
    for (const auto& v : *set)
      if (v.size() != d) throw Error(Errc::DimensionMismatch, "feature vectors differ in length");
  auto k = [d](const std::vector<double>& x, const std::vector<double>& y) {
    double dot = 0.0;
    for (size_t i = 0; i < d; ++i) dot += x[i] * y[i];
    const double t = dot / static_cast<double>(d) + 1.0;
    return t * t * t;
  };
  auto within = [&](const std::vector<std::vector<double>>& s) {
    double acc = 0.0;
    for (size_t i = 0; i < s.size(); ++i)
      for (size_t j = i + 1; j < s.size(); ++j) acc += k(s[i], s[j]);
    const double m = static_cast<double>(s.size());
    return 2.0 * acc / (m * (m - 1.0));
  };
  double cross = 0.0;
  for (const auto& x : a)
    for (const auto& y : b) cross += k(x, y);
  cross /= static_cast<double>(a.size()) * static_cast<double>(b.size());
  return within(a) + within(b) - 2.0 * cross;
}

struct DistributionReport {
  double frechet = 0.0;
  double kid = 0.0;
  size_t real_count = 0, generated_count = 0;
};

inline DistributionReport compare_features(const std::vector<std::vector<double>>& real,
                                           const std::vector<std::vector<double>>& generated) {
  DistributionReport r;
  r.frechet = frechet_distance(gaussian_stats(real), gaussian_stats(generated));
  r.kid = kernel_distance(real, generated);
  r.real_count = real.size();
  r.generated_count = generated.size();
  return r;
}

inline nlohmann::json patch_spec_json(const PatchSampleSpec& s) {
  return {{"patch_size", s.patch_size}, {"count", s.count}, {"seed", s.seed},
          {"feature_dim", kFeatureDim}};
}

}  // namespace uz
