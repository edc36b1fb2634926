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

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultrazoom/error.hpp"
#include "ultrazoom/rng.hpp"

namespace uz {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 p, Vec2 q) { return {p.x + q.x, p.y + q.y}; }
inline Vec2 operator-(Vec2 p, Vec2 q) { return {p.x - q.x, p.y - q.y}; }
inline Vec2 operator*(double s, Vec2 p) { return {s * p.x, s * p.y}; }
inline double norm(Vec2 p) { return std::hypot(p.x, p.y); }

// p' = [[a, -b], [b, a]] p + (tx, ty). Rotation by atan2(b, a), uniform
// scale sqrt(a^2 + b^2).
struct SimilarityTransform2D {
  double a = 1.0;
  double b = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  static SimilarityTransform2D identity() { return {}; }
  static SimilarityTransform2D from_params(double scale, double angle_rad, double tx = 0.0,
                                           double ty = 0.0) {
    return {scale * std::cos(angle_rad), scale * std::sin(angle_rad), tx, ty};
  }

  Vec2 apply(Vec2 p) const { return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty}; }
  Vec2 operator()(Vec2 p) const { return apply(p); }

  double angle() const { return std::atan2(b, a); }
  bool degenerate() const { return a == 0.0 && b == 0.0; }
};

// Maximum absolute coefficient difference.
inline double coeff_error(const SimilarityTransform2D& s, const SimilarityTransform2D& t) {
  return std::max({std::abs(s.a - t.a), std::abs(s.b - t.b), std::abs(s.tx - t.tx),
                   std::abs(s.ty - t.ty)});
}

struct Correspondence {
  Vec2 src;
  Vec2 dst;
};
using PointCorrespondences = std::vector<Correspondence>;

// result(p) = second(first(p)).
inline SimilarityTransform2D compose(const SimilarityTransform2D& second,
                                     const SimilarityTransform2D& first) {
  return {second.a * first.a - second.b * first.b,
          second.a * first.b + second.b * first.a,
          second.a * first.tx - second.b * first.ty + second.tx,
          second.b * first.tx + second.a * first.ty + second.ty};
}

// Transforms ordered earliest first; returns T_last o ... o T_first.
inline SimilarityTransform2D chain(std::span<const SimilarityTransform2D> transforms) {
  if (transforms.empty()) throw Error(Errc::EmptyChain, "cannot chain an empty list");
  SimilarityTransform2D acc = transforms.front();
  for (size_t i = 1; i < transforms.size(); ++i) acc = compose(transforms[i], acc);
  return acc;
}

// sqrt(det) of the linear part.
inline double extract_scale(const SimilarityTransform2D& t) {
  if (t.degenerate()) throw Error(Errc::DegenerateInput, "zero linear part");
  return std::hypot(t.a, t.b);
}

inline SimilarityTransform2D invert(const SimilarityTransform2D& t) {
  const double d = t.a * t.a + t.b * t.b;
  if (d == 0.0) throw Error(Errc::DegenerateInput, "cannot invert a degenerate transform");
  const double ia = t.a / d;
  const double ib = -t.b / d;
  return {ia, ib, -(ia * t.tx - ib * t.ty), -(ib * t.tx + ia * t.ty)};
}

// Closed-form least squares from centroids and cross-covariance terms.
inline SimilarityTransform2D similarity_from_pairs(std::span<const Correspondence> corrs) {
  if (corrs.size() < 2)
    throw Error(Errc::DegenerateInput, "need at least 2 correspondences");
  const double n = static_cast<double>(corrs.size());
  Vec2 ms, md;
  for (const auto& c : corrs) {
    ms = ms + c.src;
    md = md + c.dst;
  }
  ms = (1.0 / n) * ms;
  md = (1.0 / n) * md;
  double ss = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& c : corrs) {
    const Vec2 s = c.src - ms;
    const Vec2 d = c.dst - md;
    ss += s.x * s.x + s.y * s.y;
    sa += s.x * d.x + s.y * d.y;
    sb += s.x * d.y - s.y * d.x;
  }
  if (!(ss > 1e-18 * (1.0 + ms.x * ms.x + ms.y * ms.y)))
    throw Error(Errc::DegenerateInput, "source points coincide");
  const double a = sa / ss;
  const double b = sb / ss;
  return {a, b, md.x - (a * ms.x - b * ms.y), md.y - (b * ms.x + a * ms.y)};
}

struct RansacParams {
  double inlier_threshold = 2.0;
  int iterations = 2000;
  uint64_t seed = 0;
};

struct RansacResult {
  SimilarityTransform2D transform;
  std::vector<bool> inliers;
  size_t inlier_count = 0;
};

// Minimal 2-point hypotheses, scored by inlier count with ties broken by
// lower mean inlier residual; one least-squares refit on the best consensus
// set. The returned mask is recomputed under the refit transform.
inline RansacResult ransac_similarity(std::span<const Correspondence> corrs,
                                      const RansacParams& p = {}) {
  const size_t n = corrs.size();
  if (n < 2) throw Error(Errc::DegenerateInput, "need at least 2 correspondences");
  require(p.inlier_threshold > 0.0, Errc::InvalidArgument, "threshold must be > 0");
  require(p.iterations >= 1, Errc::InvalidArgument, "iterations must be >= 1");
  const double thr2 = p.inlier_threshold * p.inlier_threshold;

  Rng rng(p.seed);
  size_t best_count = 0;
  double best_mean = std::numeric_limits<double>::infinity();
  SimilarityTransform2D best;
  for (int it = 0; it < p.iterations; ++it) {
    const size_t i = rng.index(n);
    size_t j = rng.index(n - 1);
    if (j >= i) ++j;
    const Correspondence pair[2] = {corrs[i], corrs[j]};
    if (pair[0].src.x == pair[1].src.x && pair[0].src.y == pair[1].src.y) continue;
    const SimilarityTransform2D t = similarity_from_pairs(pair);
    if (t.degenerate()) continue;
    size_t count = 0;
    double sum = 0.0;
    for (const auto& c : corrs) {
      const Vec2 r = t.apply(c.src) - c.dst;
      const double e2 = r.x * r.x + r.y * r.y;
      if (e2 < thr2) {
        ++count;
        sum += std::sqrt(e2);
      }
    }
    if (count == 0) continue;
    const double mean = sum / count;
    if (count > best_count || (count == best_count && mean < best_mean)) {
      best_count = count;
      best_mean = mean;
      best = t;
    }
  }
  if (best_count < 2)
    throw Error(Errc::NoConsensus, "best model has fewer than 2 inliers");

  std::vector<Correspondence> consensus;
  consensus.reserve(best_count);
  for (const auto& c : corrs) {
    const Vec2 r = best.apply(c.src) - c.dst;
    if (r.x * r.x + r.y * r.y < thr2) consensus.push_back(c);
  }
  RansacResult out;
  out.transform = similarity_from_pairs(consensus);
  out.inliers.resize(n);
  for (size_t k = 0; k < n; ++k) {
    const Vec2 r = out.transform.apply(corrs[k].src) - corrs[k].dst;
    out.inliers[k] = r.x * r.x + r.y * r.y < thr2;
    out.inlier_count += out.inliers[k];
  }
  return out;
}

struct Footprint {
  std::array<Vec2, 4> quad;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // tight bounding box
};

// Image of the rectangle (0,0)-(w,h) under t.
inline Footprint map_footprint(const SimilarityTransform2D& t, double width, double height) {
  require(width > 0 && height > 0, Errc::InvalidArgument, "footprint size must be > 0");
  Footprint f;
  f.quad = {t.apply({0, 0}), t.apply({width, 0}), t.apply({width, height}),
            t.apply({0, height})};
  f.x0 = f.x1 = f.quad[0].x;
  f.y0 = f.y1 = f.quad[0].y;
  for (const auto& q : f.quad) {
    f.x0 = std::min(f.x0, q.x);
    f.x1 = std::max(f.x1, q.x);
    f.y0 = std::min(f.y0, q.y);
    f.y1 = std::max(f.y1, q.y);
  }
  return f;
}

inline void to_json(nlohmann::json& j, const SimilarityTransform2D& t) {
  j = nlohmann::json{{"a", t.a}, {"b", t.b}, {"tx", t.tx}, {"ty", t.ty}};
}
inline void from_json(const nlohmann::json& j, SimilarityTransform2D& t) {
  t.a = j.at("a").get<double>();
  t.b = j.at("b").get<double>();
  t.tx = j.at("tx").get<double>();
  t.ty = j.at("ty").get<double>();
}

}  // namespace uz
