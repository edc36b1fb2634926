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

// Enhancer contract and the built-in implementations: bicubic, exemplar
// detail transfer, and an iterative proxy that moves toward a target.

#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultrazoom/dataset.hpp"
#include "ultrazoom/error.hpp"
#include "ultrazoom/image.hpp"
#include "ultrazoom/resample.hpp"

namespace uz {

struct EnhanceRequest {
  Image lr;             // RGB patch at the full image's pixel scale
  double zoom = 2.0;    // Z = 1/s
  int step_index = 0;
  int step_count = 1;
  int origin_x = 0;     // window origin on the output canvas
  int origin_y = 0;

  void validate() const {
    require(!lr.empty() && lr.channels == 3, Errc::InvalidArgument, "lr patch must be RGB");
    require(zoom > 1.0 && std::isfinite(zoom), Errc::InvalidArgument, "zoom must exceed 1");
    require(step_count >= 1 && step_index >= 0 && step_index < step_count,
            Errc::InvalidArgument, "step index out of range");
  }
  int out_width() const { return scaled_size(lr.width, zoom); }
  int out_height() const { return scaled_size(lr.height, zoom); }
};

enum class EnhanceMode { OneShot, Iterative };

struct EnhancerDescriptor {
  std::string name;
  EnhanceMode mode = EnhanceMode::OneShot;
  int max_input = 4096;  // largest lr side accepted
  bool deterministic = true;
};

inline void to_json(nlohmann::json& j, const EnhancerDescriptor& d) {
  j = {{"name", d.name},
       {"mode", d.mode == EnhanceMode::Iterative ? "iterative" : "one-shot"},
       {"max_input", d.max_input},
       {"deterministic", d.deterministic}};
}
inline void from_json(const nlohmann::json& j, EnhancerDescriptor& d) {
  d.name = j.at("name").get<std::string>();
  d.mode = j.value("mode", std::string("one-shot")) == "iterative" ? EnhanceMode::Iterative
                                                                   : EnhanceMode::OneShot;
  d.max_input = j.value("max_input", 4096);
  d.deterministic = j.value("deterministic", true);
}

class Enhancer {
 public:
  virtual ~Enhancer() = default;
  virtual EnhancerDescriptor descriptor() const = 0;
  // One-shot: HR patch of round(dims * zoom).
  virtual Image enhance(const EnhanceRequest& req) = 0;
  // Iterative: next estimate from the current one. One-shot enhancers ignore
  // the estimate.
  virtual Image step(const EnhanceRequest& req, const Image& current) {
    (void)current;
    return enhance(req);
  }

 protected:
  void check(const EnhanceRequest& req) const {
    req.validate();
    if (std::max(req.lr.width, req.lr.height) > descriptor().max_input)
      throw Error(Errc::InputTooLarge, "lr patch exceeds the enhancer's max input");
  }
};

class BicubicEnhancer : public Enhancer {
 public:
  EnhancerDescriptor descriptor() const override { return {"bicubic", EnhanceMode::OneShot, 1 << 16, true}; }
  Image enhance(const EnhanceRequest& req) override {
    check(req);
    return resample_bicubic(req.lr, req.zoom);
  }
};

// Exemplar bank ---------------------------------------------------------------

struct Exemplar {
  std::vector<float> descriptor;  // normalized luma of the lr tile; empty when flat
  Image detail;                   // HR minus upsampled LR, at the close-up scale
};

struct ExemplarBank {
  int tile = 16;
  std::vector<Exemplar> entries;
  size_t size() const { return entries.size(); }
};

namespace enhance_detail {

constexpr double kFlatStd = 1e-3;

// Zero-mean, unit-variance luma; empty when the tile is flat.
inline std::vector<float> describe(const Image& lr, int x0, int y0, int t) {
  std::vector<float> d(static_cast<size_t>(t) * t);
  double mean = 0.0;
  for (int y = 0; y < t; ++y)
    for (int x = 0; x < t; ++x) {
      const float* p = lr.data.data() + (static_cast<size_t>(y0 + y) * lr.width + x0 + x) * 3;
      const float l = kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2];
      d[static_cast<size_t>(y) * t + x] = l;
      mean += l;
    }
  mean /= d.size();
  double var = 0.0;
  for (float v : d) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / d.size());
  if (sd < kFlatStd) return {};
  for (float& v : d) v = static_cast<float>((v - mean) / sd);
  return d;
}

inline std::vector<int> tile_starts(int n, int t, int stride, bool cover_tail) {
  std::vector<int> out;
  if (n < t) return out;
  for (int p = 0; p + t <= n; p += stride) out.push_back(p);
  if (cover_tail && out.back() + t < n) out.push_back(n - t);
  return out;
}

// Raised-cosine ramp over `margin` samples at both ends, 1 in between.
inline float ramp(int i, int n, double margin) {
  if (margin <= 0.0) return 1.0f;
  const double e = std::min(i + 0.5, n - i - 0.5) / margin;
  if (e >= 1.0) return 1.0f;
  return static_cast<float>(0.5 - 0.5 * std::cos(M_PI * e));
}

}  // namespace enhance_detail

// Tiles every lr patch at `stride` (no clamped tail). The detail of a tile is
// the hr patch minus the lr patch upsampled onto the hr grid with the exact
// sampling phase of the pair, cut to the tile's footprint.
inline ExemplarBank build_exemplar_bank(const DatasetManifest& m, int tile = 16, int stride = 8,
                                        int threads = 0) {
  require(tile >= 8, Errc::InvalidArgument, "exemplar tile must be at least 8");
  require(stride >= 1, Errc::InvalidArgument, "exemplar stride must be positive");
  if (m.entries.empty()) throw Error(Errc::EmptyManifest, "manifest has no pairs");
  std::vector<std::vector<Exemplar>> per(m.entries.size());
  parallel_for(m.entries.size(), resolve_threads(threads), [&](size_t k) {
    const ManifestEntry& e = m.entries[k];
    const double s = m.scales.at(e.closeup);
    const Image hr = m.load_hr(k);
    const Image lr = m.load_lr(k);
    // hr pixel X sits at degraded coordinate (e.x + X + 0.5) s - 0.5.
    const AxisMap ux{hr.width, s, (e.x + 0.5) * s - 0.5 - e.lr_x};
    const AxisMap uy{hr.height, s, (e.y + 0.5) * s - 0.5 - e.lr_y};
    Image detail = resample_axes(lr, ux, uy, false);
    for (size_t i = 0; i < detail.data.size(); ++i) detail.data[i] = hr.data[i] - detail.data[i];
    const int th = std::max(1, static_cast<int>(std::lround(tile / s)));
    const double step = tile / (s * th);
    for (int ty : enhance_detail::tile_starts(lr.height, tile, stride, false))
      for (int tx : enhance_detail::tile_starts(lr.width, tile, stride, false)) {
        Exemplar ex;
        ex.descriptor = enhance_detail::describe(lr, tx, ty, tile);
        // Tile edges [lr_x + tx, +tile) in degraded units -> hr-local pixels.
        const double hx = (e.lr_x + tx) / s - e.x, hy = (e.lr_y + ty) / s - e.y;
        ex.detail = resample_axes(detail, AxisMap{th, step, hx + 0.5 * step - 0.5},
                                  AxisMap{th, step, hy + 0.5 * step - 0.5}, false);
        per[k].push_back(std::move(ex));
      }
  });
  ExemplarBank bank;
  bank.tile = tile;
  for (auto& v : per)
    for (auto& ex : v) bank.entries.push_back(std::move(ex));
  return bank;
}

struct ExemplarParams {
  int stride = 8;            // query tiling stride, lr pixels
  int blend_overlap = 4;     // ramp width, lr pixels
  double lambda = 1.0;       // detail gain
};

// Bicubic upsample plus retrieved detail. Query tiles cover the patch (last
// tile clamped to the edge); a tile whose nearest exemplar is flat, or a flat
// query tile, adds no detail. Patches smaller than one tile get none.
class ExemplarEnhancer : public Enhancer {
 public:
  ExemplarEnhancer(std::shared_ptr<const ExemplarBank> bank, ExemplarParams p = {})
      : bank_(std::move(bank)), p_(p) {
    if (!bank_ || bank_->entries.empty()) throw Error(Errc::EmptyBank, "exemplar bank is empty");
  }
  EnhancerDescriptor descriptor() const override { return {"exemplar", EnhanceMode::OneShot, 1 << 16, true}; }

  // Index of the nearest exemplar by L2 distance, -1 for a flat query.
  int nearest(const std::vector<float>& q) const {
    if (q.empty()) return -1;
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < bank_->entries.size(); ++i) {
      const auto& d = bank_->entries[i].descriptor;
      if (d.empty()) continue;
      double acc = 0.0;
      for (size_t k = 0; k < q.size() && acc < best_d; ++k) {
        const double diff = q[k] - d[k];
        acc += diff * diff;
      }
      if (acc < best_d) {
        best_d = acc;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  Image enhance(const EnhanceRequest& req) override {
    check(req);
    Image out = resample_bicubic(req.lr, req.zoom);
    const int t = bank_->tile;
    if (p_.lambda == 0.0 || req.lr.width < t || req.lr.height < t) return out;
    const double z = req.zoom;
    Image acc(out.width, out.height, 3);
    std::vector<float> wsum(out.pixel_count(), 0.0f);
    const double margin = p_.blend_overlap * z;
    for (int ty : enhance_detail::tile_starts(req.lr.height, t, p_.stride, true))
      for (int tx : enhance_detail::tile_starts(req.lr.width, t, p_.stride, true)) {
        const int x0 = scaled_size(tx, z), x1 = std::min(out.width, scaled_size(tx + t, z));
        const int y0 = scaled_size(ty, z), y1 = std::min(out.height, scaled_size(ty + t, z));
        const int w = x1 - x0, h = y1 - y0;
        const int k = nearest(enhance_detail::describe(req.lr, tx, ty, t));
        Image d;
        if (k >= 0) d = resize_bicubic(bank_->entries[k].detail, w, h);
        for (int y = 0; y < h; ++y) {
          const float wy = enhance_detail::ramp(y, h, margin);
          for (int x = 0; x < w; ++x) {
            const float wt = wy * enhance_detail::ramp(x, w, margin);
            const size_t o = static_cast<size_t>(y0 + y) * out.width + (x0 + x);
            wsum[o] += wt;
            if (k < 0) continue;
            for (int c = 0; c < 3; ++c) acc.data[o * 3 + c] += wt * d.at(x, y, c);
          }
        }
      }
    const float lambda = static_cast<float>(p_.lambda);
    for (size_t o = 0; o < wsum.size(); ++o) {
      if (wsum[o] <= 0.0f) continue;
      for (int c = 0; c < 3; ++c) out.data[o * 3 + c] += lambda * acc.data[o * 3 + c] / wsum[o];
    }
    clamp01(out);
    return out;
  }

 private:
  std::shared_ptr<const ExemplarBank> bank_;
  ExemplarParams p_;
};

// x_{k+1} = x_k + (target - x_k) / (K - k), target from the wrapped one-shot
// enhancer. After the last step an isolated window holds the target.
class IterativeProxy : public Enhancer {
 public:
  explicit IterativeProxy(std::shared_ptr<Enhancer> target) : target_(std::move(target)) {}
  EnhancerDescriptor descriptor() const override {
    auto d = target_->descriptor();
    d.name = "iterative-" + d.name;
    d.mode = EnhanceMode::Iterative;
    return d;
  }
  Image enhance(const EnhanceRequest& req) override { return target_->enhance(req); }
  Image step(const EnhanceRequest& req, const Image& current) override {
    check(req);
    Image target = target_->enhance(req);
    if (!current.same_shape(target))
      throw Error(Errc::DimensionMismatch, "current estimate does not match the output size");
    const float inv = 1.0f / static_cast<float>(req.step_count - req.step_index);
    for (size_t i = 0; i < target.data.size(); ++i)
      target.data[i] = current.data[i] + (target.data[i] - current.data[i]) * inv;
    return target;
  }

 private:
  std::shared_ptr<Enhancer> target_;
};

}  // namespace uz
