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

// Synthetic captures with known ground truth: a band-limited procedural
// texture viewed through similarity cameras. A full view, close-ups, and
// handheld zoom videos joining them are all rendered from the same texture,
// so every transform between them is known exactly.

#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultrazoom/geometry.hpp"
#include "ultrazoom/image.hpp"
#include "ultrazoom/io.hpp"
#include "ultrazoom/parallel.hpp"

namespace uz {

namespace fixture_detail {

inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double lattice(int64_t ix, int64_t iy, uint64_t salt) {
  const uint64_t h = mix64(static_cast<uint64_t>(ix) * 0x8da6b343ULL ^
                           mix64(static_cast<uint64_t>(iy) * 0xd8163841ULL ^ salt));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

// Smooth value noise in [0,1].
inline double value_noise(double x, double y, uint64_t salt) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
  const double u = fade(x - fx), v = fade(y - fy);
  const double v00 = lattice(ix, iy, salt), v10 = lattice(ix + 1, iy, salt);
  const double v01 = lattice(ix, iy + 1, salt), v11 = lattice(ix + 1, iy + 1, salt);
  return (v00 + (v10 - v00) * u) * (1 - v) + (v01 + (v11 - v01) * u) * v;
}

}  // namespace fixture_detail

// Multi-octave texture in master coordinates. Octaves whose wavelength is
// below twice the sampling footprint are faded out, which prefilters the
// texture for any viewing scale without a stored master image.
class ProceduralTexture {
 public:
  explicit ProceduralTexture(uint64_t seed = 1, double roughness = 0.35)
      : seed_(seed) {
    for (int o = 0; o < kOctaves; ++o) {
      const double wl = std::ldexp(1.0, o + 1);
      wavelength_[o] = wl;
      amplitude_[o] = std::pow(wl, roughness);
      const double ang = 2.399963 * (o + 1) + 0.1 * static_cast<double>(seed % 17);
      cos_[o] = std::cos(ang);
      sin_[o] = std::sin(ang);
      total_amp_ += amplitude_[o];
    }
  }

  // RGB at master point (x, y) for a footprint of `footprint` master pixels.
  void sample(double x, double y, double footprint, float rgb[3]) const {
    using fixture_detail::value_noise;
    double v = 0.0;
    for (int o = 0; o < kOctaves; ++o) {
      const double ratio = wavelength_[o] / std::max(footprint, 1e-9);
      if (ratio <= 2.0) continue;
      const double w = ratio >= 4.0 ? 1.0 : fixture_detail::fade((ratio - 2.0) / 2.0);
      const double u = (cos_[o] * x - sin_[o] * y) / wavelength_[o] + 17.3 * o;
      const double t = (sin_[o] * x + cos_[o] * y) / wavelength_[o] - 5.1 * o;
      v += w * amplitude_[o] * (value_noise(u, t, seed_ * 131 + o) - 0.5);
    }
    const double lum = 0.5 + 2.2 * v / total_amp_;
    const double t1 = value_noise(x / 900.0, y / 900.0, seed_ * 977 + 1);
    const double t2 = value_noise(x / 700.0 + 3.0, y / 700.0, seed_ * 977 + 2);
    rgb[0] = static_cast<float>(std::clamp(lum * (0.85 + 0.3 * t1), 0.0, 1.0));
    rgb[1] = static_cast<float>(std::clamp(lum, 0.0, 1.0));
    rgb[2] = static_cast<float>(std::clamp(lum * (0.85 + 0.3 * t2), 0.0, 1.0));
  }

 private:
  static constexpr int kOctaves = 16;
  uint64_t seed_;
  double wavelength_[kOctaves]{};
  double amplitude_[kOctaves]{};
  double cos_[kOctaves]{};
  double sin_[kOctaves]{};
  double total_amp_ = 0.0;
};

// A camera looking at the texture: image pixel p maps to master
// center + zoom * R(angle) * (p - image_center).
struct View {
  double cx = 0, cy = 0;  // master coordinates of the image center
  double zoom = 1.0;      // master pixels per image pixel
  double angle = 0.0;     // radians
  int width = 256;
  int height = 256;

  SimilarityTransform2D image_to_master() const {
    const auto lin = SimilarityTransform2D::from_params(zoom, angle);
    const Vec2 ic{(width - 1) / 2.0, (height - 1) / 2.0};
    const Vec2 off = lin.apply(ic);
    return {lin.a, lin.b, cx - off.x, cy - off.y};
  }
};

// Maps pixels of view `from` to pixels of view `to`.
inline SimilarityTransform2D view_transform(const View& from, const View& to) {
  return compose(invert(to.image_to_master()), from.image_to_master());
}

inline Image render_view(const ProceduralTexture& tex, const View& v, int threads = 1) {
  Image out(v.width, v.height, 3);
  const auto m = v.image_to_master();
  parallel_for(static_cast<size_t>(v.height), threads, [&](size_t y) {
    for (int x = 0; x < v.width; ++x) {
      const Vec2 p = m.apply({double(x), double(y)});
      tex.sample(p.x, p.y, v.zoom, &out.at(x, static_cast<int>(y), 0));
    }
  });
  return out;
}

struct FixtureSpec {
  int width = 256;
  int height = 256;
  // Zoom (master px per pixel) of each close-up, in capture order. The full
  // view has zoom `full_zoom`; scale s_i = closeup_zoom[i] / full_zoom.
  std::vector<double> closeup_zoom = {1.0};
  double full_zoom = 8.0;
  double max_zoom_step = 1.06;  // per-frame zoom ratio bound
  double max_pan_step = 6.0;    // per-frame pan bound in image pixels
  double jitter = 2.0;          // handheld wobble amplitude, pixels
  double rotation_deg = 4.0;    // total rotation drift from close-up to full
  double closeup_gain = 1.0;    // close-up exposure/colour differences
  double closeup_offset = 0.0;
  uint64_t seed = 1;
};

struct Fixture {
  FixtureSpec spec;
  View full;
  std::vector<View> closeups;
  std::vector<std::vector<View>> videos;  // videos[i] joins close-up i to i+1 (or full)

  // T_{C_i -> F}.
  SimilarityTransform2D closeup_to_full(size_t i) const { return view_transform(closeups[i], full); }
  double closeup_scale(size_t i) const { return closeups[i].zoom / full.zoom; }
};

inline std::vector<View> interpolate_video(const View& a, const View& b, const FixtureSpec& s,
                                           uint64_t salt) {
  const double dz = std::abs(std::log(b.zoom / a.zoom));
  const double pan = std::hypot(b.cx - a.cx, b.cy - a.cy) / std::min(a.zoom, b.zoom);
  const int steps = std::max({1, static_cast<int>(std::ceil(dz / std::log(s.max_zoom_step) - 1e-9)),
                              static_cast<int>(std::ceil(pan / s.max_pan_step - 1e-9))});
  const double phase = fixture_detail::lattice(static_cast<int64_t>(salt), 7, s.seed) * 6.28;
  std::vector<View> out;
  for (int k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) / steps;
    View v = a;
    v.zoom = a.zoom * std::pow(b.zoom / a.zoom, t);
    v.angle = a.angle + (b.angle - a.angle) * t;
    // Wobble vanishes at both ends so endpoints equal the still captures.
    const double env = std::sin(std::numbers::pi * t);
    const double jx = s.jitter * env * std::sin(2 * std::numbers::pi * 1.3 * t + phase);
    const double jy = s.jitter * env * std::cos(2 * std::numbers::pi * 0.9 * t + phase);
    v.cx = a.cx + (b.cx - a.cx) * t + jx * v.zoom;
    v.cy = a.cy + (b.cy - a.cy) * t + jy * v.zoom;
    out.push_back(v);
  }
  return out;
}

inline Fixture make_fixture(const FixtureSpec& s) {
  Fixture f;
  f.spec = s;
  const double rot = s.rotation_deg * std::numbers::pi / 180.0;
  f.full = View{1000.0, -700.0, s.full_zoom, rot, s.width, s.height};
  const size_t n = s.closeup_zoom.size();
  for (size_t i = 0; i < n; ++i) {
    // Spread close-ups inside the middle of the full view.
    const double fx = n == 1 ? 0.0 : (static_cast<double>(i) / (n - 1) - 0.5) * 0.3;
    const double fy = n == 1 ? 0.0 : 0.1 * ((i % 2) ? 1.0 : -1.0);
    const Vec2 c = f.full.image_to_master().apply(
        {(s.width - 1) / 2.0 + fx * s.width, (s.height - 1) / 2.0 + fy * s.height});
    f.closeups.push_back(View{c.x, c.y, s.closeup_zoom[i], 0.0, s.width, s.height});
  }
  for (size_t i = 0; i < n; ++i) {
    const View& next = i + 1 < n ? f.closeups[i + 1] : f.full;
    f.videos.push_back(interpolate_video(f.closeups[i], next, s, i));
  }
  return f;
}

inline Image render_closeup(const ProceduralTexture& tex, const Fixture& f, size_t i,
                            int threads = 1) {
  Image img = render_view(tex, f.closeups[i], threads);
  if (f.spec.closeup_gain != 1.0 || f.spec.closeup_offset != 0.0) {
    for (float& v : img.data)
      v = std::clamp(static_cast<float>(v * f.spec.closeup_gain + f.spec.closeup_offset), 0.0f,
                     1.0f);
  }
  return img;
}

inline std::vector<Image> render_video_luma(const ProceduralTexture& tex, const Fixture& f,
                                            size_t i, int threads = 1) {
  std::vector<Image> frames;
  for (const View& v : f.videos[i]) frames.push_back(to_luma(render_view(tex, v, threads)));
  return frames;
}

inline std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.png", index);
  return buf;
}

// Writes full.png, closeup_XXX.png, videos/video_XXX/frame_XXXXXX.png and
// ground_truth.json under `dir`.
inline nlohmann::json write_fixture(const Fixture& f, const std::filesystem::path& dir,
                                    int threads = 1) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const ProceduralTexture tex(f.spec.seed);
  write_png(dir / "full.png", render_view(tex, f.full, threads));
  nlohmann::json gt;
  gt["full"] = "full.png";
  gt["closeups"] = nlohmann::json::array();
  gt["videos"] = nlohmann::json::array();
  for (size_t i = 0; i < f.closeups.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "closeup_%03zu.png", i);
    write_png(dir / name, render_closeup(tex, f, i, threads));
    char vname[32];
    std::snprintf(vname, sizeof vname, "videos/video_%03zu", i);
    const fs::path vdir = dir / vname;
    fs::create_directories(vdir);
    for (size_t k = 0; k < f.videos[i].size(); ++k)
      write_png(vdir / frame_name(static_cast<int>(k)), render_view(tex, f.videos[i][k], threads));
    gt["closeups"].push_back({{"path", name},
                              {"transform_to_full", f.closeup_to_full(i)},
                              {"scale", f.closeup_scale(i)}});
    gt["videos"].push_back({{"path", vname}, {"frames", f.videos[i].size()}});
  }
  return gt;
}

}  // namespace uz
