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
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultrazoom/error.hpp"
#include "ultrazoom/geometry.hpp"
#include "ultrazoom/image.hpp"
#include "ultrazoom/io.hpp"
#include "ultrazoom/parallel.hpp"

namespace uz {

// In-memory luma frames, values in [0,1].
struct FrameSequence {
  std::vector<Image> frames;

  size_t size() const { return frames.size(); }
  Image load(size_t i) const { return frames[i]; }
};

// Numbered frame_XXXXXX.png files, loaded lazily as Rec. 709 luma.
class FrameDirectory {
 public:
  explicit FrameDirectory(std::filesystem::path dir) : dir_(std::move(dir)) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir_))
      throw Error(Errc::Config, "video directory not found: " + dir_.string());
    for (const auto& e : fs::directory_iterator(dir_)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".png")
        paths_.push_back(e.path());
    }
    std::sort(paths_.begin(), paths_.end());
  }
  size_t size() const { return paths_.size(); }
  Image load(size_t i) const { return read_png(paths_[i], 1); }
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> paths_;
};

struct TrackResult {
  size_t frame_count = 0;
  size_t point_count = 0;
  std::vector<Vec2> positions;   // frame-major: [frame * point_count + point]
  std::vector<uint8_t> valid;

  Vec2& pos(size_t f, size_t p) { return positions[f * point_count + p]; }
  Vec2 pos(size_t f, size_t p) const { return positions[f * point_count + p]; }
  bool ok(size_t f, size_t p) const { return valid[f * point_count + p] != 0; }
};

struct SegmentRange {
  size_t start_frame = 0;
  size_t end_frame = 0;  // inclusive
  bool operator==(const SegmentRange&) const = default;
};

struct GridParams {
  int rows = 20;
  int cols = 20;
  double margin = 0.1;
};

struct TrackerParams {
  int patch_radius = 15;
  int search_radius = 31;
  double min_zncc = 0.5;
  int threads = 0;
};

// rows x cols points evenly spaced over [m*w, (w-1) - m*w] per axis.
inline std::vector<Vec2> init_grid(int width, int height, const GridParams& g) {
  if (g.rows < 2 || g.cols < 2) throw Error(Errc::InvalidGrid, "grid needs rows, cols >= 2");
  if (!(g.margin >= 0.0 && g.margin < 0.5))
    throw Error(Errc::InvalidGrid, "margin must be in [0, 0.5)");
  require(width >= 2 && height >= 2, Errc::InvalidGrid, "image too small for a grid");
  const double x0 = g.margin * width, x1 = (width - 1) - g.margin * width;
  const double y0 = g.margin * height, y1 = (height - 1) - g.margin * height;
  std::vector<Vec2> pts;
  pts.reserve(static_cast<size_t>(g.rows) * g.cols);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c)
      pts.push_back({x0 + (x1 - x0) * c / (g.cols - 1), y0 + (y1 - y0) * r / (g.rows - 1)});
  return pts;
}

// Consecutive segments share their boundary frame.
inline std::vector<SegmentRange> split_segments(size_t frame_count, size_t segment_length) {
  if (frame_count < 2 || segment_length < 2)
    throw Error(Errc::InvalidSplit, "need frame_count >= 2 and segment_length >= 2");
  std::vector<SegmentRange> out;
  size_t start = 0;
  while (start < frame_count - 1) {
    const size_t end = std::min(start + segment_length - 1, frame_count - 1);
    out.push_back({start, end});
    start = end;
  }
  return out;
}

namespace track_detail {

inline float bilinear(const Image& img, double x, double y) {
  x = std::clamp(x, 0.0, img.width - 1.0);
  y = std::clamp(y, 0.0, img.height - 1.0);
  const int x0 = std::min(static_cast<int>(x), img.width - 2 < 0 ? 0 : img.width - 2);
  const int y0 = std::min(static_cast<int>(y), img.height - 2 < 0 ? 0 : img.height - 2);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const float fx = static_cast<float>(x - x0), fy = static_cast<float>(y - y0);
  const float top = img.at(x0, y0) + (img.at(x1, y0) - img.at(x0, y0)) * fx;
  const float bot = img.at(x0, y1) + (img.at(x1, y1) - img.at(x0, y1)) * fx;
  return top + (bot - top) * fy;
}

// Square block of (2r+1)^2 samples centered at (cx, cy).
inline std::vector<float> sample_block(const Image& img, double cx, double cy, int r) {
  const int n = 2 * r + 1;
  std::vector<float> out(static_cast<size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) out[j * n + i] = bilinear(img, cx + i - r, cy + j - r);
  return out;
}

// Binomial blur + 2x decimation; level-1 pixel i is centered on level-0
// coordinate 2i + 0.5.
inline Image half(const Image& img) {
  const int w = std::max(1, img.width / 2), h = std::max(1, img.height / 2);
  Image out(w, h, 1);
  constexpr float k[4] = {0.125f, 0.375f, 0.375f, 0.125f};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i)
          acc += k[j] * k[i] * img.clamped(2 * x - 1 + i, 2 * y - 1 + j);
      out.at(x, y) = acc;
    }
  return out;
}

// Zero-mean, unit-norm template; returns false when flat.
inline bool normalize(std::vector<float>& t) {
  double m = 0.0;
  for (float v : t) m += v;
  m /= static_cast<double>(t.size());
  double ss = 0.0;
  for (float& v : t) {
    v = static_cast<float>(v - m);
    ss += double(v) * v;
  }
  if (ss < 1e-12) return false;
  const float inv = static_cast<float>(1.0 / std::sqrt(ss));
  for (float& v : t) v *= inv;
  return true;
}

// ZNCC of a normalized template (side n) against every n x n window of a
// region (side m), window top-left offsets [0, m-n]^2.
inline std::vector<float> zncc_map(const std::vector<float>& tmpl, int n,
                                   const std::vector<float>& region, int m) {
  const int k = m - n + 1;
  std::vector<float> out(static_cast<size_t>(k) * k, 0.0f);
  const double cnt = static_cast<double>(n) * n;
  for (int oy = 0; oy < k; ++oy)
    for (int ox = 0; ox < k; ++ox) {
      double st = 0.0, s = 0.0, s2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const float* rrow = &region[(oy + j) * m + ox];
        const float* trow = &tmpl[j * n];
        for (int i = 0; i < n; ++i) {
          st += trow[i] * rrow[i];
          s += rrow[i];
          s2 += rrow[i] * rrow[i];
        }
      }
      const double var = s2 - s * s / cnt;
      out[oy * k + ox] = var > 1e-12 ? static_cast<float>(st / std::sqrt(var)) : 0.0f;
    }
  return out;
}

constexpr int kLevels = 3;

// levels[0] is full resolution; levels[k] is 2^k times smaller.
struct Pyr {
  Image levels[kLevels];
  const Image& l0() const { return levels[0]; }
};

inline double parabolic(double zm, double z0, double zp) {
  const double den = zm - 2.0 * z0 + zp;
  if (den >= 0.0) return 0.0;
  return std::clamp(0.5 * (zm - zp) / den, -0.5, 0.5);
}

struct StepResult {
  Vec2 pos;
  bool ok = false;
};

struct Peak {
  int dx = 0, dy = 0;
  std::vector<float> map;  // (2*rim+1)^2 scores around (dx, dy)
  bool ok = false;
};

// Integer refinement at one level: evaluates a (2*rim+1)^2 neighbourhood of
// the guess and recentres while the best score sits on the rim.
inline Peak refine(const Image& a, const Image& b, double px, double py, int r, int dx, int dy,
                   int rim, int limit) {
  auto t = sample_block(a, px, py, r);
  Peak pk;
  if (!normalize(t)) return pk;
  const int n = 2 * r + 1, m = n + 2 * rim, k = 2 * rim + 1;
  for (int iter = 0; iter < 4; ++iter) {
    const auto reg = sample_block(b, px + dx, py + dy, r + rim);
    pk.map = zncc_map(t, n, reg, m);
    const auto best = std::max_element(pk.map.begin(), pk.map.end()) - pk.map.begin();
    const int bx = static_cast<int>(best % k) - rim, by = static_cast<int>(best / k) - rim;
    if (std::abs(bx) < rim && std::abs(by) < rim) {
      pk.dx = dx + bx;
      pk.dy = dy + by;
      pk.ok = true;
      // Recentre the map on the peak for sub-pixel fitting.
      if (bx != 0 || by != 0) {
        const auto reg2 = sample_block(b, px + pk.dx, py + pk.dy, r + rim);
        pk.map = zncc_map(t, n, reg2, m);
      }
      return pk;
    }
    dx += bx;
    dy += by;
    if (std::abs(dx) > limit || std::abs(dy) > limit) return pk;
  }
  return pk;
}

// One frame-to-frame step: exhaustive ZNCC search on the coarsest level,
// integer refinement down the pyramid, parabolic sub-pixel peak on level 0.
inline StepResult track_step(const Pyr& a, const Pyr& b, Vec2 p, const TrackerParams& tp) {
  constexpr int top = kLevels - 1;
  const double f = std::ldexp(1.0, top);
  // Level-k pixel i is centered on level-0 coordinate 2^k (i + 0.5) - 0.5.
  auto to_level = [](double v, double s) { return (v + 0.5) / s - 0.5; };
  const int rt = std::max(2, tp.patch_radius >> top);
  const int search_top = static_cast<int>(std::ceil(tp.search_radius / f)) + 1;
  const double qx = to_level(p.x, f), qy = to_level(p.y, f);
  auto tt = sample_block(a.levels[top], qx, qy, rt);
  if (!normalize(tt)) return {p, false};
  const auto reg = sample_block(b.levels[top], qx, qy, rt + search_top);
  const auto zt = zncc_map(tt, 2 * rt + 1, reg, 2 * (rt + search_top) + 1);
  const int kt = 2 * search_top + 1;
  const auto best = std::max_element(zt.begin(), zt.end()) - zt.begin();
  int dx = static_cast<int>(best % kt) - search_top;
  int dy = static_cast<int>(best / kt) - search_top;

  for (int lvl = top - 1; lvl >= 1; --lvl) {
    const double s = std::ldexp(1.0, lvl);
    const int r = std::max(2, tp.patch_radius >> lvl);
    const auto pk = refine(a.levels[lvl], b.levels[lvl], to_level(p.x, s), to_level(p.y, s), r,
                           2 * dx, 2 * dy, 2, static_cast<int>(tp.search_radius / s) + 4);
    if (!pk.ok) return {p, false};
    dx = pk.dx;
    dy = pk.dy;
  }
  constexpr int rim = 2;
  const auto pk = refine(a.l0(), b.l0(), p.x, p.y, tp.patch_radius, 2 * dx, 2 * dy, rim,
                         tp.search_radius + 4);
  if (!pk.ok) return {p, false};
  const int k = 2 * rim + 1;
  auto z = [&](int ox, int oy) { return double(pk.map[(oy + rim) * k + (ox + rim)]); };
  const double peak = z(0, 0);
  if (peak < tp.min_zncc) return {p, false};
  double sx = 0.0, sy = 0.0;
  // A perfect correlation is an exact integer match; refinement would only add bias.
  if (peak < 1.0 - 1e-4) {
    sx = parabolic(z(-1, 0), peak, z(1, 0));
    sy = parabolic(z(0, -1), peak, z(0, 1));
  }
  const Vec2 np{p.x + pk.dx + sx, p.y + pk.dy + sy};
  if (np.x < 0 || np.y < 0 || np.x > b.l0().width - 1 || np.y > b.l0().height - 1)
    return {np, false};
  return {np, true};
}

}  // namespace track_detail

// Frame-to-frame ZNCC template tracking. A point that fails (low peak, flat
// template, or leaves the frame) stays invalid for the rest of the sequence.
template <typename Frames>
TrackResult track_frames(const Frames& seq, size_t first, size_t last,
                         const std::vector<Vec2>& points, const TrackerParams& tp = {}) {
  if (seq.size() == 0 || last < first || last >= seq.size())
    throw Error(Errc::EmptySequence, "no frames to track");
  require(tp.patch_radius >= 2, Errc::InvalidArgument, "patch_radius must be >= 2");
  require(tp.search_radius >= 1, Errc::InvalidArgument, "search_radius must be >= 1");
  TrackResult tr;
  tr.frame_count = last - first + 1;
  tr.point_count = points.size();
  tr.positions.resize(tr.frame_count * tr.point_count);
  tr.valid.assign(tr.frame_count * tr.point_count, 0);

  auto build = [](Image f) {
    require(f.channels == 1, Errc::InvalidArgument, "tracker expects luma frames");
    track_detail::Pyr p;
    p.levels[0] = std::move(f);
    for (int k = 1; k < track_detail::kLevels; ++k) p.levels[k] = track_detail::half(p.levels[k - 1]);
    return p;
  };
  track_detail::Pyr cur = build(seq.load(first));
  for (size_t i = 0; i < points.size(); ++i) {
    const Vec2 q = points[i];
    require(q.x >= 0 && q.y >= 0 && q.x <= cur.l0().width - 1 && q.y <= cur.l0().height - 1,
            Errc::InvalidArgument, "track point outside frame");
    tr.pos(0, i) = q;
    tr.valid[i] = 1;
  }
  const int threads = resolve_threads(tp.threads);
  for (size_t f = 1; f < tr.frame_count; ++f) {
    track_detail::Pyr next = build(seq.load(first + f));
    require(next.l0().width == cur.l0().width && next.l0().height == cur.l0().height,
            Errc::InvalidArgument, "frame dimensions differ within a sequence");
    parallel_for(tr.point_count, threads, [&](size_t i) {
      tr.pos(f, i) = tr.pos(f - 1, i);
      if (!tr.ok(f - 1, i)) return;
      const auto r = track_detail::track_step(cur, next, tr.pos(f - 1, i), tp);
      tr.pos(f, i) = r.pos;
      tr.valid[f * tr.point_count + i] = r.ok ? 1 : 0;
    });
    cur = std::move(next);
  }
  return tr;
}

inline TrackResult track_segment(const FrameSequence& seq, const std::vector<Vec2>& points,
                                 const TrackerParams& tp = {}) {
  if (seq.size() == 0) throw Error(Errc::EmptySequence, "empty frame sequence");
  return track_frames(seq, 0, seq.size() - 1, points, tp);
}

struct RegistrationParams {
  size_t segment_length = 12;
  GridParams grid;
  TrackerParams tracker;
  RansacParams ransac;
};

struct SegmentRegistration {
  size_t video = 0;
  SegmentRange range;
  SimilarityTransform2D transform;
  size_t tracks = 0;   // valid at the segment's last frame
  size_t inliers = 0;
};

struct RegistrationResult {
  std::vector<SegmentRegistration> segments;  // in application order
  SimilarityTransform2D cumulative;
  double scale = 1.0;
};

namespace track_detail {

inline SegmentRegistration estimate_segment(const PointCorrespondences& corrs, size_t video,
                                            SegmentRange range, size_t global_index,
                                            const RansacParams& rp) {
  if (corrs.size() < 2)
    throw Error(Errc::TooFewValidTracks,
                "segment " + std::to_string(global_index) + " kept " +
                    std::to_string(corrs.size()) + " valid tracks",
                static_cast<long long>(global_index));
  SegmentRegistration seg{video, range, {}, corrs.size(), 0};
  try {
    const auto r = ransac_similarity(corrs, rp);
    seg.transform = r.transform;
    seg.inliers = r.inlier_count;
  } catch (const Error& e) {
    if (e.code() == Errc::NoConsensus)
      throw Error(Errc::NoConsensus, "segment " + std::to_string(global_index),
                  static_cast<long long>(global_index));
    throw;
  }
  return seg;
}

inline RegistrationResult finish(std::vector<SegmentRegistration> segs) {
  RegistrationResult out;
  std::vector<SimilarityTransform2D> ts;
  for (const auto& s : segs) ts.push_back(s.transform);
  out.segments = std::move(segs);
  out.cumulative = chain(ts);
  out.scale = extract_scale(out.cumulative);
  return out;
}

}  // namespace track_detail

// Registers a chain of videos: each segment gets a fresh grid at its first
// frame, tracks are followed to its last frame, and a RANSAC similarity is
// fitted between the two. Segment transforms are chained in order; the
// cumulative transform maps the first video's first frame into the last
// video's last frame.
template <typename Frames>
RegistrationResult register_sequence(const std::vector<Frames>& videos,
                                     const RegistrationParams& rp = {}) {
  require(!videos.empty(), Errc::EmptySequence, "no videos to register");
  std::vector<SegmentRegistration> segs;
  for (size_t v = 0; v < videos.size(); ++v) {
    const Frames& video = videos[v];
    if (video.size() < 2)
      throw Error(Errc::EmptySequence, "video " + std::to_string(v) + " has fewer than 2 frames");
    const Image probe = video.load(0);
    const auto grid = init_grid(probe.width, probe.height, rp.grid);
    for (const SegmentRange& range : split_segments(video.size(), rp.segment_length)) {
      const TrackResult tr = track_frames(video, range.start_frame, range.end_frame, grid,
                                          rp.tracker);
      PointCorrespondences corrs;
      const size_t lastf = tr.frame_count - 1;
      for (size_t p = 0; p < tr.point_count; ++p)
        if (tr.ok(lastf, p)) corrs.push_back({tr.pos(0, p), tr.pos(lastf, p)});
      segs.push_back(track_detail::estimate_segment(corrs, v, range, segs.size(), rp.ransac));
    }
  }
  return track_detail::finish(std::move(segs));
}

// Same chaining from externally produced tracks (one TrackResult per video,
// covering all of its frames). A track contributes to a segment when it is
// valid at both of the segment's end frames.
inline RegistrationResult register_from_tracks(const std::vector<TrackResult>& videos,
                                               const RegistrationParams& rp = {}) {
  require(!videos.empty(), Errc::EmptySequence, "no track files");
  std::vector<SegmentRegistration> segs;
  for (size_t v = 0; v < videos.size(); ++v) {
    const TrackResult& tr = videos[v];
    if (tr.frame_count < 2)
      throw Error(Errc::EmptySequence, "track file " + std::to_string(v) + " has < 2 frames");
    for (const SegmentRange& range : split_segments(tr.frame_count, rp.segment_length)) {
      PointCorrespondences corrs;
      for (size_t p = 0; p < tr.point_count; ++p) {
        bool alive = true;
        for (size_t f = range.start_frame; f <= range.end_frame && alive; ++f)
          alive = tr.ok(f, p);
        if (alive) corrs.push_back({tr.pos(range.start_frame, p), tr.pos(range.end_frame, p)});
      }
      segs.push_back(track_detail::estimate_segment(corrs, v, range, segs.size(), rp.ransac));
    }
  }
  return track_detail::finish(std::move(segs));
}

inline nlohmann::json track_result_to_json(const TrackResult& tr) {
  nlohmann::json pos = nlohmann::json::array(), val = nlohmann::json::array();
  for (size_t f = 0; f < tr.frame_count; ++f) {
    nlohmann::json prow = nlohmann::json::array(), vrow = nlohmann::json::array();
    for (size_t p = 0; p < tr.point_count; ++p) {
      prow.push_back({tr.pos(f, p).x, tr.pos(f, p).y});
      vrow.push_back(tr.ok(f, p));
    }
    pos.push_back(std::move(prow));
    val.push_back(std::move(vrow));
  }
  return {{"frame_count", tr.frame_count}, {"points", tr.point_count}, {"positions", pos},
          {"valid", val}};
}

// Parses the track-file format; rejects shape mismatches. Validity is made
// monotone: once a point is invalid it stays invalid.
inline TrackResult track_result_from_json(const nlohmann::json& j) {
  TrackResult tr;
  try {
    tr.frame_count = j.at("frame_count").get<size_t>();
    tr.point_count = j.at("points").get<size_t>();
    const auto& pos = j.at("positions");
    const auto& val = j.at("valid");
    if (pos.size() != tr.frame_count || val.size() != tr.frame_count)
      throw Error(Errc::Config, "track file: frame_count does not match arrays");
    tr.positions.resize(tr.frame_count * tr.point_count);
    tr.valid.resize(tr.frame_count * tr.point_count);
    for (size_t f = 0; f < tr.frame_count; ++f) {
      if (pos[f].size() != tr.point_count || val[f].size() != tr.point_count)
        throw Error(Errc::Config, "track file: point count mismatch at frame " + std::to_string(f));
      for (size_t p = 0; p < tr.point_count; ++p) {
        tr.pos(f, p) = {pos[f][p].at(0).get<double>(), pos[f][p].at(1).get<double>()};
        const bool ok = val[f][p].get<bool>() && (f == 0 || tr.ok(f - 1, p));
        tr.valid[f * tr.point_count + p] = ok ? 1 : 0;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Config, std::string("track file: ") + e.what());
  }
  return tr;
}

inline nlohmann::json registration_to_json(const RegistrationResult& r) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : r.segments)
    segs.push_back({{"video", s.video},
                    {"start_frame", s.range.start_frame},
                    {"end_frame", s.range.end_frame},
                    {"transform", s.transform},
                    {"tracks", s.tracks},
                    {"inliers", s.inliers}});
  return {{"segments", segs}, {"cumulative", r.cumulative}, {"scale", r.scale}};
}

}  // namespace uz
