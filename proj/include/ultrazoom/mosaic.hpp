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

// Sliding-window inference over an output canvas too large for memory.
//
// Canvas pixel X samples the full image at u = (X + 0.5) / Z - 0.5, the same
// mapping as resample_bicubic. A window crops an integer full-image region
// [cx0, cx1) padded by kPad pixels; enhancer output pixel j then lies at
// canvas coordinate cx0 * Z + j and is shifted onto the integer canvas grid
// by Catmull-Rom interpolation (a plain copy when cx0 * Z is integral).
// Finished canvas rows stream out of a ring of `window` rows.

#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultrazoom/enhance.hpp"
#include "ultrazoom/error.hpp"
#include "ultrazoom/image.hpp"
#include "ultrazoom/io.hpp"
#include "ultrazoom/parallel.hpp"
#include "ultrazoom/resample.hpp"

namespace uz {

// Schedules ---------------------------------------------------------------------

inline std::vector<int> axis_origins(int n, int window, int stride) {
  std::vector<int> o;
  for (int p = 0; p + window <= n; p += stride) o.push_back(p);
  if (o.empty() || o.back() + window < n) o.push_back(n - window);
  return o;
}

struct WindowOrigin {
  int x = 0, y = 0;
  bool operator==(const WindowOrigin&) const = default;
};

// Row-major (y outer) window origins.
inline std::vector<WindowOrigin> schedule_windows(int canvas_w, int canvas_h, int window,
                                                  int stride) {
  if (window > canvas_w || window > canvas_h)
    throw Error(Errc::WindowLargerThanCanvas, "window exceeds the canvas");
  require(window >= 1 && stride >= 1 && stride <= window, Errc::InvalidRange,
          "stride must be in [1, window]");
  std::vector<WindowOrigin> out;
  const auto xs = axis_origins(canvas_w, window, stride);
  for (int y : axis_origins(canvas_h, window, stride))
    for (int x : xs) out.push_back({x, y});
  return out;
}

inline std::vector<int> stride_schedule(int step_count, int stride_min, int stride_max,
                                        int window = 0) {
  if (step_count < 1 || stride_min < 1 || stride_min > stride_max ||
      (window > 0 && stride_max > window))
    throw Error(Errc::InvalidRange, "stride schedule needs 1 <= min <= max <= window");
  std::vector<int> s(step_count);
  for (int k = 0; k < step_count; ++k)
    s[k] = step_count == 1
               ? stride_min
               : static_cast<int>(std::lround(stride_min + double(stride_max - stride_min) * k /
                                                               (step_count - 1)));
  return s;
}

struct ScheduleStep {
  int stride = 0;
  std::vector<WindowOrigin> origins;
};

struct WindowSchedule {
  int window = 0;  // nominal; clamped per axis to the canvas
  int canvas_w = 0, canvas_h = 0;
  std::vector<ScheduleStep> steps;

  int window_w() const { return std::min(window, canvas_w); }
  int window_h() const { return std::min(window, canvas_h); }
};

// Windows larger than the canvas shrink to it (one window per axis).
inline WindowSchedule make_schedule(int canvas_w, int canvas_h, int window,
                                    const std::vector<int>& strides) {
  require(canvas_w >= 1 && canvas_h >= 1 && window >= 1, Errc::InvalidArgument,
          "canvas and window must be non-empty");
  WindowSchedule s{window, canvas_w, canvas_h, {}};
  const int ww = s.window_w(), wh = s.window_h();
  for (int stride : strides) {
    require(stride >= 1 && stride <= window, Errc::InvalidRange, "stride must be in [1, window]");
    ScheduleStep st{stride, {}};
    const auto xs = axis_origins(canvas_w, ww, std::min(stride, ww));
    for (int y : axis_origins(canvas_h, wh, std::min(stride, wh)))
      for (int x : xs) st.origins.push_back({x, y});
    s.steps.push_back(std::move(st));
  }
  return s;
}

// Every step's windows must cover every canvas pixel.
inline void check_coverage(const WindowSchedule& s) {
  const int ww = s.window_w(), wh = s.window_h();
  for (size_t k = 0; k < s.steps.size(); ++k) {
    std::vector<int> xs, ys;
    for (const auto& o : s.steps[k].origins) {
      xs.push_back(o.x);
      ys.push_back(o.y);
    }
    auto covers = [](std::vector<int> v, int n, int w) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      if (v.empty() || v.front() > 0 || v.back() + w < n) return false;
      for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[i - 1] + w) return false;
      return true;
    };
    // Origins form a grid, so per-axis coverage plus the grid size suffices.
    const bool grid = s.steps[k].origins.size() ==
                      [&] {
                        auto a = xs, b = ys;
                        std::sort(a.begin(), a.end());
                        std::sort(b.begin(), b.end());
                        return size_t(std::unique(a.begin(), a.end()) - a.begin()) *
                               size_t(std::unique(b.begin(), b.end()) - b.begin());
                      }();
    if (!grid || !covers(xs, s.canvas_w, ww) || !covers(ys, s.canvas_h, wh))
      throw Error(Errc::ScheduleCoverageGap, "schedule step leaves canvas pixels uncovered", k);
  }
}

struct WindowCount {
  size_t total = 0;
  double average = 0.0;
};

inline WindowCount window_count(const WindowSchedule& s) {
  WindowCount c;
  for (const auto& st : s.steps) c.total += st.origins.size();
  if (!s.steps.empty()) c.average = static_cast<double>(c.total) / s.steps.size();
  return c;
}

// Same count without materializing origins (for very large canvases).
inline WindowCount window_count(int canvas_w, int canvas_h, int window,
                                const std::vector<int>& strides) {
  WindowCount c;
  auto per_axis = [](int n, int w, int stride) {
    w = std::min(w, n);
    stride = std::min(stride, w);
    const int full = (n - w) / stride + 1;
    return static_cast<size_t>(full + ((full - 1) * stride + w < n ? 1 : 0));
  };
  for (int s : strides) c.total += per_axis(canvas_w, window, s) * per_axis(canvas_h, window, s);
  if (!strides.empty()) c.average = static_cast<double>(c.total) / strides.size();
  return c;
}

inline nlohmann::json schedule_to_json(const WindowSchedule& s) {
  nlohmann::json j{{"window", s.window}, {"canvas", {s.canvas_w, s.canvas_h}}};
  j["steps"] = nlohmann::json::array();
  for (const auto& st : s.steps) {
    nlohmann::json o = nlohmann::json::array();
    for (const auto& p : st.origins) o.push_back({p.x, p.y});
    j["steps"].push_back({{"stride", st.stride}, {"origins", o}});
  }
  const auto c = window_count(s);
  j["window_count"] = {{"total", c.total}, {"average", c.average}};
  return j;
}

struct CalibrationResult {
  int window = 0, stride_min = 0, stride_max = 0;
  double average = 0.0;
  size_t total = 0;
};

// Searches stride_min <= stride_max in [window/4, window] for the per-step
// window count closest to `target_average`; ties prefer larger strides.
inline CalibrationResult calibrate_window_count(int canvas, int steps, double target_average,
                                                const std::vector<int>& windows) {
  CalibrationResult best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int w : windows)
    for (int smin = std::max(1, w / 4); smin <= w; ++smin)
      for (int smax = smin; smax <= w; ++smax) {
        const auto c = window_count(canvas, canvas, w, stride_schedule(steps, smin, smax, w));
        const double err = std::abs(c.average - target_average);
        if (err < best_err - 1e-12) {
          best_err = err;
          best = {w, smin, smax, c.average, c.total};
        }
      }
  return best;
}

// Blending ---------------------------------------------------------------------

struct BlendKernel {
  int window = 0;
  int margin = 0;
  std::vector<float> weights;  // window x window, row-major

  float weight(int x, int y) const { return weights[static_cast<size_t>(y) * window + x]; }
};

// 1-D raised-cosine ramp over `margin` samples at each end of n samples.
inline float blend_ramp(int i, int n, int margin) {
  return enhance_detail::ramp(i, n, std::min<double>(margin, n / 2.0));
}

inline BlendKernel blend_kernel(int window, int margin) {
  if (margin < 0 || 2 * margin > window)
    throw Error(Errc::InvalidMargin, "blend margin must be in [0, window/2]");
  BlendKernel k{window, margin, std::vector<float>(static_cast<size_t>(window) * window)};
  for (int y = 0; y < window; ++y)
    for (int x = 0; x < window; ++x)
      k.weights[static_cast<size_t>(y) * window + x] =
          blend_ramp(x, window, margin) * blend_ramp(y, window, margin);
  return k;
}

// Row streaming ----------------------------------------------------------------------

// Receives finished canvas rows in increasing order.
class RowSink {
 public:
  virtual ~RowSink() = default;
  virtual void begin(int width, int height) = 0;
  virtual void row(int y, std::span<const float> rgb) = 0;
  virtual void end() {}
};

class ImageSink : public RowSink {
 public:
  Image image;
  void begin(int w, int h) override { image = Image(w, h, 3); }
  void row(int y, std::span<const float> rgb) override {
    std::copy(rgb.begin(), rgb.end(), image.row(y).begin());
  }
};

// 8-bit RGB band files band_NNNNNN.rgb plus header.json.
class BandWriter : public RowSink {
 public:
  BandWriter(fs::path dir, int band_height) : dir_(std::move(dir)), band_h_(band_height) {
    require(band_height >= 1, Errc::InvalidArgument, "band height must be positive");
  }
  void begin(int w, int h) override {
    fs::create_directories(dir_);
    w_ = w;
    h_ = h;
    buf_.assign(static_cast<size_t>(band_h_) * w * 3, 0);
    band_ = 0;
    rows_ = 0;
  }
  void row(int y, std::span<const float> rgb) override {
    (void)y;
    uint8_t* dst = buf_.data() + static_cast<size_t>(rows_) * w_ * 3;
    for (size_t i = 0; i < rgb.size(); ++i) dst[i] = to_u8(rgb[i]);
    if (++rows_ == band_h_) flush();
  }
  void end() override {
    if (rows_ > 0) flush();
    nlohmann::json j{{"width", w_},       {"height", h_}, {"band_height", band_h_},
                     {"bands", band_},    {"format", "rgb8"}, {"band_pattern", "band_%06d.rgb"}};
    write_text_atomic(dir_ / "header.json", j.dump(1));
  }
  size_t buffer_bytes() const { return buf_.size(); }

 private:
  void flush() {
    char name[32];
    std::snprintf(name, sizeof name, "band_%06d.rgb", band_);
    std::FILE* f = std::fopen((dir_ / name).c_str(), "wb");
    if (!f) throw Error(Errc::Io, "cannot write band file " + (dir_ / name).string());
    const size_t n = static_cast<size_t>(rows_) * w_ * 3;
    const bool ok = std::fwrite(buf_.data(), 1, n, f) == n;
    if (std::fclose(f) != 0 || !ok) throw Error(Errc::Io, "short write on band file");
    ++band_;
    rows_ = 0;
  }
  fs::path dir_;
  int band_h_;
  int w_ = 0, h_ = 0, band_ = 0, rows_ = 0;
  std::vector<uint8_t> buf_;
};

// Reads rows back from a BandWriter directory.
class BandReader {
 public:
  explicit BandReader(fs::path dir) : dir_(std::move(dir)) {
    try {
      const auto j = nlohmann::json::parse(read_text(dir_ / "header.json"));
      w_ = j.at("width").get<int>();
      h_ = j.at("height").get<int>();
      band_h_ = j.at("band_height").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::CorruptStream, std::string("bad canvas header: ") + e.what());
    }
    if (w_ < 1 || h_ < 1 || band_h_ < 1) throw Error(Errc::CorruptStream, "bad canvas dimensions");
  }
  int width() const { return w_; }
  int height() const { return h_; }
  int band_height() const { return band_h_; }

  // Rows [y0, y1) as 8-bit RGB.
  std::vector<uint8_t> read_rows(int y0, int y1) const {
    require(0 <= y0 && y0 <= y1 && y1 <= h_, Errc::InvalidArgument, "row range outside canvas");
    std::vector<uint8_t> out(static_cast<size_t>(y1 - y0) * w_ * 3);
    const size_t row_bytes = static_cast<size_t>(w_) * 3;
    for (int y = y0; y < y1;) {
      const int band = y / band_h_;
      const int in_band = y - band * band_h_;
      const int n = std::min(y1, (band + 1) * band_h_) - y;
      char name[32];
      std::snprintf(name, sizeof name, "band_%06d.rgb", band);
      std::FILE* f = std::fopen((dir_ / name).c_str(), "rb");
      if (!f) throw Error(Errc::CorruptStream, std::string("missing band file ") + name);
      const bool ok = std::fseek(f, static_cast<long>(in_band * row_bytes), SEEK_SET) == 0 &&
                      std::fread(out.data() + (y - y0) * row_bytes, 1, n * row_bytes, f) ==
                          n * row_bytes;
      std::fclose(f);
      if (!ok) throw Error(Errc::CorruptStream, std::string("truncated band file ") + name);
      y += n;
    }
    return out;
  }
  Image read_image() const { return from_bytes(read_rows(0, h_).data(), w_, h_, 3); }

 private:
  fs::path dir_;
  int w_ = 0, h_ = 0, band_h_ = 0;
};

// Float32 RGB canvas on disk with random row access; holds the iterative
// estimate between steps.
class FloatRowStore : public RowSink {
 public:
  FloatRowStore(fs::path path, int w, int h) : path_(std::move(path)), w_(w), h_(h) {
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
    if (fd_ < 0) throw Error(Errc::Io, "cannot create estimate store " + path_.string());
    if (::ftruncate(fd_, static_cast<off_t>(row_bytes()) * h) != 0)
      throw Error(Errc::Io, "cannot size estimate store");
  }
  ~FloatRowStore() override {
    if (fd_ >= 0) ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  FloatRowStore(const FloatRowStore&) = delete;
  FloatRowStore& operator=(const FloatRowStore&) = delete;

  void begin(int w, int h) override {
    require(w == w_ && h == h_, Errc::DimensionMismatch, "estimate store size mismatch");
  }
  void row(int y, std::span<const float> rgb) override {
    if (::pwrite(fd_, rgb.data(), row_bytes(), static_cast<off_t>(row_bytes()) * y) !=
        static_cast<ssize_t>(row_bytes()))
      throw Error(Errc::Io, "estimate store write failed");
  }
  // Edge-clamped read of [x0,x1) x [y0,y1).
  Image read(const Rect& r) const {
    Image out(r.width(), r.height(), 3);
    const int cx0 = std::clamp(r.x0, 0, w_ - 1), cx1 = std::clamp(r.x1, 1, w_);
    std::vector<float> line(static_cast<size_t>(cx1 - cx0) * 3);
    for (int y = r.y0; y < r.y1; ++y) {
      const int sy = std::clamp(y, 0, h_ - 1);
      const off_t off = static_cast<off_t>(row_bytes()) * sy + static_cast<off_t>(cx0) * 12;
      if (::pread(fd_, line.data(), line.size() * 4, off) != static_cast<ssize_t>(line.size() * 4))
        throw Error(Errc::Io, "estimate store read failed");
      for (int x = r.x0; x < r.x1; ++x) {
        const int sx = std::clamp(x, cx0, cx1 - 1) - cx0;
        for (int c = 0; c < 3; ++c) out.at(x - r.x0, y - r.y0, c) = line[sx * 3 + c];
      }
    }
    return out;
  }
  void copy_to(RowSink& sink) const {
    sink.begin(w_, h_);
    for (int y = 0; y < h_; ++y) {
      const Image r = read({0, y, w_, y + 1});
      sink.row(y, r.row(0));
    }
    sink.end();
  }

 private:
  size_t row_bytes() const { return static_cast<size_t>(w_) * 12; }
  fs::path path_;
  int w_, h_;
  int fd_ = -1;
};

// Rolling accumulator: value and weight sums for at most `capacity` rows.
// Rows below the current base are final and have been sent to the sink.
class CanvasBands {
 public:
  CanvasBands(int width, int height, int capacity, RowSink& sink)
      : w_(width), h_(height), cap_(std::min(capacity, height)), sink_(sink),
        val_(static_cast<size_t>(cap_) * width * 3, 0.0f),
        wgt_(static_cast<size_t>(cap_) * width, 0.0f), out_(static_cast<size_t>(width) * 3) {
    sink_.begin(w_, h_);
  }

  // Finalizes every row above y.
  void advance_to(int y) {
    y = std::min(y, h_);
    for (; base_ < y; ++base_) emit(base_);
  }
  void finish() {
    advance_to(h_);
    sink_.end();
  }

  float* value_row(int y) { return val_.data() + slot(y) * w_ * 3; }
  float* weight_row(int y) { return wgt_.data() + slot(y) * w_; }
  int width() const { return w_; }
  size_t resident_values() const { return val_.size() + wgt_.size() + out_.size(); }

 private:
  size_t slot(int y) const {
    if (y < base_ || y >= base_ + cap_) throw Error(Errc::InvalidArgument, "row outside the active band");
    return static_cast<size_t>(y % cap_);
  }
  void emit(int y) {
    float* v = value_row(y);
    float* w = weight_row(y);
    for (int x = 0; x < w_; ++x) {
      if (!(w[x] > 0.0f)) throw Error(Errc::ScheduleCoverageGap, "canvas pixel received no window", y);
      for (int c = 0; c < 3; ++c) out_[x * 3 + c] = std::clamp(v[x * 3 + c] / w[x], 0.0f, 1.0f);
    }
    sink_.row(y, out_);
    std::fill(v, v + static_cast<size_t>(w_) * 3, 0.0f);
    std::fill(w, w + w_, 0.0f);
  }

  int w_, h_, cap_;
  RowSink& sink_;
  std::vector<float> val_, wgt_, out_;
  int base_ = 0;
};

// Window geometry ------------------------------------------------------------------

namespace mosaic_detail {

inline constexpr int kPad = 3;

struct WindowPlan {
  WindowOrigin origin;
  int w = 0, h = 0;  // canvas pixels
  Rect crop;         // full-image region (may extend past the edges)
};

inline WindowPlan plan_window(WindowOrigin o, int w, int h, double z) {
  auto lo = [&](int x) { return static_cast<int>(std::floor((x + 0.5) / z - 0.5)) - kPad; };
  auto hi = [&](int x) { return static_cast<int>(std::floor((x + 0.5) / z - 0.5)) + kPad + 1; };
  return {o, w, h, {lo(o.x), lo(o.y), hi(o.x + w - 1), hi(o.y + h - 1)}};
}

// Canvas-grid taps reading enhancer pixels (canvas X = crop0 * Z + j).
inline detail::Taps canvas_taps(int origin, int n, int crop0, double z, int src_n) {
  return detail::build_taps(AxisMap{n, 1.0, origin - crop0 * z}, src_n);
}

// Enhancer-grid taps reading canvas pixels starting at canvas index `base`.
inline detail::Taps enhancer_taps(int n, int crop0, double z, int base, int src_n) {
  return detail::build_taps(AxisMap{n, 1.0, crop0 * z - base}, src_n);
}

// Accumulates tile (enhancer grid) into the bands at the window's position.
inline void accumulate(CanvasBands& bands, const Image& tile, const WindowPlan& p, double z,
                       int margin) {
  const auto tx = canvas_taps(p.origin.x, p.w, p.crop.x0, z, tile.width);
  const auto ty = canvas_taps(p.origin.y, p.h, p.crop.y0, z, tile.height);
  std::vector<float> line(static_cast<size_t>(tile.width) * 3);
  std::vector<float> wx(p.w);
  for (int x = 0; x < p.w; ++x) wx[x] = blend_ramp(x, p.w, margin);
  for (int y = 0; y < p.h; ++y) {
    std::fill(line.begin(), line.end(), 0.0f);
    for (int k = 0; k < ty.count[y]; ++k) {
      const float w = ty.weight[ty.first[y] + k];
      const auto src = tile.row(ty.index[ty.first[y] + k]);
      for (size_t i = 0; i < line.size(); ++i) line[i] += w * src[i];
    }
    const float wy = blend_ramp(y, p.h, margin);
    float* val = bands.value_row(p.origin.y + y) + static_cast<size_t>(p.origin.x) * 3;
    float* wgt = bands.weight_row(p.origin.y + y) + p.origin.x;
    for (int x = 0; x < p.w; ++x) {
      float px[3] = {0, 0, 0};
      for (int k = 0; k < tx.count[x]; ++k) {
        const float w = tx.weight[tx.first[x] + k];
        const float* s = &line[static_cast<size_t>(tx.index[tx.first[x] + k]) * 3];
        for (int c = 0; c < 3; ++c) px[c] += w * s[c];
      }
      const float wt = wy * wx[x];
      for (int c = 0; c < 3; ++c) val[x * 3 + c] += wt * std::clamp(px[c], 0.0f, 1.0f);
      wgt[x] += wt;
    }
  }
}

inline void with_window_context(const WindowPlan& p, size_t index, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw Error(e.code(),
                std::string(e.what()) + " (window at " + std::to_string(p.origin.x) + "," +
                    std::to_string(p.origin.y) + ")",
                index);
  }
}

inline void check_tile(const Image& tile, const WindowPlan& p, double z) {
  if (tile.width != scaled_size(p.crop.width(), z) || tile.height != scaled_size(p.crop.height(), z))
    throw Error(Errc::DimensionMismatch, "enhancer broke the dimension contract");
}

}  // namespace mosaic_detail

struct MosaicParams {
  double zoom = 2.0;
  int window = 1024;    // canvas pixels
  int stride = 512;     // one-shot stride
  int margin = 128;     // blend ramp width, canvas pixels
  int threads = 0;      // 0: UZ_THREADS or hardware
  fs::path work_dir;    // iterative estimate store; empty: system temp
};

struct MosaicStats {
  size_t windows = 0;          // enhancer invocations
  size_t peak_values = 0;      // peak resident canvas/tile buffer values (floats)
  int canvas_w = 0, canvas_h = 0;
};

inline int canvas_size(int n, double z) { return scaled_size(n, z); }

// One-shot inference: every window enhanced once, weighted overlap blend.
inline MosaicStats run_oneshot(const Image& full, Enhancer& enhancer, const MosaicParams& p,
                               RowSink& sink) {
  using namespace mosaic_detail;
  require(p.zoom > 1.0, Errc::InvalidArgument, "zoom must exceed 1");
  require(full.channels == 3 && !full.empty(), Errc::InvalidArgument, "full image must be RGB");
  MosaicStats st;
  st.canvas_w = canvas_size(full.width, p.zoom);
  st.canvas_h = canvas_size(full.height, p.zoom);
  const auto sched = make_schedule(st.canvas_w, st.canvas_h, p.window, {p.stride});
  check_coverage(sched);
  const int ww = sched.window_w(), wh = sched.window_h();
  if (p.margin < 0 || 2 * p.margin > p.window)
    throw Error(Errc::InvalidMargin, "blend margin must be in [0, window/2]");
  const int threads = resolve_threads(p.threads);
  CanvasBands bands(st.canvas_w, st.canvas_h, wh, sink);
  const auto& origins = sched.steps[0].origins;
  std::vector<Image> tiles(threads);
  size_t tile_peak = 0;
  for (size_t b = 0; b < origins.size(); b += threads) {
    const size_t n = std::min<size_t>(threads, origins.size() - b);
    std::vector<WindowPlan> plans(n);
    for (size_t i = 0; i < n; ++i) plans[i] = plan_window(origins[b + i], ww, wh, p.zoom);
    parallel_for(n, threads, [&](size_t i) {
      with_window_context(plans[i], b + i, [&] {
        EnhanceRequest req;
        req.lr = crop_clamped(full, plans[i].crop);
        req.zoom = p.zoom;
        req.origin_x = plans[i].origin.x;
        req.origin_y = plans[i].origin.y;
        tiles[i] = enhancer.enhance(req);
        check_tile(tiles[i], plans[i], p.zoom);
      });
    });
    size_t live = 0;
    for (size_t i = 0; i < n; ++i) live += tiles[i].data.size() + 3 * static_cast<size_t>(plans[i].crop.width()) * plans[i].crop.height();
    tile_peak = std::max(tile_peak, live);
    for (size_t i = 0; i < n; ++i) {
      bands.advance_to(plans[i].origin.y);
      accumulate(bands, tiles[i], plans[i], p.zoom, p.margin);
      tiles[i] = Image();
    }
    st.peak_values = std::max(st.peak_values, bands.resident_values() + tile_peak);
  }
  st.windows = origins.size();
  bands.finish();
  return st;
}

// Canvas rows [y0, y1) of resample_bicubic(full, z), computed from the
// needed source rows only.
inline Image bicubic_rows(const Image& full, double z, int width, int y0, int y1) {
  const int lo = static_cast<int>(std::floor((y0 + 0.5) / z - 0.5)) - 2;
  const int hi = static_cast<int>(std::floor((y1 - 0.5) / z - 0.5)) + 3;
  const Image src = crop_clamped(full, {0, lo, full.width, hi});
  return resample_axes(src, axis_for_factor(width, z),
                       AxisMap{y1 - y0, 1.0 / z, (y0 + 0.5) / z - 0.5 - lo});
}

// Iterative inference. The estimate starts as the bicubic upsample; at step k
// every window of step k reads the estimate, applies the enhancer's step,
// and the weighted average of all windows forms the next estimate.
inline MosaicStats run_iterative(const Image& full, Enhancer& enhancer,
                                 const WindowSchedule& sched, const MosaicParams& p,
                                 RowSink& sink) {
  using namespace mosaic_detail;
  require(p.zoom > 1.0, Errc::InvalidArgument, "zoom must exceed 1");
  require(full.channels == 3 && !full.empty(), Errc::InvalidArgument, "full image must be RGB");
  require(!sched.steps.empty(), Errc::InvalidArgument, "schedule has no steps");
  MosaicStats st;
  st.canvas_w = canvas_size(full.width, p.zoom);
  st.canvas_h = canvas_size(full.height, p.zoom);
  if (sched.canvas_w != st.canvas_w || sched.canvas_h != st.canvas_h)
    throw Error(Errc::DimensionMismatch, "schedule canvas does not match round(full dims * zoom)");
  check_coverage(sched);
  if (p.margin < 0 || 2 * p.margin > sched.window)
    throw Error(Errc::InvalidMargin, "blend margin must be in [0, window/2]");
  const int W = st.canvas_w, H = st.canvas_h;
  const int ww = sched.window_w(), wh = sched.window_h();
  const int threads = resolve_threads(p.threads);
  const int K = static_cast<int>(sched.steps.size());

  static std::atomic<uint64_t> counter{0};
  const fs::path dir = p.work_dir.empty() ? fs::temp_directory_path() : p.work_dir;
  fs::create_directories(dir);
  const std::string tag = std::to_string(::getpid()) + "_" + std::to_string(counter++);
  auto cur = std::make_unique<FloatRowStore>(dir / ("uz_estimate_a_" + tag + ".f32"), W, H);
  auto next = std::make_unique<FloatRowStore>(dir / ("uz_estimate_b_" + tag + ".f32"), W, H);

  cur->begin(W, H);
  for (int y0 = 0; y0 < H; y0 += wh) {
    const int y1 = std::min(H, y0 + wh);
    const Image rows = bicubic_rows(full, p.zoom, W, y0, y1);
    for (int y = y0; y < y1; ++y) cur->row(y, rows.row(y - y0));
  }

  std::vector<Image> tiles(threads);
  for (int k = 0; k < K; ++k) {
    const auto& origins = sched.steps[k].origins;
    CanvasBands bands(W, H, wh, *next);
    for (size_t b = 0; b < origins.size(); b += threads) {
      const size_t n = std::min<size_t>(threads, origins.size() - b);
      std::vector<WindowPlan> plans(n);
      for (size_t i = 0; i < n; ++i) plans[i] = plan_window(origins[b + i], ww, wh, p.zoom);
      parallel_for(n, threads, [&](size_t i) {
        const WindowPlan& pl = plans[i];
        with_window_context(pl, b + i, [&] {
          EnhanceRequest req;
          req.lr = crop_clamped(full, pl.crop);
          req.zoom = p.zoom;
          req.step_index = k;
          req.step_count = K;
          req.origin_x = pl.origin.x;
          req.origin_y = pl.origin.y;
          // Current estimate on the enhancer grid.
          const int ew = scaled_size(pl.crop.width(), p.zoom);
          const int eh = scaled_size(pl.crop.height(), p.zoom);
          const int bx = static_cast<int>(std::floor(pl.crop.x0 * p.zoom)) - 2;
          const int by = static_cast<int>(std::floor(pl.crop.y0 * p.zoom)) - 2;
          const Rect region{bx, by, bx + ew + 5, by + eh + 5};
          const Image canvas_part = cur->read(region);
          const Image current =
              resample_axes(canvas_part, AxisMap{ew, 1.0, pl.crop.x0 * p.zoom - bx},
                            AxisMap{eh, 1.0, pl.crop.y0 * p.zoom - by});
          tiles[i] = enhancer.step(req, current);
          check_tile(tiles[i], pl, p.zoom);
        });
      });
      for (size_t i = 0; i < n; ++i) {
        bands.advance_to(plans[i].origin.y);
        accumulate(bands, tiles[i], plans[i], p.zoom, p.margin);
        tiles[i] = Image();
      }
    }
    bands.finish();
    st.windows += origins.size();
    std::swap(cur, next);
  }
  cur->copy_to(sink);
  return st;
}

// Mean absolute luma step across the window boundary lines of a fixed-stride
// layout, over the mean step elsewhere. 1.0: no seam signature.
inline double seam_energy(const Image& img, int window, int stride) {
  if (img.width < window || img.height < window)
    throw Error(Errc::TooSmall, "image smaller than the seam window");
  require(stride >= 1 && stride <= window, Errc::InvalidRange, "stride must be in [1, window]");
  const Image l = to_luma(img);
  auto lines = [&](int n) {
    std::vector<char> on(n + 1, 0);
    for (int o : axis_origins(n, window, stride)) {
      if (o > 0) on[o] = 1;
      if (o + window < n) on[o + window] = 1;
    }
    return on;
  };
  const auto bx = lines(l.width), by = lines(l.height);
  double on = 0.0, off = 0.0;
  size_t n_on = 0, n_off = 0;
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x < l.width; ++x) {
      if (x > 0) {
        const double d = std::abs(double(l.at(x, y)) - l.at(x - 1, y));
        (bx[x] ? on : off) += d;
        ++(bx[x] ? n_on : n_off);
      }
      if (y > 0) {
        const double d = std::abs(double(l.at(x, y)) - l.at(x, y - 1));
        (by[y] ? on : off) += d;
        ++(by[y] ? n_on : n_off);
      }
    }
  if (n_on == 0 || n_off == 0) return 1.0;
  constexpr double eps = 1e-12;
  return (on / n_on + eps) / (off / n_off + eps);
}

}  // namespace uz
