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

#include "ultrazoom/mosaic.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace uz {
namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::InvalidArgument;
}

TEST(Schedule, Examples) {
  const auto w = schedule_windows(64, 64, 32, 16);
  EXPECT_EQ(w.size(), 9u);
  EXPECT_EQ(axis_origins(64, 32, 16), (std::vector<int>{0, 16, 32}));
  EXPECT_EQ(w[1], (WindowOrigin{16, 0}));  // row-major
  EXPECT_EQ(schedule_windows(40, 40, 40, 7), (std::vector<WindowOrigin>{{0, 0}}));
  EXPECT_EQ(axis_origins(100, 32, 24), (std::vector<int>{0, 24, 48, 68}));
  EXPECT_EQ(code_of([] { schedule_windows(31, 64, 32, 16); }), Errc::WindowLargerThanCanvas);
  EXPECT_EQ(code_of([] { schedule_windows(64, 64, 32, 33); }), Errc::InvalidRange);
}

TEST(Schedule, CoverageExhaustive) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const int window = 4 + static_cast<int>(rng.index(40));
    const int w = window + static_cast<int>(rng.index(90));
    const int h = window + static_cast<int>(rng.index(90));
    const int stride = 1 + static_cast<int>(rng.index(window));
    std::vector<int> cover(static_cast<size_t>(w) * h, 0);
    for (const auto& o : schedule_windows(w, h, window, stride)) {
      ASSERT_LE(o.x + window, w);
      ASSERT_LE(o.y + window, h);
      for (int y = o.y; y < o.y + window; ++y)
        for (int x = o.x; x < o.x + window; ++x) ++cover[static_cast<size_t>(y) * w + x];
    }
    for (int c : cover) ASSERT_GE(c, 1);
    const auto xs = axis_origins(w, window, stride);
    EXPECT_EQ(xs.back() + window, w);  // last window ends at the edge
  }
}

TEST(StrideSchedule, Examples) {
  EXPECT_EQ(stride_schedule(1, 300, 700), (std::vector<int>{300}));
  EXPECT_EQ(stride_schedule(3, 512, 768), (std::vector<int>{512, 640, 768}));
  EXPECT_EQ(stride_schedule(4, 64, 64), (std::vector<int>(4, 64)));
  EXPECT_EQ(code_of([] { stride_schedule(0, 1, 2); }), Errc::InvalidRange);
  EXPECT_EQ(code_of([] { stride_schedule(3, 9, 8); }), Errc::InvalidRange);
  EXPECT_EQ(code_of([] { stride_schedule(3, 8, 40, 32); }), Errc::InvalidRange);
}

TEST(StrideSchedule, MonotoneWithExactEnds) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const int k = 1 + static_cast<int>(rng.index(40));
    const int a = 1 + static_cast<int>(rng.index(500));
    const int b = a + static_cast<int>(rng.index(500));
    const auto s = stride_schedule(k, a, b);
    ASSERT_EQ(s.size(), static_cast<size_t>(k));
    EXPECT_EQ(s.front(), a);
    if (k > 1) EXPECT_EQ(s.back(), b);
    for (int i = 1; i < k; ++i) EXPECT_GE(s[i], s[i - 1]);
  }
}

TEST(BlendKernelTest, Shapes) {
  const auto flat = blend_kernel(16, 0);
  for (float w : flat.weights) EXPECT_EQ(w, 1.0f);
  const auto k = blend_kernel(32, 8);
  for (float w : k.weights) EXPECT_GT(w, 0.0f);
  EXPECT_EQ(k.weight(16, 16), 1.0f);
  EXPECT_LT(k.weight(0, 16), k.weight(4, 16));
  EXPECT_FLOAT_EQ(k.weight(3, 10), k.weight(28, 10));  // symmetric
  EXPECT_EQ(code_of([] { blend_kernel(32, 17); }), Errc::InvalidMargin);
  EXPECT_EQ(code_of([] { blend_kernel(32, -1); }), Errc::InvalidMargin);
}

// Direct summation of kernel weights over a layout, then normalization.
void expect_partition_of_unity(int w, int h, int window, int stride, int margin) {
  const auto k = blend_kernel(window, margin);
  std::vector<double> sum(static_cast<size_t>(w) * h, 0.0);
  const auto origins = schedule_windows(w, h, window, stride);
  for (const auto& o : origins)
    for (int y = 0; y < window; ++y)
      for (int x = 0; x < window; ++x) sum[static_cast<size_t>(o.y + y) * w + o.x + x] += k.weight(x, y);
  std::vector<double> norm(sum.size(), 0.0);
  for (const auto& o : origins)
    for (int y = 0; y < window; ++y)
      for (int x = 0; x < window; ++x) {
        const size_t i = static_cast<size_t>(o.y + y) * w + o.x + x;
        norm[i] += k.weight(x, y) / sum[i];
      }
  for (double v : norm) ASSERT_NEAR(v, 1.0, 1e-6);
}

TEST(BlendKernelTest, PartitionOfUnity) {
  expect_partition_of_unity(48, 32, 32, 16, 8);  // two half-overlapping windows per row
  expect_partition_of_unity(32, 32, 32, 32, 16);
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const int window = 8 + static_cast<int>(rng.index(30));
    expect_partition_of_unity(window + static_cast<int>(rng.index(60)),
                              window + static_cast<int>(rng.index(60)), window,
                              1 + static_cast<int>(rng.index(window)),
                              static_cast<int>(rng.index(window / 2 + 1)));
  }
}

TEST(WindowCountTest, Examples) {
  const auto one = make_schedule(64, 64, 32, {16});
  EXPECT_EQ(window_count(one).total, 9u);
  EXPECT_DOUBLE_EQ(window_count(one).average, 9.0);
  // Per-axis counts 3, 3, 2 on a 64 canvas with window 32.
  const auto three = make_schedule(64, 64, 32, {16, 16, 32});
  EXPECT_EQ(window_count(three).total, 22u);
  EXPECT_NEAR(window_count(three).average, 7.33, 0.01);
}

TEST(WindowCountTest, ClosedFormMatchesEnumeration) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const int window = 4 + static_cast<int>(rng.index(60));
    const int w = 1 + static_cast<int>(rng.index(300)), h = 1 + static_cast<int>(rng.index(300));
    const auto strides = stride_schedule(1 + static_cast<int>(rng.index(6)),
                                         1 + static_cast<int>(rng.index(window / 2)), window,
                                         window);
    const auto a = window_count(make_schedule(w, h, window, strides));
    const auto b = window_count(w, h, window, strides);
    EXPECT_EQ(a.total, b.total);
    EXPECT_DOUBLE_EQ(a.average, b.average);
  }
}

TEST(Coverage, GapDetected) {
  auto s = make_schedule(64, 64, 32, {16, 32});
  EXPECT_NO_THROW(check_coverage(s));
  s.steps[1].origins.erase(s.steps[1].origins.begin() + 1);
  try {
    check_coverage(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ScheduleCoverageGap);
    EXPECT_EQ(e.index(), 1);
  }
}

Image oneshot(const Image& f, Enhancer& e, MosaicParams p, MosaicStats* st = nullptr) {
  ImageSink sink;
  const auto s = run_oneshot(f, e, p, sink);
  if (st) *st = s;
  return sink.image;
}

TEST(Oneshot, BicubicMatchesWholeImage) {
  const Image f = test::textured(96, 80, 17);
  BicubicEnhancer e;
  struct Cfg {
    double z;
    int window, stride, margin;
  };
  for (const Cfg& c : {Cfg{2, 64, 32, 16}, Cfg{4, 96, 48, 0}, Cfg{6.93, 128, 80, 24},
                       Cfg{3, 50, 17, 7}, Cfg{2.5, 40, 40, 0}}) {
    MosaicParams p;
    p.zoom = c.z;
    p.window = c.window;
    p.stride = c.stride;
    p.margin = c.margin;
    p.threads = 1;
    const Image out = oneshot(f, e, p);
    const Image ref = resample_bicubic(f, c.z);
    ASSERT_TRUE(out.same_shape(ref));
    EXPECT_LT(mean_abs_diff(out, ref), 1e-3) << c.z;
    if (c.z == std::floor(c.z)) EXPECT_LT(mean_abs_diff(out, ref), 1e-5) << c.z;
  }
}

TEST(Oneshot, CanvasSmallerThanWindow) {
  const Image f = test::textured(20, 16, 2);
  BicubicEnhancer e;
  MosaicParams p;
  p.zoom = 4;
  p.window = 1024;
  p.stride = 512;
  MosaicStats st;
  const Image out = oneshot(f, e, p, &st);
  EXPECT_EQ(st.windows, 1u);
  EXPECT_EQ(out.width, 80);
  EXPECT_LT(mean_abs_diff(out, resample_bicubic(f, 4)), 1e-5);
}

TEST(Oneshot, ConstantInput) {
  BicubicEnhancer e;
  MosaicParams p;
  p.zoom = 6.93;
  p.window = 100;
  p.stride = 60;
  p.margin = 20;
  for (float v : oneshot(Image(40, 30, 3, 0.42f), e, p).data) ASSERT_NEAR(v, 0.42f, 0.02f);
}

TEST(Oneshot, DeterministicAcrossThreadCounts) {
  const Image f = test::textured(64, 64, 5);
  BicubicEnhancer e;
  MosaicParams p;
  p.zoom = 3;
  p.window = 64;
  p.stride = 40;
  p.margin = 12;
  p.threads = 1;
  const Image a = oneshot(f, e, p);
  p.threads = 3;
  EXPECT_EQ(a.data, oneshot(f, e, p).data);
}

TEST(Oneshot, MemoryBound) {
  const Image f = test::textured(160, 120, 6);
  BicubicEnhancer e;
  MosaicParams p;
  p.zoom = 4;
  p.window = 128;
  p.stride = 64;
  p.margin = 16;
  p.threads = 1;
  const auto dir = test::temp_dir("mosaic_mem");
  BandWriter bands(dir, p.window);
  const auto st = run_oneshot(f, e, p, bands);
  const size_t band_h = p.window;
  const size_t budget = 3 * band_h * st.canvas_w * 3;
  EXPECT_LE(st.peak_values + bands.buffer_bytes() / 4, budget);
}

TEST(Oneshot, BandFilesRoundTrip) {
  const Image f = test::textured(50, 45, 8);
  BicubicEnhancer e;
  MosaicParams p;
  p.zoom = 2;
  p.window = 40;
  p.stride = 24;
  p.margin = 8;
  const auto dir = test::temp_dir("mosaic_bands");
  BandWriter w(dir, 40);
  run_oneshot(f, e, p, w);
  const BandReader r(dir);
  EXPECT_EQ(r.width(), 100);
  EXPECT_EQ(r.height(), 90);
  EXPECT_EQ(r.read_image().data, quantize8(oneshot(f, e, p)).data);
  const auto rows = r.read_rows(37, 53);
  EXPECT_EQ(rows.size(), 16u * 100 * 3);
}

class Failing : public BicubicEnhancer {
 public:
  Image enhance(const EnhanceRequest& r) override {
    if (r.origin_x > 0 && r.origin_y > 0) throw Error(Errc::ProtocolError, "boom");
    return BicubicEnhancer::enhance(r);
  }
};

TEST(Oneshot, EnhancerErrorCarriesWindow) {
  Failing e;
  MosaicParams p;
  p.zoom = 2;
  p.window = 32;
  p.stride = 16;
  p.margin = 0;
  p.threads = 1;
  try {
    oneshot(test::textured(32, 32, 1), e, p);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::ProtocolError);
    EXPECT_NE(std::string(err.what()).find("window at 16,16"), std::string::npos);
    EXPECT_EQ(err.index(), 4);
  }
}

// Pointwise nonlinear target: bicubic, then squared.
class SquaredBicubic : public BicubicEnhancer {
 public:
  Image enhance(const EnhanceRequest& r) override {
    Image out = BicubicEnhancer::enhance(r);
    for (float& v : out.data) v *= v;
    return out;
  }
};

Image iterative(const Image& f, Enhancer& e, const WindowSchedule& s, MosaicParams p) {
  ImageSink sink;
  run_iterative(f, e, s, p, sink);
  return sink.image;
}

TEST(Iterative, SingleWindowReachesIsolatedLimit) {
  const Image f = test::textured(40, 40, 3);
  IterativeProxy e(std::make_shared<SquaredBicubic>());
  MosaicParams p;
  p.zoom = 2;
  p.margin = 0;
  const auto sched = make_schedule(80, 80, 80, std::vector<int>(6, 80));
  const Image out = iterative(f, e, sched, p);
  Image want = resample_bicubic(f, 2);
  for (float& v : want.data) v *= v;
  for (size_t i = 0; i < want.data.size(); ++i) ASSERT_NEAR(out.data[i], want.data[i], 1e-6);
}

TEST(Iterative, CoincidingStridesEqualFixedRun) {
  const Image f = test::textured(48, 48, 4);
  IterativeProxy e(std::make_shared<SquaredBicubic>());
  MosaicParams p;
  p.zoom = 2;
  p.margin = 8;
  const Image a = iterative(f, e, make_schedule(96, 96, 48, stride_schedule(2, 24, 24)), p);
  const Image b = iterative(f, e, make_schedule(96, 96, 48, {24, 24}), p);
  EXPECT_EQ(a.data, b.data);
}

TEST(Iterative, ScheduleMustMatchCanvas) {
  IterativeProxy e(std::make_shared<BicubicEnhancer>());
  MosaicParams p;
  p.zoom = 2;
  EXPECT_EQ(code_of([&] { iterative(test::textured(40, 40, 1), e, make_schedule(70, 80, 40, {20}), p); }),
            Errc::DimensionMismatch);
  auto gap = make_schedule(80, 80, 40, {20});
  gap.steps[0].origins.pop_back();
  EXPECT_EQ(code_of([&] { iterative(test::textured(40, 40, 1), e, gap, p); }),
            Errc::ScheduleCoverageGap);
}

// Target with a per-window brightness offset: overlaps disagree, so window
// boundaries of the last step's layout leave seams.
class OffsetByWindow : public BicubicEnhancer {
 public:
  Image enhance(const EnhanceRequest& r) override {
    Image out = BicubicEnhancer::enhance(r);
    const float off = 0.04f * static_cast<float>((r.origin_x * 7 + r.origin_y * 13) % 5) - 0.08f;
    for (float& v : out.data) v = std::clamp(v + off, 0.0f, 1.0f);
    return out;
  }
};

TEST(Iterative, StrideVariationReducesSeams) {
  const Image f = test::textured(128, 128, 12);
  IterativeProxy e(std::make_shared<OffsetByWindow>());
  MosaicParams p;
  p.zoom = 2;
  p.margin = 0;
  const int window = 64, fixed = 32;
  const Image a = iterative(f, e, make_schedule(256, 256, window, stride_schedule(6, fixed, fixed)), p);
  const Image b = iterative(f, e, make_schedule(256, 256, window, stride_schedule(6, fixed, 48)), p);
  const double fixed_seams = seam_energy(a, window, fixed);
  const double varied_seams = seam_energy(b, window, fixed);
  EXPECT_GT(fixed_seams, 1.0);
  EXPECT_LE(varied_seams, fixed_seams);
}

TEST(SeamEnergy, Examples) {
  Image grad(128, 128, 3);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      for (int c = 0; c < 3; ++c) grad.at(x, y, c) = (x + y) / 256.0f;
  EXPECT_NEAR(seam_energy(grad, 32, 16), 1.0, 0.1);
  EXPECT_DOUBLE_EQ(seam_energy(Image(64, 64, 3, 0.3f), 32, 16), 1.0);
  Image seams = test::textured(128, 128, 3, 0.25);
  for (int o : axis_origins(128, 32, 16))
    for (int y = 0; y < 128; ++y)
      for (int c = 0; c < 3; ++c)
        if (o > 0) seams.at(o, y, c) = std::min(1.0f, seams.at(o, y, c) + 0.2f);
  EXPECT_GT(seam_energy(seams, 32, 16), 1.5);
  EXPECT_EQ(code_of([] { seam_energy(Image(16, 64, 3), 32, 16); }), Errc::TooSmall);
}

}  // namespace
}  // namespace uz
