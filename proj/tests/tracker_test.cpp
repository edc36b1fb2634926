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

#include "ultrazoom/tracker.hpp"

#include <gtest/gtest.h>

#include "ultrazoom/fixture.hpp"

namespace uz {
namespace {

FrameSequence render_sequence(const std::vector<View>& views, uint64_t seed = 3) {
  const ProceduralTexture tex(seed);
  FrameSequence seq;
  for (const auto& v : views) seq.frames.push_back(to_luma(render_view(tex, v)));
  return seq;
}

TEST(InitGrid, Corners) {
  const auto pts = init_grid(100, 100, {2, 2, 0.0});
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_DOUBLE_EQ(pts[0].x, 0);
  EXPECT_DOUBLE_EQ(pts[0].y, 0);
  EXPECT_DOUBLE_EQ(pts[1].x, 99);
  EXPECT_DOUBLE_EQ(pts[2].y, 99);
  EXPECT_DOUBLE_EQ(pts[3].x, 99);
  EXPECT_DOUBLE_EQ(pts[3].y, 99);
}

TEST(InitGrid, MarginSpacing) {
  const auto pts = init_grid(100, 100, {3, 3, 0.1});
  ASSERT_EQ(pts.size(), 9u);
  // x in {10, 49.5, 89}.
  EXPECT_DOUBLE_EQ(pts[0].x, 10);
  EXPECT_DOUBLE_EQ(pts[1].x, 49.5);
  EXPECT_DOUBLE_EQ(pts[2].x, 89);
  EXPECT_DOUBLE_EQ(pts[8].y, 89);
}

TEST(InitGrid, Invalid) {
  auto code = [](GridParams g) {
    try {
      init_grid(100, 100, g);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::InvalidArgument;
  };
  EXPECT_EQ(code({1, 3, 0.1}), Errc::InvalidGrid);
  EXPECT_EQ(code({3, 3, 0.5}), Errc::InvalidGrid);
}

TEST(SplitSegments, Enumeration) {
  EXPECT_EQ(split_segments(10, 10), (std::vector<SegmentRange>{{0, 9}}));
  EXPECT_EQ(split_segments(10, 4), (std::vector<SegmentRange>{{0, 3}, {3, 6}, {6, 9}}));
  EXPECT_EQ(split_segments(2, 2), (std::vector<SegmentRange>{{0, 1}}));
  EXPECT_THROW(split_segments(1, 4), Error);
  EXPECT_THROW(split_segments(10, 1), Error);
}

TEST(SplitSegments, Properties) {
  for (size_t n = 2; n < 60; ++n)
    for (size_t len = 2; len < 20; ++len) {
      const auto segs = split_segments(n, len);
      EXPECT_EQ(segs.front().start_frame, 0u);
      EXPECT_EQ(segs.back().end_frame, n - 1);
      for (size_t i = 0; i < segs.size(); ++i) {
        EXPECT_LE(segs[i].end_frame - segs[i].start_frame + 1, len);
        EXPECT_GE(segs[i].end_frame - segs[i].start_frame + 1, 2u);
        if (i) EXPECT_EQ(segs[i].start_frame, segs[i - 1].end_frame);
      }
    }
}

TEST(TrackSegment, StaticSequence) {
  View v{0, 0, 1.0, 0.0, 128, 128};
  auto seq = render_sequence({v, v, v});
  const auto pts = init_grid(128, 128, {5, 5, 0.15});
  const auto tr = track_segment(seq, pts);
  for (size_t f = 0; f < 3; ++f)
    for (size_t p = 0; p < pts.size(); ++p) {
      EXPECT_TRUE(tr.ok(f, p));
      EXPECT_DOUBLE_EQ(tr.pos(f, p).x, pts[p].x);
      EXPECT_DOUBLE_EQ(tr.pos(f, p).y, pts[p].y);
    }
}

TEST(TrackSegment, ConstantShift) {
  std::vector<View> views;
  for (int f = 0; f < 5; ++f) views.push_back(View{-5.0 * f, -3.0 * f, 1.0, 0.0, 160, 160});
  auto seq = render_sequence(views);
  const auto pts = init_grid(160, 160, {6, 6, 0.2});
  const auto tr = track_segment(seq, pts);
  for (size_t f = 1; f < 5; ++f)
    for (size_t p = 0; p < pts.size(); ++p) {
      ASSERT_TRUE(tr.ok(f, p));
      EXPECT_NEAR(tr.pos(f, p).x - tr.pos(f - 1, p).x, 5.0, 0.5);
      EXPECT_NEAR(tr.pos(f, p).y - tr.pos(f - 1, p).y, 3.0, 0.5);
    }
}

TEST(TrackSegment, ZoomIsRadial) {
  std::vector<View> views;
  double z = 1.0;
  for (int f = 0; f < 4; ++f, z /= 1.05) views.push_back(View{0, 0, z, 0.0, 161, 161});
  auto seq = render_sequence(views);
  const auto pts = init_grid(161, 161, {5, 5, 0.2});
  const auto tr = track_segment(seq, pts);
  const Vec2 c{80, 80};
  for (size_t p = 0; p < pts.size(); ++p) {
    ASSERT_TRUE(tr.ok(3, p));
    const Vec2 d = tr.pos(3, p) - tr.pos(0, p);
    const Vec2 r = pts[p] - c;
    if (norm(r) < 1e-9) {
      EXPECT_LT(norm(d), 0.5);
    } else {
      EXPECT_GT(d.x * r.x + d.y * r.y, 0.0);  // outward
      // Expected radial displacement: r * (1.05^3 - 1).
      EXPECT_NEAR(norm(d), norm(r) * (std::pow(1.05, 3) - 1), 1.0);
    }
  }
}

TEST(TrackSegment, InvalidationIsMonotone) {
  // Content moves right fast: points near the right edge leave the frame.
  std::vector<View> views;
  for (int f = 0; f < 8; ++f) views.push_back(View{-8.0 * f, 0, 1.0, 0.0, 128, 128});
  auto seq = render_sequence(views);
  const auto pts = init_grid(128, 128, {6, 6, 0.05});
  const auto tr = track_segment(seq, pts);
  size_t lost = 0;
  for (size_t p = 0; p < pts.size(); ++p) {
    bool seen_invalid = false;
    for (size_t f = 0; f < tr.frame_count; ++f) {
      if (!tr.ok(f, p)) seen_invalid = true;
      if (seen_invalid) EXPECT_FALSE(tr.ok(f, p));
    }
    lost += seen_invalid;
  }
  EXPECT_GT(lost, 0u);
}

TEST(TrackSegment, FlatContentIsInvalid) {
  FrameSequence seq;
  seq.frames.assign(3, Image(64, 64, 1, 0.5f));
  const auto tr = track_segment(seq, init_grid(64, 64, {3, 3, 0.2}));
  for (size_t p = 0; p < tr.point_count; ++p) EXPECT_FALSE(tr.ok(1, p));
}

TEST(TrackSegment, Errors) {
  FrameSequence empty;
  try {
    track_segment(empty, {{1, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptySequence);
  }
}

TEST(TrackSegment, ThreadCountDoesNotChangeResult) {
  std::vector<View> views;
  double z = 1.0;
  for (int f = 0; f < 4; ++f, z *= 1.04) views.push_back(View{3.0 * f, 1.0 * f, z, 0.01 * f, 128, 128});
  auto seq = render_sequence(views);
  const auto pts = init_grid(128, 128, {8, 8, 0.1});
  TrackerParams one, four;
  one.threads = 1;
  four.threads = 4;
  const auto a = track_segment(seq, pts, one);
  const auto b = track_segment(seq, pts, four);
  EXPECT_EQ(a.valid, b.valid);
  for (size_t i = 0; i < a.positions.size(); ++i) {
    EXPECT_EQ(a.positions[i].x, b.positions[i].x);
    EXPECT_EQ(a.positions[i].y, b.positions[i].y);
  }
}

TEST(RegisterSequence, StaticVideo) {
  View v{0, 0, 1.0, 0.0, 128, 128};
  std::vector<FrameSequence> videos = {render_sequence({v, v, v, v})};
  const auto r = register_sequence(videos);
  EXPECT_LT(coeff_error(r.cumulative, SimilarityTransform2D::identity()), 1e-6);
  EXPECT_NEAR(r.scale, 1.0, 1e-9);
}

TEST(RegisterSequence, DollyOutRecoversScale) {
  FixtureSpec spec;
  spec.width = spec.height = 192;
  spec.closeup_zoom = {1.0};
  spec.full_zoom = 8.0;
  spec.max_zoom_step = std::pow(8.0, 1.0 / 39.0);
  const Fixture fx = make_fixture(spec);
  ASSERT_EQ(fx.videos[0].size(), 40u);
  const ProceduralTexture tex(spec.seed);
  std::vector<FrameSequence> videos = {FrameSequence{render_video_luma(tex, fx, 0)}};
  const auto r = register_sequence(videos);
  EXPECT_NEAR(r.scale / 0.125, 1.0, 0.02);
  // Segments share boundary frames and never carry a track across them.
  for (size_t i = 1; i < r.segments.size(); ++i)
    EXPECT_EQ(r.segments[i].range.start_frame, r.segments[i - 1].range.end_frame);
  for (const auto& s : r.segments) EXPECT_LE(s.tracks, 400u);
  // Translation agrees with ground truth at full-image resolution.
  const auto truth = fx.closeup_to_full(0);
  const Vec2 c{95.5, 95.5};
  EXPECT_LT(norm(r.cumulative.apply(c) - truth.apply(c)), 2.0);
}

TEST(RegisterSequence, TwoVideosChain) {
  FixtureSpec spec;
  spec.width = spec.height = 160;
  spec.closeup_zoom = {1.0, 2.0};
  spec.full_zoom = 4.0;
  const Fixture fx = make_fixture(spec);
  const ProceduralTexture tex(spec.seed);
  std::vector<FrameSequence> videos = {FrameSequence{render_video_luma(tex, fx, 0)},
                                       FrameSequence{render_video_luma(tex, fx, 1)}};
  const auto r = register_sequence(videos);
  EXPECT_NEAR(r.scale / 0.25, 1.0, 0.02);
  EXPECT_NEAR(fx.closeup_scale(0), 0.25, 1e-12);
}

TEST(RegisterSequence, TooFewTracksNamesSegment) {
  FrameSequence flat;
  flat.frames.assign(3, Image(64, 64, 1, 0.3f));
  std::vector<FrameSequence> videos = {flat};
  try {
    register_sequence(videos);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewValidTracks);
    EXPECT_EQ(e.index(), 0);
  }
}

TEST(TrackFile, JsonRoundTripAndIngestion) {
  // Tracks of a known transform, written and read back, register exactly.
  const auto truth = SimilarityTransform2D::from_params(0.9, 0.05, 4, -2);
  TrackResult tr;
  tr.frame_count = 3;
  const auto pts = init_grid(100, 100, {4, 4, 0.1});
  tr.point_count = pts.size();
  tr.positions.resize(3 * pts.size());
  tr.valid.assign(3 * pts.size(), 1);
  for (size_t p = 0; p < pts.size(); ++p) {
    tr.pos(0, p) = pts[p];
    tr.pos(1, p) = truth.apply(pts[p]);
    tr.pos(2, p) = truth.apply(truth.apply(pts[p]));
  }
  const auto back = track_result_from_json(track_result_to_json(tr));
  EXPECT_EQ(back.frame_count, 3u);
  RegistrationParams rp;
  rp.segment_length = 2;
  const auto r = register_from_tracks({back}, rp);
  EXPECT_EQ(r.segments.size(), 2u);
  EXPECT_LT(coeff_error(r.cumulative, compose(truth, truth)), 1e-9);

  auto bad = track_result_to_json(tr);
  bad["points"] = 3;
  EXPECT_THROW(track_result_from_json(bad), Error);
}

}  // namespace
}  // namespace uz
