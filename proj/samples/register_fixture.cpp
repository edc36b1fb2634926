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

// Renders a synthetic dolly-out capture, registers the close-up to the full
// view with the built-in tracker, and compares the recovered scale and
// footprint with the ground truth.
//
//   sample_register [full_zoom=12] [size=192]

#include <cstdio>
#include <cstdlib>

#include "ultrazoom/fixture.hpp"
#include "ultrazoom/tracker.hpp"

int main(int argc, char** argv) {
  using namespace uz;
  FixtureSpec spec;
  spec.full_zoom = argc > 1 ? std::atof(argv[1]) : 12.0;
  spec.width = spec.height = argc > 2 ? std::atoi(argv[2]) : 192;
  spec.closeup_zoom = {1.0};
  try {
    const Fixture fx = make_fixture(spec);
    const ProceduralTexture tex(spec.seed);
    const std::vector<FrameSequence> videos = {FrameSequence{render_video_luma(tex, fx, 0)}};
    std::printf("rendered %zu frames at %dx%d\n", videos[0].frames.size(), spec.width, spec.height);

    const RegistrationResult r = register_sequence(videos);
    for (const auto& s : r.segments)
      std::printf("segment %zu-%zu: %zu tracks, %zu inliers, scale %.4f\n", s.range.start_frame,
                  s.range.end_frame, s.tracks, s.inliers, extract_scale(s.transform));

    const SimilarityTransform2D truth = fx.closeup_to_full(0);
    std::printf("cumulative scale %.6f (truth %.6f, rel err %.4f)\n", r.scale, extract_scale(truth),
                std::abs(r.scale / extract_scale(truth) - 1.0));
    const Footprint got = map_footprint(r.cumulative, spec.width, spec.height);
    const Footprint want = map_footprint(truth, spec.width, spec.height);
    std::printf("footprint in full view: [%.1f, %.1f]-[%.1f, %.1f] (truth [%.1f, %.1f]-[%.1f, %.1f])\n",
                got.x0, got.y0, got.x1, got.y1, want.x0, want.y0, want.x1, want.y1);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }
  return 0;
}
