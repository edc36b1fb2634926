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

// Upscales a PNG with the tiled one-shot mosaic and the bicubic enhancer,
// streaming the canvas to band files, then builds a Deep Zoom pyramid.
//
//   sample_tiled_upscale <input.png> <out_dir> [zoom=4] [window=512]

#include <cstdio>
#include <cstdlib>

#include "ultrazoom/metrics.hpp"
#include "ultrazoom/mosaic.hpp"
#include "ultrazoom/pyramid.hpp"

int main(int argc, char** argv) {
  using namespace uz;
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <input.png> <out_dir> [zoom=4] [window=512]\n", argv[0]);
    return 2;
  }
  const fs::path out = argv[2];
  MosaicParams p;
  p.zoom = argc > 3 ? std::atof(argv[3]) : 4.0;
  p.window = argc > 4 ? std::atoi(argv[4]) : 512;
  p.stride = p.window / 2;
  p.margin = p.window / 8;
  try {
    const Image full = read_png(argv[1], 3);
    BicubicEnhancer enhancer;
    BandWriter bands(out / "canvas", p.window);
    const MosaicStats st = run_oneshot(full, enhancer, p, bands);
    std::printf("canvas %dx%d from %zu windows, peak %zu resident values\n", st.canvas_w, st.canvas_h,
                st.windows, st.peak_values);
    std::printf("LR-MAE %.5f\n", lr_mae(full, BandReader(out / "canvas").read_image(), p.zoom));

    const PyramidStats ps = build_pyramid(BandReader(out / "canvas"), out / "result.dzi", PyramidParams{});
    std::printf("pyramid %s: %d levels, %zu tiles\n", (out / "result.dzi").c_str(), ps.levels, ps.tiles);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }
  return 0;
}
