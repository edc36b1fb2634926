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

// Pipeline stages behind the uz command. Each stage reads the artifacts of
// earlier stages from the output directory, so any stage can be re-run alone.
//
// Output layout:
//   registration.json, overlay.png      register
//   dataset/, alignment.json            build-dataset
//   bank.bin                            enhance-bank
//   canvas/, baseline_canvas/, schedule.json   mosaic
//   pyramid/result.dzi, pyramid/bicubic.dzi    pyramid
//   metrics.json, positions.json        metrics
//   run_manifest.json, FAILED           zoom

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultrazoom/dataset.hpp"
#include "ultrazoom/enhance.hpp"
#include "ultrazoom/external.hpp"
#include "ultrazoom/fixture.hpp"
#include "ultrazoom/metrics.hpp"
#include "ultrazoom/mosaic.hpp"
#include "ultrazoom/protocol.hpp"
#include "ultrazoom/pyramid.hpp"
#include "ultrazoom/tracker.hpp"

namespace uz {

inline constexpr const char* kVersion = "0.1.0";

inline void log_line(const std::string& stage, const std::string& msg) {
  std::cerr << "[uz " << stage << "] " << msg << "\n";
}

// Config -----------------------------------------------------------------------

struct PipelineConfig {
  nlohmann::json raw;  // effective config after overrides
  fs::path base_dir;   // relative paths resolve against this
  fs::path output;

  fs::path full;
  std::vector<fs::path> closeups, videos, tracks;

  RegistrationParams registration;
  DegradationRecipe degradation;

  int patch_size = 128;
  size_t count = 200;
  uint64_t seed = 1;

  std::string enhancer = "bicubic";  // bicubic | exemplar | external
  std::vector<std::string> command;
  double timeout_s = 300.0;
  int bank_tile = 16, bank_stride = 8;
  ExemplarParams exemplar;

  double zoom = 0.0;  // 0: 1 / median close-up scale
  int window = 1024, stride_min = 512, stride_max = 512, steps = 1, margin = 128;
  int band_height = 0;  // 0: window
  bool baseline = true;

  PyramidParams pyramid;
  PatchSampleSpec metrics{299, 3000, 0, {}};
  std::string metrics_region = "closeups";  // generated patches: "closeups" footprints or "canvas"
  fs::path positions_file;

  int threads = 0;
};

namespace pipeline_detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

// "a.b.c=value": value parsed as JSON, falling back to a plain string.
inline void apply_override(nlohmann::json& j, const std::string& expr) {
  const auto eq = expr.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(Errc::Config, "override must look like key.path=value: " + expr);
  const std::string key = expr.substr(0, eq), text = expr.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  nlohmann::json* node = &j;
  size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

}  // namespace pipeline_detail

// Parses and validates a config object. Every path named must exist.
inline PipelineConfig parse_config(nlohmann::json j, const fs::path& base_dir) {
  using namespace pipeline_detail;
  if (j.contains("config") && j.at("config").is_object()) j = j.at("config");  // run manifest
  PipelineConfig c;
  c.raw = j;
  c.base_dir = base_dir;
  try {
    c.output = resolve(base_dir, j.value("output", std::string("uz_out")));
    read_opt(j, "threads", c.threads);
    if (j.contains("capture")) {
      const auto& cap = j.at("capture");
      if (cap.contains("full")) c.full = resolve(base_dir, cap.at("full").get<std::string>());
      for (const auto& p : cap.value("closeups", nlohmann::json::array()))
        c.closeups.push_back(resolve(base_dir, p.get<std::string>()));
      for (const auto& p : cap.value("videos", nlohmann::json::array()))
        c.videos.push_back(resolve(base_dir, p.get<std::string>()));
      for (const auto& p : cap.value("tracks", nlohmann::json::array()))
        c.tracks.push_back(resolve(base_dir, p.get<std::string>()));
    }
    if (j.contains("registration")) {
      const auto& r = j.at("registration");
      read_opt(r, "segment_length", c.registration.segment_length);
      if (r.contains("grid")) {
        read_opt(r.at("grid"), "rows", c.registration.grid.rows);
        read_opt(r.at("grid"), "cols", c.registration.grid.cols);
        read_opt(r.at("grid"), "margin", c.registration.grid.margin);
      }
      if (r.contains("ransac")) {
        read_opt(r.at("ransac"), "inlier_threshold", c.registration.ransac.inlier_threshold);
        read_opt(r.at("ransac"), "iterations", c.registration.ransac.iterations);
        read_opt(r.at("ransac"), "seed", c.registration.ransac.seed);
      }
      if (r.contains("tracker")) {
        read_opt(r.at("tracker"), "patch_radius", c.registration.tracker.patch_radius);
        read_opt(r.at("tracker"), "search_radius", c.registration.tracker.search_radius);
        read_opt(r.at("tracker"), "min_zncc", c.registration.tracker.min_zncc);
      }
    }
    if (j.contains("degradation")) {
      const auto& d = j.at("degradation");
      read_opt(d, "extra_downsample", c.degradation.extra_downsample);
      read_opt(d, "jpeg_quality", c.degradation.jpeg_quality);
      read_opt(d, "blockiness_ratio_threshold", c.degradation.blockiness_ratio_threshold);
    }
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      read_opt(d, "patch_size", c.patch_size);
      read_opt(d, "count", c.count);
      read_opt(d, "seed", c.seed);
    }
    if (j.contains("enhancer")) {
      const auto& e = j.at("enhancer");
      read_opt(e, "kind", c.enhancer);
      read_opt(e, "command", c.command);
      read_opt(e, "timeout_s", c.timeout_s);
      read_opt(e, "tile", c.bank_tile);
      read_opt(e, "bank_stride", c.bank_stride);
      read_opt(e, "stride", c.exemplar.stride);
      read_opt(e, "blend_overlap", c.exemplar.blend_overlap);
      read_opt(e, "lambda", c.exemplar.lambda);
    }
    if (j.contains("mosaic")) {
      const auto& m = j.at("mosaic");
      read_opt(m, "zoom", c.zoom);
      read_opt(m, "window", c.window);
      read_opt(m, "stride_min", c.stride_min);
      c.stride_max = c.stride_min;
      read_opt(m, "stride_max", c.stride_max);
      read_opt(m, "steps", c.steps);
      read_opt(m, "margin", c.margin);
      read_opt(m, "band_height", c.band_height);
      read_opt(m, "baseline", c.baseline);
    }
    if (j.contains("pyramid")) {
      const auto& p = j.at("pyramid");
      read_opt(p, "tile_size", c.pyramid.tile_size);
      read_opt(p, "overlap", c.pyramid.overlap);
      read_opt(p, "format", c.pyramid.format);
      read_opt(p, "jpeg_quality", c.pyramid.jpeg_quality);
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      read_opt(m, "patch_size", c.metrics.patch_size);
      read_opt(m, "count", c.metrics.count);
      read_opt(m, "seed", c.metrics.seed);
      read_opt(m, "region", c.metrics_region);
      if (m.contains("positions_file"))
        c.positions_file = resolve(base_dir, m.at("positions_file").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Config, std::string("config: ") + e.what());
  }

  auto need_file = [](const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw Error(Errc::Config, std::string(what) + " not found: " + p.string());
  };
  if (!c.full.empty()) need_file(c.full, "full image");
  for (const auto& p : c.closeups) need_file(p, "close-up");
  for (const auto& p : c.videos)
    if (!fs::is_directory(p)) throw Error(Errc::Config, "video directory not found: " + p.string());
  for (const auto& p : c.tracks) need_file(p, "track file");
  if (!c.positions_file.empty()) need_file(c.positions_file, "positions file");

  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(Errc::Config, msg);
  };
  check(c.videos.empty() || c.videos.size() == c.closeups.size(),
        "capture.videos must list one directory per close-up");
  check(c.tracks.empty() || c.tracks.size() == c.closeups.size(),
        "capture.tracks must list one file per close-up");
  check(c.registration.segment_length >= 2, "registration.segment_length must be >= 2");
  check(c.patch_size >= 8, "dataset.patch_size must be >= 8");
  check(c.enhancer == "bicubic" || c.enhancer == "exemplar" || c.enhancer == "external",
        "enhancer.kind must be bicubic, exemplar or external");
  check(c.enhancer != "external" || !c.command.empty(), "enhancer.command is required for external");
  check(c.bank_tile >= 8 && c.bank_stride >= 1, "enhancer.tile must be >= 8, bank_stride >= 1");
  check(c.zoom == 0.0 || c.zoom > 1.0, "mosaic.zoom must exceed 1");
  check(c.window >= 8, "mosaic.window must be >= 8");
  check(c.stride_min >= 1 && c.stride_min <= c.stride_max && c.stride_max <= c.window,
        "mosaic strides must satisfy 1 <= stride_min <= stride_max <= window");
  check(c.steps >= 1, "mosaic.steps must be >= 1");
  check(c.margin >= 0 && 2 * c.margin <= c.window, "mosaic.margin must be in [0, window/2]");
  check(c.band_height >= 0, "mosaic.band_height must be >= 0");
  check(c.pyramid.tile_size >= 1 && c.pyramid.overlap >= 0 &&
            c.pyramid.overlap < c.pyramid.tile_size,
        "pyramid tile_size/overlap out of range");
  check(c.pyramid.format == "png" || c.pyramid.format == "jpeg", "pyramid.format must be png or jpeg");
  check(c.metrics.patch_size >= kMinFeaturePatch && c.metrics.count >= 2,
        "metrics.patch_size must be >= 32 and count >= 2");
  check(c.metrics_region == "closeups" || c.metrics_region == "canvas",
        "metrics.region must be closeups or canvas");
  return c;
}

inline PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides = {}) {
  if (!fs::exists(path)) throw Error(Errc::Config, "config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Config, "config " + path.string() + ": " + e.what());
  }
  fs::path base = fs::absolute(path).parent_path();
  if (j.contains("config") && j.at("config").is_object()) {  // run manifest
    if (j.contains("base_dir")) base = j.at("base_dir").get<std::string>();
    j = j.at("config");
  }
  for (const auto& o : overrides) pipeline_detail::apply_override(j, o);
  return parse_config(std::move(j), base);
}

inline int config_threads(const PipelineConfig& c) { return resolve_threads(c.threads); }

// Exemplar bank file ------------------------------------------------------------

inline void save_bank(const ExemplarBank& bank, const fs::path& path) {
  proto::Writer w;
  w.raw("UZBK", 4);
  w.u32(1);
  w.u32(static_cast<uint32_t>(bank.tile));
  w.u64(bank.entries.size());
  for (const auto& e : bank.entries) {
    w.u32(static_cast<uint32_t>(e.descriptor.size()));
    for (float v : e.descriptor) w.f32(v);
    w.u32(static_cast<uint32_t>(e.detail.width));
    w.u32(static_cast<uint32_t>(e.detail.height));
    w.u32(static_cast<uint32_t>(e.detail.channels));
    for (float v : e.detail.data) w.f32(v);
  }
  write_text_atomic(path, std::string(w.bytes.begin(), w.bytes.end()));
}

inline ExemplarBank load_bank(const fs::path& path) {
  const std::string s = read_text(path);
  if (s.size() < 8 || s.compare(0, 4, "UZBK") != 0)
    throw Error(Errc::CorruptStream, "not an exemplar bank: " + path.string());
  try {
    proto::Reader r(reinterpret_cast<const uint8_t*>(s.data()) + 4, s.size() - 4);
    if (r.u32() != 1) throw Error(Errc::CorruptStream, "unsupported bank version");
    ExemplarBank bank;
    bank.tile = static_cast<int>(r.u32());
    const uint64_t n = r.u64();
    for (uint64_t k = 0; k < n; ++k) {
      Exemplar e;
      e.descriptor.resize(r.u32());
      for (float& v : e.descriptor) v = r.f32();
      const int w = static_cast<int>(r.u32()), h = static_cast<int>(r.u32());
      const int c = static_cast<int>(r.u32());
      if (static_cast<uint64_t>(w) * h * c * 4 > r.remaining())
        throw Error(Errc::CorruptStream, "bank entry larger than the file");
      e.detail = Image(w, h, c);
      for (float& v : e.detail.data) v = r.f32();
      bank.entries.push_back(std::move(e));
    }
    return bank;
  } catch (const Error& e) {
    if (e.code() == Errc::ProtocolError) throw Error(Errc::CorruptStream, "truncated bank file");
    throw;
  }
}

// Stages ------------------------------------------------------------------------

struct RegisteredCapture {
  std::vector<SimilarityTransform2D> to_full;
  std::vector<double> scales;
};

inline RegisteredCapture read_registration(const PipelineConfig& c) {
  const fs::path p = c.output / "registration.json";
  if (!fs::exists(p)) throw Error(Errc::Config, "registration.json not found in " + c.output.string());
  RegisteredCapture rc;
  try {
    const auto j = nlohmann::json::parse(read_text(p));
    for (const auto& e : j.at("closeups")) {
      rc.to_full.push_back(e.at("transform_to_full").get<SimilarityTransform2D>());
      rc.scales.push_back(e.at("scale").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptStream, std::string("registration.json: ") + e.what());
  }
  if (rc.scales.size() != c.closeups.size())
    throw Error(Errc::Config, "registration.json does not match the configured close-ups");
  return rc;
}

// Footprints of the close-ups drawn on F in green.
inline Image registration_overlay(const Image& full, const std::vector<Image>& closeups,
                                  const std::vector<SimilarityTransform2D>& to_full) {
  Image out = gray_to_rgb(full);
  for (size_t i = 0; i < closeups.size(); ++i) {
    const auto fp = map_footprint(to_full[i], closeups[i].width, closeups[i].height);
    for (int e = 0; e < 4; ++e) {
      const Vec2 a = fp.quad[e], b = fp.quad[(e + 1) % 4];
      const int n = std::max(1, static_cast<int>(std::ceil(norm(b - a) * 4)));
      for (int k = 0; k <= n; ++k) {
        const Vec2 p = a + (static_cast<double>(k) / n) * (b - a);
        for (int dy = -1; dy <= 0; ++dy)
          for (int dx = -1; dx <= 0; ++dx) {
            const int x = static_cast<int>(std::lround(p.x)) + dx;
            const int y = static_cast<int>(std::lround(p.y)) + dy;
            if (x < 0 || y < 0 || x >= out.width || y >= out.height) continue;
            out.at(x, y, 0) = 0.0f;
            out.at(x, y, 1) = 1.0f;
            out.at(x, y, 2) = 0.0f;
          }
      }
    }
  }
  return out;
}

// Tracks each video (close-up i to the next capture, the last into F),
// chains segment transforms and writes per-close-up T and s.
inline nlohmann::json stage_register(const PipelineConfig& c) {
  if (c.full.empty() || c.closeups.empty())
    throw Error(Errc::Config, "register needs capture.full and capture.closeups");
  RegistrationParams rp = c.registration;
  rp.tracker.threads = config_threads(c);
  RegistrationResult reg;
  if (!c.tracks.empty()) {
    log_line("register", "track files provided; built-in tracker skipped");
    std::vector<TrackResult> tracks;
    for (const auto& p : c.tracks) {
      try {
        tracks.push_back(track_result_from_json(nlohmann::json::parse(read_text(p))));
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::Config, "track file " + p.string() + ": " + e.what());
      }
    }
    reg = register_from_tracks(tracks, rp);
  } else {
    if (c.videos.empty()) throw Error(Errc::Config, "register needs capture.videos or capture.tracks");
    std::vector<FrameDirectory> dirs;
    for (const auto& p : c.videos) dirs.emplace_back(p);
    reg = register_sequence(dirs, rp);
  }
  const Image full = read_png(c.full, 3);
  std::vector<Image> closeups;
  for (const auto& p : c.closeups) closeups.push_back(read_png(p, 3));

  nlohmann::json out;
  out["full"] = c.full.string();
  out["registration"] = registration_to_json(reg);
  out["tracks_override"] = !c.tracks.empty();
  out["closeups"] = nlohmann::json::array();
  std::vector<SimilarityTransform2D> to_full;
  for (size_t i = 0; i < closeups.size(); ++i) {
    std::vector<SimilarityTransform2D> ts;
    for (const auto& s : reg.segments)
      if (s.video >= i) ts.push_back(s.transform);
    const auto t = chain(ts);
    to_full.push_back(t);
    out["closeups"].push_back({{"path", c.closeups[i].string()},
                               {"transform_to_full", t},
                               {"scale", extract_scale(t)}});
    log_line("register", "close-up " + std::to_string(i) + ": s = " + std::to_string(extract_scale(t)));
  }
  fs::create_directories(c.output);
  write_text_atomic(c.output / "registration.json", out.dump(2));
  write_png(c.output / "overlay.png", registration_overlay(full, closeups, to_full));
  return out;
}

inline CaptureSet load_capture(const PipelineConfig& c) {
  const RegisteredCapture rc = read_registration(c);
  CaptureSet cs;
  cs.full = read_png(c.full, 3);
  for (const auto& p : c.closeups) cs.closeups.push_back(read_png(p, 3));
  cs.to_full = rc.to_full;
  cs.scales = rc.scales;
  return cs;
}

inline AlignmentReport stage_build_dataset(const PipelineConfig& c) {
  const CaptureSet cs = load_capture(c);
  const int threads = config_threads(c);
  const auto prepared = prepare_all(cs, c.degradation, threads);
  const auto samples = sample_pairs(prepared, c.patch_size, c.count, c.seed);
  const auto m = write_dataset(c.output / "dataset", prepared, samples, c.patch_size, c.seed, threads);
  const auto report = verify_alignment(m, 0.1, threads);
  write_text_atomic(c.output / "alignment.json", alignment_to_json(report).dump(2));
  log_line("build-dataset", std::to_string(m.entries.size()) + " pairs; alignment mean " +
                                std::to_string(report.mean) + ", max " + std::to_string(report.max) +
                                ", flagged " + std::to_string(report.flagged));
  return report;
}

inline size_t stage_enhance_bank(const PipelineConfig& c) {
  const auto m = read_manifest(c.output / "dataset");
  const auto bank = build_exemplar_bank(m, c.bank_tile, c.bank_stride, config_threads(c));
  save_bank(bank, c.output / "bank.bin");
  log_line("enhance-bank", std::to_string(bank.size()) + " exemplars");
  return bank.size();
}

inline std::shared_ptr<Enhancer> make_enhancer(const PipelineConfig& c) {
  if (c.enhancer == "bicubic") return std::make_shared<BicubicEnhancer>();
  if (c.enhancer == "exemplar")
    return std::make_shared<ExemplarEnhancer>(
        std::make_shared<const ExemplarBank>(load_bank(c.output / "bank.bin")), c.exemplar);
  return std::make_shared<ExternalEnhancer>(c.command, c.timeout_s);
}

inline double resolve_zoom(const PipelineConfig& c) {
  if (c.zoom > 0.0) return c.zoom;
  if (c.closeups.empty()) throw Error(Errc::Config, "mosaic.zoom is required without close-ups");
  auto scales = read_registration(c).scales;
  std::sort(scales.begin(), scales.end());
  return 1.0 / scales[scales.size() / 2];
}

struct MosaicReport {
  double zoom = 0.0;
  MosaicStats stats;
  MosaicStats baseline;
  nlohmann::json schedule;
};

inline MosaicStats run_mosaic(const Image& full, std::shared_ptr<Enhancer> enhancer,
                              const PipelineConfig& c, double z, const fs::path& dir,
                              nlohmann::json* schedule_json) {
  MosaicParams p;
  p.zoom = z;
  p.threads = config_threads(c);
  p.work_dir = c.output;
  const int W = canvas_size(full.width, z), H = canvas_size(full.height, z);
  p.window = std::min({c.window, W, H});
  p.stride = std::min(c.stride_min, p.window);
  p.margin = std::min(c.margin, p.window / 2);
  if (p.window != c.window)
    log_line("mosaic", "window clamped to the canvas: " + std::to_string(p.window));
  BandWriter sink(dir, c.band_height > 0 ? c.band_height : p.window);
  if (c.steps == 1) {
    if (schedule_json) *schedule_json = schedule_to_json(make_schedule(W, H, p.window, {p.stride}));
    return run_oneshot(full, *enhancer, p, sink);
  }
  const auto strides =
      stride_schedule(c.steps, std::min(c.stride_min, p.window), std::min(c.stride_max, p.window), p.window);
  const auto sched = make_schedule(W, H, p.window, strides);
  if (schedule_json) *schedule_json = schedule_to_json(sched);
  std::shared_ptr<Enhancer> it = enhancer;
  if (enhancer->descriptor().mode != EnhanceMode::Iterative)
    it = std::make_shared<IterativeProxy>(enhancer);
  return run_iterative(full, *it, sched, p, sink);
}

inline MosaicReport stage_mosaic(const PipelineConfig& c) {
  if (c.full.empty()) throw Error(Errc::Config, "mosaic needs capture.full");
  const Image full = read_png(c.full, 3);
  MosaicReport r;
  r.zoom = resolve_zoom(c);
  r.stats = run_mosaic(full, make_enhancer(c), c, r.zoom, c.output / "canvas", &r.schedule);
  write_text_atomic(c.output / "schedule.json", r.schedule.dump(2));
  if (c.baseline && c.enhancer != "bicubic") {
    PipelineConfig b = c;
    b.steps = 1;
    r.baseline = run_mosaic(full, std::make_shared<BicubicEnhancer>(), b, r.zoom,
                            c.output / "baseline_canvas", nullptr);
  } else if (c.baseline) {
    fs::remove_all(c.output / "baseline_canvas");
  }
  log_line("mosaic", "zoom " + std::to_string(r.zoom) + ", canvas " + std::to_string(r.stats.canvas_w) +
                         "x" + std::to_string(r.stats.canvas_h) + ", " +
                         std::to_string(r.stats.windows) + " enhancer calls");
  return r;
}

inline std::vector<fs::path> stage_pyramid(const PipelineConfig& c) {
  PyramidParams p = c.pyramid;
  p.threads = config_threads(c);
  std::vector<fs::path> out;
  out.push_back(c.output / "pyramid" / "result.dzi");
  build_pyramid(BandReader(c.output / "canvas"), out.back(), p);
  const fs::path base = c.enhancer == "bicubic" ? c.output / "canvas" : c.output / "baseline_canvas";
  if (c.baseline && fs::exists(base / "header.json")) {
    out.push_back(c.output / "pyramid" / "bicubic.dzi");
    build_pyramid(BandReader(base), out.back(), p);
  }
  log_line("pyramid", "wrote " + std::to_string(out.size()) + " pyramid(s)");
  return out;
}

// LR-MAE over a streamed canvas, one strip of F rows at a time.
inline double lr_mae_streamed(const Image& f, const BandReader& g, double z) {
  if (g.width() != scaled_size(f.width, z) || g.height() != scaled_size(f.height, z))
    throw Error(Errc::DimensionMismatch, "canvas dims must be round(input dims * zoom)");
  const AxisMap mx = axis_for_factor(f.width, 1.0 / z);
  const AxisMap my = axis_for_factor(f.height, 1.0 / z);
  const auto taps = detail::build_taps(my, g.height());
  double acc = 0.0;
  constexpr int kStrip = 64;
  for (int y0 = 0; y0 < f.height; y0 += kStrip) {
    const int y1 = std::min(f.height, y0 + kStrip);
    int g0 = g.height(), g1 = 0;
    for (int y = y0; y < y1; ++y)
      for (int t = 0; t < taps.count[y]; ++t) {
        const int idx = taps.index[taps.first[y] + t];
        g0 = std::min(g0, idx);
        g1 = std::max(g1, idx + 1);
      }
    const auto rows = g.read_rows(g0, g1);
    const Image band = from_bytes(rows.data(), g.width(), g1 - g0, 3);
    const AxisMap sy{y1 - y0, my.step, my.start + y0 * my.step - g0};
    const Image down = resample_axes(band, mx, sy);
    const Image ref = crop(f, {0, y0, f.width, y1});
    acc += mean_abs_diff(ref, down) * static_cast<double>(ref.data.size());
  }
  return acc / static_cast<double>(f.data.size());
}

inline Image read_patch(const BandReader& g, PatchPosition p, int size) {
  const auto rows = g.read_rows(p.y, p.y + size);
  Image out(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int ch = 0; ch < 3; ++ch)
        out.at(x, y, ch) = rows[(static_cast<size_t>(y) * g.width() + p.x + x) * 3 + ch] / 255.0f;
  return out;
}

inline std::vector<std::vector<double>> canvas_features(const BandReader& g,
                                                        const std::vector<PatchPosition>& pos,
                                                        int size, int threads) {
  std::vector<std::vector<double>> out(pos.size());
  parallel_for(pos.size(), threads, [&](size_t i) { out[i] = patch_features(read_patch(g, pos[i], size)); });
  return out;
}

// Canvas patch positions inside the close-up footprints, so generated and real
// patches show the same scene content. The count is split evenly over the
// close-ups whose footprint box holds a patch; empty if none does.
inline std::vector<PatchPosition> footprint_positions(const PipelineConfig& c, double z, int cw, int ch,
                                                      const PatchSampleSpec& spec) {
  const RegisteredCapture rc = read_registration(c);
  struct Box {
    size_t index;
    int x0, y0, x1, y1;
  };
  std::vector<Box> boxes;
  for (size_t i = 0; i < c.closeups.size() && i < rc.to_full.size(); ++i) {
    const Image cu = read_png(c.closeups[i], 3);
    const Footprint fp = map_footprint(rc.to_full[i], cu.width, cu.height);
    const Box b{i, std::max(0, static_cast<int>(std::ceil(fp.x0 * z))),
                std::max(0, static_cast<int>(std::ceil(fp.y0 * z))),
                std::min(cw, static_cast<int>(std::floor(fp.x1 * z))),
                std::min(ch, static_cast<int>(std::floor(fp.y1 * z)))};
    if (b.x1 - b.x0 >= spec.patch_size && b.y1 - b.y0 >= spec.patch_size) boxes.push_back(b);
  }
  std::vector<PatchPosition> out;
  if (boxes.empty()) return out;
  const int per = static_cast<int>((spec.count + boxes.size() - 1) / boxes.size());
  for (const Box& b : boxes) {
    const PatchSampleSpec s{spec.patch_size, per, spec.seed + 101 + b.index, {}};
    for (const auto& p : sample_patch_positions(b.x1 - b.x0, b.y1 - b.y0, s))
      out.push_back({p.x + b.x0, p.y + b.y0});
  }
  return out;
}

inline nlohmann::json stage_metrics(const PipelineConfig& c) {
  const int threads = config_threads(c);
  const double z = resolve_zoom(c);
  const Image full = read_png(c.full, 3);
  const BandReader canvas(c.output / "canvas");
  const int size = std::min({c.metrics.patch_size, canvas.width(), canvas.height()});

  PatchSampleSpec spec = c.metrics;
  spec.patch_size = size;
  std::vector<PatchPosition> positions;
  fs::path positions_file = c.positions_file.empty() ? c.output / "positions.json" : c.positions_file;
  if (!c.positions_file.empty()) {
    const auto j = nlohmann::json::parse(read_text(c.positions_file));
    spec.patch_size = j.at("patch_size").get<int>();
    spec.positions = j.at("positions").get<std::vector<PatchPosition>>();
  }
  if (spec.positions.empty() && spec.count > 0 && c.metrics_region == "closeups") {
    spec.positions = footprint_positions(c, z, canvas.width(), canvas.height(), spec);
    if (spec.positions.empty()) log_line("metrics", "no close-up footprint holds a patch; sampling the whole canvas");
  }
  positions = sample_patch_positions(canvas.width(), canvas.height(), spec);
  if (c.positions_file.empty())
    write_text_atomic(positions_file,
                      nlohmann::json{{"patch_size", spec.patch_size}, {"positions", positions}}.dump());

  // Reference patches come from the close-ups at their native resolution.
  std::vector<std::vector<double>> real;
  for (size_t i = 0; i < c.closeups.size(); ++i) {
    const Image cu = read_png(c.closeups[i], 3);
    if (cu.width < spec.patch_size || cu.height < spec.patch_size) continue;
    PatchSampleSpec rs{spec.patch_size,
                       static_cast<int>((positions.size() + c.closeups.size() - 1) / c.closeups.size()),
                       c.metrics.seed + 1 + i, {}};
    const auto f = extract_features(cu, sample_patch_positions(cu.width, cu.height, rs), rs.patch_size, threads);
    real.insert(real.end(), f.begin(), f.end());
  }

  nlohmann::json report;
  report["lr_mae"] = lr_mae_streamed(full, canvas, z);
  report["patch_spec"] = patch_spec_json(spec);
  report["positions_file"] = positions_file.string();
  report["zoom"] = z;
  auto distribution = [&](const BandReader& g, nlohmann::json& into) {
    if (real.size() < 2 || positions.size() < 2) {
      into["frechet"] = nullptr;
      into["kid"] = nullptr;
      return;
    }
    const auto d = compare_features(real, canvas_features(g, positions, spec.patch_size, threads));
    into["frechet"] = d.frechet;
    into["kid"] = d.kid;
  };
  distribution(canvas, report);
  if (fs::exists(c.output / "baseline_canvas" / "header.json")) {
    const BandReader base(c.output / "baseline_canvas");
    nlohmann::json b;
    b["lr_mae"] = lr_mae_streamed(full, base, z);
    distribution(base, b);
    report["baseline"] = b;
  }
  write_text_atomic(c.output / "metrics.json", report.dump(2));
  log_line("metrics", report.dump());
  return report;
}

// End to end. On failure the stage name is written to FAILED and earlier
// artifacts are kept.
inline nlohmann::json stage_zoom(const PipelineConfig& c) {
  fs::create_directories(c.output);
  fs::remove(c.output / "FAILED");
  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = c.raw;
  manifest["base_dir"] = c.base_dir.string();
  manifest["threads"] = config_threads(c);
  manifest["seeds"] = {{"dataset", c.seed},
                       {"ransac", c.registration.ransac.seed},
                       {"metrics", c.metrics.seed}};
  manifest["stages"] = nlohmann::json::array();
  std::string current;
  auto timed = [&](const std::string& name, const std::function<void()>& fn) {
    current = name;
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["stages"].push_back({{"stage", name}, {"seconds", s}});
  };
  try {
    if (!c.closeups.empty()) {
      timed("register", [&] { stage_register(c); });
      timed("build-dataset", [&] { stage_build_dataset(c); });
      if (c.enhancer == "exemplar") timed("enhance-bank", [&] { stage_enhance_bank(c); });
    }
    timed("mosaic", [&] { manifest["zoom"] = stage_mosaic(c).zoom; });
    timed("pyramid", [&] { stage_pyramid(c); });
    if (!c.closeups.empty()) timed("metrics", [&] { manifest["metrics"] = stage_metrics(c); });
  } catch (const std::exception& e) {
    manifest["failed"] = {{"stage", current}, {"error", e.what()}};
    write_text_atomic(c.output / "run_manifest.json", manifest.dump(2));
    write_text(c.output / "FAILED", current + ": " + e.what() + "\n");
    throw;
  }
  write_text_atomic(c.output / "run_manifest.json", manifest.dump(2));
  return manifest;
}

// Synthetic capture plus a ready-to-run config.json.
inline nlohmann::json make_fixture_dir(const FixtureSpec& spec, const fs::path& dir, int threads = 1) {
  const Fixture f = make_fixture(spec);
  nlohmann::json gt = write_fixture(f, dir, threads);
  gt["spec"] = {{"width", spec.width},
                {"height", spec.height},
                {"closeup_zoom", spec.closeup_zoom},
                {"full_zoom", spec.full_zoom},
                {"seed", spec.seed}};
  write_text_atomic(dir / "ground_truth.json", gt.dump(2));
  nlohmann::json cfg;
  cfg["output"] = "out";
  cfg["capture"]["full"] = "full.png";
  cfg["capture"]["closeups"] = nlohmann::json::array();
  cfg["capture"]["videos"] = nlohmann::json::array();
  for (size_t i = 0; i < gt["closeups"].size(); ++i) {
    cfg["capture"]["closeups"].push_back(gt["closeups"][i]["path"]);
    cfg["capture"]["videos"].push_back(gt["videos"][i]["path"]);
  }
  // Patches big enough that the most distant close-up still yields 24 px LR patches.
  const int side = std::min(spec.width, spec.height);
  const double s_min = *std::min_element(spec.closeup_zoom.begin(), spec.closeup_zoom.end()) / spec.full_zoom;
  const int patch = std::min(side, std::max(32, static_cast<int>(std::ceil(24.0 / s_min))));
  cfg["dataset"] = {{"patch_size", patch}, {"count", 200}, {"seed", 1}};
  cfg["enhancer"] = {{"kind", "bicubic"}};
  cfg["mosaic"] = {{"window", 256}, {"stride_min", 128}, {"stride_max", 128}, {"steps", 1}, {"margin", 32}};
  cfg["pyramid"] = {{"tile_size", 256}, {"overlap", 1}, {"format", "png"}};
  cfg["metrics"] = {{"patch_size", 64}, {"count", 200}, {"seed", 0}};
  write_text_atomic(dir / "config.json", cfg.dump(2));
  return gt;
}

}  // namespace uz
