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

// Paired patch dataset: colour-matched close-ups, their degraded versions,
// and aligned (hr, lr) crops sampled from both.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultrazoom/degrade.hpp"
#include "ultrazoom/error.hpp"
#include "ultrazoom/geometry.hpp"
#include "ultrazoom/image.hpp"
#include "ultrazoom/io.hpp"
#include "ultrazoom/parallel.hpp"
#include "ultrazoom/rng.hpp"

namespace uz {

struct CaptureSet {
  Image full;
  std::vector<Image> closeups;
  std::vector<fs::path> videos;                // V_i; may be empty once registered
  std::vector<SimilarityTransform2D> to_full;  // T_{C_i -> F}
  std::vector<double> scales;                  // s_i

  void validate() const {
    const size_t n = closeups.size();
    require(n >= 1, Errc::InvalidArgument, "capture set needs at least one close-up");
    require(videos.empty() || videos.size() == n, Errc::InvalidArgument,
            "video count must equal close-up count");
    require(to_full.size() == n && scales.size() == n, Errc::InvalidArgument,
            "every close-up needs a transform and a scale");
    for (double s : scales)
      require(s > 0.0 && s < 1.0, Errc::InvalidArgument, "close-up scale must be in (0,1)");
  }
};

struct PreparedCloseup {
  Image matched;  // C~_i
  Degraded degraded;  // D(C~_i) and the resolved recipe
  Rect region;        // footprint aabb in F, clipped
  bool clipped = false;
};

// Integer bounding box of the close-up footprint in F (before clipping).
inline Rect footprint_rect(const CaptureSet& cs, size_t i) {
  const auto fp = map_footprint(cs.to_full[i], cs.closeups[i].width, cs.closeups[i].height);
  return {static_cast<int>(std::floor(fp.x0)), static_cast<int>(std::floor(fp.y0)),
          static_cast<int>(std::ceil(fp.x1)), static_cast<int>(std::ceil(fp.y1))};
}

inline PreparedCloseup prepare_closeup(const CaptureSet& cs, size_t i,
                                       const DegradationRecipe& base = {}) {
  require(i < cs.closeups.size(), Errc::InvalidArgument, "close-up index out of range");
  PreparedCloseup out;
  const Rect raw = footprint_rect(cs, i);
  out.region = intersect(raw, {0, 0, cs.full.width, cs.full.height});
  if (out.region.empty())
    throw Error(Errc::FootprintOutsideImage, "close-up footprint does not overlap the full image",
                i);
  out.clipped = !(out.region == raw);
  if (out.clipped)
    std::fprintf(stderr, "warning: close-up %zu footprint clipped to the full image\n", i);

  out.matched = match_color(cs.closeups[i], color_stats(cs.full, out.region));
  DegradationRecipe recipe = base;
  recipe.scale = cs.scales[i];
  std::optional<double> reference;
  if (out.region.width() >= 16 && out.region.height() >= 16)
    reference = blockiness(crop(cs.full, out.region), out.region.x0, out.region.y0);
  out.degraded = degrade(out.matched, recipe, reference);
  return out;
}

inline std::vector<PreparedCloseup> prepare_all(const CaptureSet& cs,
                                                const DegradationRecipe& base = {},
                                                int threads = 0) {
  cs.validate();
  std::vector<PreparedCloseup> out(cs.closeups.size());
  parallel_for(out.size(), resolve_threads(threads),
               [&](size_t i) { out[i] = prepare_closeup(cs, i, base); });
  return out;
}

// One sampled pair, by position. Pixels are cut on demand.
struct PairSample {
  int closeup = 0;
  int x = 0, y = 0;        // hr origin in close-up pixels
  int lr_x = 0, lr_y = 0;  // lr origin in degraded pixels
  int lr_size = 0;
};

inline int lr_patch_size(int patch_size, double scale) {
  return static_cast<int>(std::lround(patch_size * scale));
}

// Draw order per sample: close-up index, x, y.
inline std::vector<PairSample> sample_pairs(const std::vector<PreparedCloseup>& prepared,
                                            int patch_size, size_t count, uint64_t seed) {
  require(!prepared.empty(), Errc::InvalidArgument, "no close-ups to sample from");
  for (size_t i = 0; i < prepared.size(); ++i) {
    const Image& c = prepared[i].matched;
    if (patch_size < 1 || patch_size > std::min(c.width, c.height))
      throw Error(Errc::PatchTooLarge, "patch size exceeds close-up dimensions", i);
    if (lr_patch_size(patch_size, prepared[i].degraded.recipe.scale) < 16)
      throw Error(Errc::DegradedPatchTooSmall, "degraded patch would be smaller than 16 px", i);
  }
  Rng rng(seed);
  std::vector<PairSample> out;
  out.reserve(count);
  for (size_t k = 0; k < count; ++k) {
    PairSample p;
    p.closeup = static_cast<int>(rng.index(prepared.size()));
    const PreparedCloseup& pc = prepared[p.closeup];
    p.x = static_cast<int>(rng.index(pc.matched.width - patch_size + 1));
    p.y = static_cast<int>(rng.index(pc.matched.height - patch_size + 1));
    const double s = pc.degraded.recipe.scale;
    const Image& d = pc.degraded.image;
    p.lr_size = lr_patch_size(patch_size, s);
    p.lr_x = std::clamp(static_cast<int>(std::lround(p.x * s)), 0, d.width - p.lr_size);
    p.lr_y = std::clamp(static_cast<int>(std::lround(p.y * s)), 0, d.height - p.lr_size);
    out.push_back(p);
  }
  return out;
}

struct ManifestEntry {
  int id = 0;
  int closeup = 0;
  std::string hr, lr;  // relative to the manifest directory
  int x = 0, y = 0;
  int lr_x = 0, lr_y = 0;
  int lr_size = 0;
};

struct DatasetManifest {
  fs::path root;
  uint64_t seed = 0;
  int patch_size = 0;
  std::vector<double> scales;
  std::vector<DegradationRecipe> recipes;
  std::vector<ManifestEntry> entries;

  Image load_hr(size_t k) const { return read_png(root / entries[k].hr, 3); }
  Image load_lr(size_t k) const { return read_png(root / entries[k].lr, 3); }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["patch_size"] = m.patch_size;
  j["closeups"] = nlohmann::json::array();
  for (size_t i = 0; i < m.scales.size(); ++i)
    j["closeups"].push_back({{"scale", m.scales[i]}, {"recipe", m.recipes[i]}});
  j["pairs"] = nlohmann::json::array();
  for (const auto& e : m.entries)
    j["pairs"].push_back({{"id", e.id},
                          {"closeup", e.closeup},
                          {"hr", e.hr},
                          {"lr", e.lr},
                          {"origin", {e.x, e.y}},
                          {"lr_origin", {e.lr_x, e.lr_y}},
                          {"lr_size", e.lr_size}});
  return j;
}

// Writes pairs/NNNNNN_{hr,lr}.png and manifest.json (last, atomically).
inline DatasetManifest write_dataset(const fs::path& dir,
                                     const std::vector<PreparedCloseup>& prepared,
                                     const std::vector<PairSample>& samples, int patch_size,
                                     uint64_t seed, int threads = 0) {
  fs::create_directories(dir / "pairs");
  DatasetManifest m;
  m.root = dir;
  m.seed = seed;
  m.patch_size = patch_size;
  for (const auto& p : prepared) {
    m.scales.push_back(p.degraded.recipe.scale);
    m.recipes.push_back(p.degraded.recipe);
  }
  m.entries.resize(samples.size());
  parallel_for(samples.size(), resolve_threads(threads), [&](size_t k) {
    const PairSample& s = samples[k];
    const PreparedCloseup& pc = prepared[s.closeup];
    char base[32];
    std::snprintf(base, sizeof base, "pairs/%06zu", k);
    ManifestEntry e{static_cast<int>(k), s.closeup, std::string(base) + "_hr.png",
                    std::string(base) + "_lr.png", s.x, s.y, s.lr_x, s.lr_y, s.lr_size};
    write_png(dir / e.hr, crop(pc.matched, {s.x, s.y, s.x + patch_size, s.y + patch_size}));
    write_png(dir / e.lr, crop(pc.degraded.image,
                               {s.lr_x, s.lr_y, s.lr_x + s.lr_size, s.lr_y + s.lr_size}));
    m.entries[k] = std::move(e);
  });
  write_text_atomic(dir / "manifest.json", manifest_to_json(m).dump(1));
  return m;
}

inline DatasetManifest read_manifest(const fs::path& dir, bool check_files = true) {
  DatasetManifest m;
  m.root = dir;
  try {
    const auto j = nlohmann::json::parse(read_text(dir / "manifest.json"));
    m.seed = j.at("seed").get<uint64_t>();
    m.patch_size = j.at("patch_size").get<int>();
    for (const auto& c : j.at("closeups")) {
      m.scales.push_back(c.at("scale").get<double>());
      m.recipes.push_back(c.at("recipe").get<DegradationRecipe>());
    }
    for (const auto& p : j.at("pairs")) {
      ManifestEntry e;
      e.id = p.at("id").get<int>();
      e.closeup = p.at("closeup").get<int>();
      e.hr = p.at("hr").get<std::string>();
      e.lr = p.at("lr").get<std::string>();
      e.x = p.at("origin").at(0).get<int>();
      e.y = p.at("origin").at(1).get<int>();
      e.lr_size = p.value("lr_size", lr_patch_size(m.patch_size, m.scales.at(e.closeup)));
      if (p.contains("lr_origin")) {
        e.lr_x = p["lr_origin"].at(0).get<int>();
        e.lr_y = p["lr_origin"].at(1).get<int>();
      } else {
        e.lr_x = static_cast<int>(std::lround(e.x * m.scales.at(e.closeup)));
        e.lr_y = static_cast<int>(std::lround(e.y * m.scales.at(e.closeup)));
      }
      if (e.closeup < 0 || static_cast<size_t>(e.closeup) >= m.scales.size())
        throw Error(Errc::ManifestCorrupt, "pair refers to an unknown close-up", e.id);
      m.entries.push_back(std::move(e));
    }
  } catch (const Error& e) {
    if (e.code() == Errc::ManifestCorrupt) throw;
    throw Error(Errc::ManifestCorrupt, std::string("manifest unreadable: ") + e.what());
  } catch (const std::exception& e) {
    throw Error(Errc::ManifestCorrupt, std::string("manifest unreadable: ") + e.what());
  }
  if (check_files) {
    for (const auto& e : m.entries)
      for (const auto& f : {e.hr, e.lr})
        if (!fs::exists(dir / f))
          throw Error(Errc::ManifestCorrupt, "missing pair file " + f, e.id);
  }
  return m;
}

struct AlignmentEntry {
  int id = 0;
  double deviation = 0.0;  // mean abs, [0,1] scale
  bool flagged = false;
};

struct AlignmentReport {
  std::vector<AlignmentEntry> entries;
  double mean = 0.0;
  double max = 0.0;
  size_t flagged = 0;
};

// Recomputes the lr crop from the stored hr patch with the recorded recipe and
// sampling phase, and compares it with the stored lr patch.
inline AlignmentReport verify_alignment(const DatasetManifest& m, double flag_threshold = 0.1,
                                        int threads = 0) {
  AlignmentReport r;
  r.entries.resize(m.entries.size());
  parallel_for(m.entries.size(), resolve_threads(threads), [&](size_t k) {
    const ManifestEntry& e = m.entries[k];
    Image hr, lr;
    try {
      hr = m.load_hr(k);
      lr = m.load_lr(k);
    } catch (const Error& err) {
      throw Error(Errc::ManifestCorrupt, err.what(), e.id);
    }
    if (hr.width != m.patch_size || hr.height != m.patch_size || lr.width != e.lr_size ||
        lr.height != e.lr_size)
      throw Error(Errc::ManifestCorrupt, "pair dimensions differ from the manifest", e.id);
    const Rect lr_rect{e.lr_x, e.lr_y, e.lr_x + e.lr_size, e.lr_y + e.lr_size};
    const Image again = degrade_window(hr, m.recipes[e.closeup], e.x, e.y, lr_rect);
    const double dev = mean_abs_diff(again, lr);
    r.entries[k] = {e.id, dev, dev > flag_threshold};
  });
  for (const auto& e : r.entries) {
    r.mean += e.deviation;
    r.max = std::max(r.max, e.deviation);
    r.flagged += e.flagged;
  }
  if (!r.entries.empty()) r.mean /= r.entries.size();
  return r;
}

inline nlohmann::json alignment_to_json(const AlignmentReport& r) {
  nlohmann::json j{{"mean", r.mean}, {"max", r.max}, {"flagged", r.flagged}};
  j["pairs"] = nlohmann::json::array();
  for (const auto& e : r.entries)
    j["pairs"].push_back({{"id", e.id}, {"deviation", e.deviation}, {"flagged", e.flagged}});
  return j;
}

}  // namespace uz
