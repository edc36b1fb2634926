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

// clang-format off
#include <cstdio>
#include <csetjmp>
#include <jpeglib.h>
// clang-format on

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultrazoom/error.hpp"
#include "ultrazoom/image.hpp"
#include "ultrazoom/io.hpp"
#include "ultrazoom/resample.hpp"

namespace uz {

// Per-channel 256-bin histograms (normalized to sum 1) and their CDFs.
struct ColorStats {
  int channels = 0;
  std::vector<std::array<double, 256>> hist;
  std::vector<std::array<double, 256>> cdf;
};

inline int value_bin(float v) {
  return static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline ColorStats color_stats(const Image& img, const Rect& region) {
  const Rect r = intersect(region, {0, 0, img.width, img.height});
  if (r.empty() || r.width() != region.width() || r.height() != region.height())
    throw Error(Errc::EmptyRegion, "color_stats region empty or outside image");
  ColorStats s;
  s.channels = img.channels;
  s.hist.assign(img.channels, {});
  s.cdf.assign(img.channels, {});
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x)
      for (int c = 0; c < img.channels; ++c) s.hist[c][value_bin(img.at(x, y, c))] += 1.0;
  const double n = static_cast<double>(r.width()) * r.height();
  for (int c = 0; c < img.channels; ++c) {
    double acc = 0.0;
    for (int b = 0; b < 256; ++b) {
      s.hist[c][b] /= n;
      acc += s.hist[c][b];
      s.cdf[c][b] = acc;
    }
    s.cdf[c][255] = 1.0;
  }
  return s;
}

inline ColorStats color_stats(const Image& img) {
  return color_stats(img, {0, 0, img.width, img.height});
}

// lut[c][b]: output bin for source bin b, the smallest target bin whose CDF
// reaches the source CDF. Non-decreasing in b.
inline std::vector<std::array<int, 256>> matching_lut(const ColorStats& source,
                                                      const ColorStats& target) {
  require(source.channels == target.channels, Errc::DimensionMismatch,
          "color stats channel mismatch");
  std::vector<std::array<int, 256>> lut(source.channels);
  for (int c = 0; c < source.channels; ++c) {
    int j = 0;
    for (int b = 0; b < 256; ++b) {
      const double q = source.cdf[c][b];
      while (j < 255 && target.cdf[c][j] < q - 1e-12) ++j;
      lut[c][b] = j;
    }
  }
  return lut;
}

// Per-channel histogram matching of `img` to `target`.
inline Image match_color(const Image& img, const ColorStats& target) {
  const auto lut = matching_lut(color_stats(img), target);
  Image out = img;
  for (size_t i = 0; i < out.pixel_count(); ++i)
    for (int c = 0; c < out.channels; ++c) {
      float& v = out.data[i * out.channels + c];
      v = lut[c][value_bin(v)] / 255.0f;
    }
  return out;
}

namespace jpeg_detail {

struct ErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void on_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<ErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

inline std::vector<uint8_t> encode(const std::vector<uint8_t>& rgb, int w, int h, int quality) {
  jpeg_compress_struct cinfo{};
  ErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = on_error;
  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(mem);
    throw Error(Errc::Io, std::string("JPEG encode: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  // Baseline sequential, IJG quality scaling, 4:2:0 chroma.
  jpeg_set_quality(&cinfo, quality, TRUE);
  cinfo.comp_info[0].h_samp_factor = 2;
  cinfo.comp_info[0].v_samp_factor = 2;
  cinfo.comp_info[1].h_samp_factor = cinfo.comp_info[1].v_samp_factor = 1;
  cinfo.comp_info[2].h_samp_factor = cinfo.comp_info[2].v_samp_factor = 1;
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(&rgb[static_cast<size_t>(cinfo.next_scanline) * w * 3]);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<uint8_t> out(mem, mem + mem_size);
  std::free(mem);
  return out;
}

inline std::vector<uint8_t> decode(const std::vector<uint8_t>& bytes, int& w, int& h) {
  jpeg_decompress_struct cinfo{};
  ErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = on_error;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(Errc::Io, std::string("JPEG decode: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_decompress(&cinfo);
  w = static_cast<int>(cinfo.output_width);
  h = static_cast<int>(cinfo.output_height);
  std::vector<uint8_t> out(static_cast<size_t>(w) * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = &out[static_cast<size_t>(cinfo.output_scanline) * w * 3];
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace jpeg_detail

// Encode to baseline JPEG (4:2:0) and decode back. (phase_x, phase_y) is the
// position of the image origin inside the 16-pixel MCU grid of a larger
// image, so a crop can be compressed with the same block alignment as the
// image it came from.
inline Image jpeg_roundtrip(const Image& img, int quality, int phase_x = 0, int phase_y = 0) {
  if (quality < 1 || quality > 100)
    throw Error(Errc::InvalidArgument, "JPEG quality must be in [1, 100]");
  const Image rgb = gray_to_rgb(img);
  phase_x = ((phase_x % 16) + 16) % 16;
  phase_y = ((phase_y % 16) + 16) % 16;
  const Image padded = (phase_x || phase_y)
                           ? crop_clamped(rgb, {-phase_x, -phase_y, rgb.width, rgb.height})
                           : rgb;
  int w = 0, h = 0;
  const auto bytes = jpeg_detail::decode(
      jpeg_detail::encode(to_bytes(padded), padded.width, padded.height, quality), w, h);
  Image out = from_bytes(bytes.data(), w, h, 3);
  if (phase_x || phase_y) out = crop(out, {phase_x, phase_y, w, h});
  return img.channels == 1 ? to_luma(out) : out;
}

// Mean absolute luma step across 8x8 block boundaries divided by the mean
// step between other adjacent pixels. ~1 for content without block
// structure; constant images give exactly 1.
inline double blockiness(const Image& img, int phase_x = 0, int phase_y = 0) {
  if (img.width < 16 || img.height < 16)
    throw Error(Errc::TooSmall, "blockiness needs at least 16x16 pixels");
  const Image l = to_luma(img);
  double on = 0.0, off = 0.0;
  size_t n_on = 0, n_off = 0;
  for (int y = 0; y < l.height; ++y)
    for (int x = 0; x + 1 < l.width; ++x) {
      const double d = std::abs(double(l.at(x + 1, y)) - l.at(x, y));
      if ((x + phase_x) % 8 == 7) {
        on += d;
        ++n_on;
      } else {
        off += d;
        ++n_off;
      }
    }
  for (int y = 0; y + 1 < l.height; ++y)
    for (int x = 0; x < l.width; ++x) {
      const double d = std::abs(double(l.at(x, y + 1)) - l.at(x, y));
      if ((y + phase_y) % 8 == 7) {
        on += d;
        ++n_on;
      } else {
        off += d;
        ++n_off;
      }
    }
  constexpr double eps = 1e-12;
  return (on / n_on + eps) / (off / n_off + eps);
}

struct DegradationRecipe {
  double scale = 0.5;           // s, 0 < s < 1
  double extra_downsample = 2;  // blur round-trip factor, >= 1
  int jpeg_quality = 75;
  bool jpeg_enabled = false;
  double blockiness_ratio_threshold = 1.2;

  void validate() const {
    require(scale > 0.0 && scale < 1.0, Errc::InvalidArgument, "recipe scale must be in (0,1)");
    require(extra_downsample >= 1.0, Errc::InvalidArgument, "extra_downsample must be >= 1");
    require(jpeg_quality >= 1 && jpeg_quality <= 100, Errc::InvalidArgument,
            "jpeg_quality must be in [1,100]");
  }
};

inline void to_json(nlohmann::json& j, const DegradationRecipe& r) {
  j = {{"scale", r.scale},
       {"extra_downsample", r.extra_downsample},
       {"jpeg_quality", r.jpeg_quality},
       {"jpeg_enabled", r.jpeg_enabled},
       {"blockiness_ratio_threshold", r.blockiness_ratio_threshold}};
}
inline void from_json(const nlohmann::json& j, DegradationRecipe& r) {
  r.scale = j.at("scale").get<double>();
  r.extra_downsample = j.value("extra_downsample", 2.0);
  r.jpeg_quality = j.value("jpeg_quality", 75);
  r.jpeg_enabled = j.value("jpeg_enabled", false);
  r.blockiness_ratio_threshold = j.value("blockiness_ratio_threshold", 1.2);
}

struct Degraded {
  Image image;
  DegradationRecipe recipe;      // with jpeg_enabled resolved
  double blockiness_ratio = 0.0; // reference / downscaled, when a reference was given
};

// Bicubic downsample by s, blur by a down-up round trip that keeps the
// geometry at scale s, then JPEG when enabled. With a reference blockiness
// (of the matching full-image region) the JPEG step is enabled iff
// reference / blockiness(downscaled) exceeds the recipe threshold.
inline Degraded degrade(const Image& img, DegradationRecipe recipe,
                        std::optional<double> reference_blockiness = std::nullopt) {
  recipe.validate();
  Degraded out;
  Image x = resample_bicubic(img, recipe.scale);
  if (reference_blockiness) {
    out.blockiness_ratio = *reference_blockiness / blockiness(x);
    recipe.jpeg_enabled = out.blockiness_ratio > recipe.blockiness_ratio_threshold;
  }
  if (recipe.extra_downsample > 1.0) {
    const double e = recipe.extra_downsample;
    const int sw = std::max(1, scaled_size(x.width, 1.0 / e));
    const int sh = std::max(1, scaled_size(x.height, 1.0 / e));
    const Image small = resample_bicubic_to(x, 1.0 / e, sw, sh);
    x = resample_bicubic_to(small, e, x.width, x.height);
  }
  if (recipe.jpeg_enabled) x = jpeg_roundtrip(x, recipe.jpeg_quality);
  out.image = std::move(x);
  out.recipe = recipe;
  return out;
}

// Recomputes the degraded pixels lr_rect (in degraded-image coordinates) from
// a source patch whose top-left sits at `origin` in the source image. Every
// stage uses the sampling phase of the whole-image pipeline, so the result
// differs from cropping degrade(whole) only where kernels reach past the
// patch. Recipe must have jpeg_enabled already resolved.
inline Image degrade_window(const Image& patch, const DegradationRecipe& recipe, int origin_x,
                            int origin_y, const Rect& lr_rect) {
  recipe.validate();
  const double s = recipe.scale;
  const double e = recipe.extra_downsample;
  const int pad = e > 1.0 ? static_cast<int>(std::ceil(3.0 * e)) : 0;
  auto stage1 = [&](int lo, int n, int origin) {
    return AxisMap{n, 1.0 / s, (lo + 0.5) / s - 0.5 - origin};
  };
  const int x_lo = lr_rect.x0 - pad, y_lo = lr_rect.y0 - pad;
  Image x = resample_axes(patch, stage1(x_lo, lr_rect.width() + 2 * pad, origin_x),
                          stage1(y_lo, lr_rect.height() + 2 * pad, origin_y));
  if (e > 1.0) {
    // Blur-grid pixel m is centered on degraded coordinate (m + 0.5) e - 0.5.
    const int mx0 = static_cast<int>(std::floor(x_lo / e));
    const int my0 = static_cast<int>(std::floor(y_lo / e));
    const int mx1 = static_cast<int>(std::ceil((lr_rect.x1 + pad) / e));
    const int my1 = static_cast<int>(std::ceil((lr_rect.y1 + pad) / e));
    const Image small = resample_axes(x, AxisMap{mx1 - mx0, e, (mx0 + 0.5) * e - 0.5 - x_lo},
                                      AxisMap{my1 - my0, e, (my0 + 0.5) * e - 0.5 - y_lo});
    x = resample_axes(small,
                      AxisMap{lr_rect.width(), 1.0 / e, (lr_rect.x0 + 0.5) / e - 0.5 - mx0},
                      AxisMap{lr_rect.height(), 1.0 / e, (lr_rect.y0 + 0.5) / e - 0.5 - my0});
  } else {
    x = crop(x, {pad, pad, pad + lr_rect.width(), pad + lr_rect.height()});
  }
  if (recipe.jpeg_enabled) x = jpeg_roundtrip(x, recipe.jpeg_quality, lr_rect.x0, lr_rect.y0);
  return x;
}

}  // namespace uz
