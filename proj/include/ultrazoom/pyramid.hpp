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

// Deep Zoom tile pyramids: name.dzi plus name_files/{level}/{col}_{row}.{png,jpg}.
// Levels are built top down from a row stream; each level keeps only the
// rows its current tile row needs.

#pragma once

#include <cstdio>
#include <deque>
#include <functional>
#include <regex>
#include <string>
#include <vector>

#include "ultrazoom/degrade.hpp"
#include "ultrazoom/io.hpp"
#include "ultrazoom/mosaic.hpp"
#include "ultrazoom/parallel.hpp"

namespace uz {

struct PyramidInfo {
  int width = 0, height = 0;
  int tile_size = 256;
  int overlap = 1;
  std::string format = "png";

  int max_level() const {
    const int m = std::max(width, height);
    int l = 0;
    while ((int64_t{1} << l) < m) ++l;
    return l;
  }
  int level_width(int level) const { return shrink(width, level); }
  int level_height(int level) const { return shrink(height, level); }
  int tile_cols(int level) const { return (level_width(level) + tile_size - 1) / tile_size; }
  int tile_rows(int level) const { return (level_height(level) + tile_size - 1) / tile_size; }

  // Pixel rectangle of a tile including its overlap border.
  Rect tile_rect(int level, int col, int row) const {
    const int lw = level_width(level), lh = level_height(level);
    return {col * tile_size - (col > 0 ? overlap : 0), row * tile_size - (row > 0 ? overlap : 0),
            std::min(lw, (col + 1) * tile_size + overlap),
            std::min(lh, (row + 1) * tile_size + overlap)};
  }

  std::string extension() const { return format == "jpeg" ? "jpg" : "png"; }

  void validate() const {
    require(width >= 1 && height >= 1, Errc::InvalidArgument, "pyramid needs a non-empty image");
    require(tile_size >= 1, Errc::InvalidArgument, "tile_size must be positive");
    require(overlap >= 0 && overlap < tile_size, Errc::InvalidArgument,
            "overlap must be in [0, tile_size)");
    require(format == "png" || format == "jpeg", Errc::InvalidArgument,
            "format must be png or jpeg");
  }

 private:
  int shrink(int n, int level) const {
    const int d = max_level() - level;
    return static_cast<int>(((int64_t{n} - 1) >> d) + 1);  // ceil(n / 2^d)
  }
};

inline fs::path tiles_dir(const fs::path& dzi) {
  fs::path d = dzi;
  d.replace_extension();
  d += "_files";
  return d;
}

inline fs::path tile_path(const fs::path& dzi, const PyramidInfo& info, int level, int col, int row) {
  return tiles_dir(dzi) / std::to_string(level) /
         (std::to_string(col) + "_" + std::to_string(row) + "." + info.extension());
}

inline std::string descriptor_xml(const PyramidInfo& info) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<Image TileSize=\"" +
         std::to_string(info.tile_size) + "\" Overlap=\"" + std::to_string(info.overlap) +
         "\" Format=\"" + info.extension() +
         "\" xmlns=\"http://schemas.microsoft.com/deepzoom/2008\"><Size Width=\"" +
         std::to_string(info.width) + "\" Height=\"" + std::to_string(info.height) +
         "\"/></Image>\n";
}

inline PyramidInfo read_descriptor(const fs::path& dzi) {
  const std::string xml = read_text(dzi);
  auto attr = [&](const char* name) {
    const std::regex re(std::string(name) + "=\"([^\"]*)\"");
    std::smatch m;
    if (!std::regex_search(xml, m, re))
      throw Error(Errc::CorruptStream, std::string("descriptor lacks ") + name);
    return m[1].str();
  };
  PyramidInfo info;
  try {
    info.tile_size = std::stoi(attr("TileSize"));
    info.overlap = std::stoi(attr("Overlap"));
    info.width = std::stoi(attr("Width"));
    info.height = std::stoi(attr("Height"));
  } catch (const std::logic_error&) {
    throw Error(Errc::CorruptStream, "descriptor has a non-numeric attribute");
  }
  const std::string fmt = attr("Format");
  if (fmt == "png")
    info.format = "png";
  else if (fmt == "jpg" || fmt == "jpeg")
    info.format = "jpeg";
  else
    throw Error(Errc::CorruptStream, "unsupported tile format " + fmt);
  try {
    info.validate();
  } catch (const Error& e) {
    throw Error(Errc::CorruptStream, e.what());
  }
  return info;
}

struct PyramidParams {
  int tile_size = 256;
  int overlap = 1;
  std::string format = "png";
  int jpeg_quality = 90;
  int threads = 0;
  int read_rows = 256;  // rows pulled from the source per read
};

struct PyramidStats {
  int levels = 0;
  size_t tiles = 0;
  size_t peak_resident_bytes = 0;  // level row buffers, summed over levels
};

namespace pyramid_detail {

inline void write_tile(const fs::path& path, const PyramidInfo& info, int quality,
                       const std::vector<uint8_t>& rgb, int w, int h) {
  fs::path tmp = path;
  tmp += ".tmp";
  if (info.format == "png") {
    write_png_u8(tmp, rgb.data(), w, h, 3);
  } else {
    const auto bytes = jpeg_detail::encode(rgb, w, h, quality);
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(tmp.c_str(), "wb"), &std::fclose);
    if (!f || std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
      throw Error(Errc::Io, "cannot write tile " + path.string());
  }
  fs::rename(tmp, path);
}

inline Image read_tile(const fs::path& path, const PyramidInfo& info) {
  if (!fs::exists(path)) throw Error(Errc::MissingTile, "missing tile " + path.string());
  if (info.format == "png") return read_png(path, 3);
  const std::string s = read_text(path);
  int w = 0, h = 0;
  const auto rgb = jpeg_detail::decode(std::vector<uint8_t>(s.begin(), s.end()), w, h);
  return from_bytes(rgb.data(), w, h, 3);
}

// One pyramid level fed row by row. Emits tile rows as soon as their rows
// are present, drops rows no later tile row needs, and passes box-filtered
// row pairs down to the next level.
class LevelBuilder {
 public:
  LevelBuilder(const PyramidInfo& info, int level, const fs::path& dzi, const PyramidParams& p,
               LevelBuilder* below, PyramidStats& stats)
      : info_(info), level_(level), w_(info.level_width(level)), h_(info.level_height(level)),
        dzi_(dzi), params_(p), below_(below), stats_(stats) {
    fs::create_directories(tiles_dir(dzi_) / std::to_string(level_));
  }

  void push(std::vector<uint8_t> row) {
    rows_.push_back(std::move(row));
    const int y = first_ + static_cast<int>(rows_.size()) - 1;
    if (below_) pass_down(y);
    while (next_tile_row_ < info_.tile_rows(level_)) {
      const Rect r = info_.tile_rect(level_, 0, next_tile_row_);
      if (y + 1 < r.y1) break;
      emit_tile_row(next_tile_row_++);
      // Next tile row starts at (row + 1) * T - overlap.
      const int keep = next_tile_row_ * info_.tile_size - info_.overlap;
      while (first_ < keep && !rows_.empty()) {
        rows_.pop_front();
        ++first_;
      }
    }
  }

  size_t resident_bytes() const {
    return (rows_.size() + (pending_.empty() ? 0 : 1)) * static_cast<size_t>(w_) * 3;
  }

  void finish() {
    require(first_ + static_cast<int>(rows_.size()) == h_, Errc::CorruptStream,
            "level " + std::to_string(level_) + " received the wrong number of rows");
    if (below_ && !pending_.empty()) {
      below_->push(downsample(pending_, nullptr));
      pending_.clear();
    }
  }

 private:
  void pass_down(int y) {
    if (y % 2 == 0) {
      pending_ = rows_.back();
      if (y + 1 == h_) {
        below_->push(downsample(pending_, nullptr));
        pending_.clear();
      }
      return;
    }
    below_->push(downsample(pending_, &rows_.back()));
    pending_.clear();
  }

  // 2x box filter over the pixels present (edges average fewer samples).
  std::vector<uint8_t> downsample(const std::vector<uint8_t>& a, const std::vector<uint8_t>* b) const {
    const int ow = (w_ + 1) / 2;
    std::vector<uint8_t> out(static_cast<size_t>(ow) * 3);
    for (int x = 0; x < ow; ++x) {
      const int x0 = 2 * x, x1 = std::min(2 * x + 1, w_ - 1);
      const int nx = x1 == x0 ? 1 : 2;
      for (int c = 0; c < 3; ++c) {
        int sum = a[x0 * 3 + c] + (nx == 2 ? a[x1 * 3 + c] : 0);
        int n = nx;
        if (b) {
          sum += (*b)[x0 * 3 + c] + (nx == 2 ? (*b)[x1 * 3 + c] : 0);
          n += nx;
        }
        out[x * 3 + c] = static_cast<uint8_t>((sum + n / 2) / n);
      }
    }
    return out;
  }

  void emit_tile_row(int row) {
    const int cols = info_.tile_cols(level_);
    parallel_for(static_cast<size_t>(cols), resolve_threads(params_.threads), [&](size_t ci) {
      const int col = static_cast<int>(ci);
      const Rect r = info_.tile_rect(level_, col, row);
      std::vector<uint8_t> rgb(static_cast<size_t>(r.width()) * r.height() * 3);
      for (int y = r.y0; y < r.y1; ++y) {
        const auto& src = rows_[static_cast<size_t>(y - first_)];
        std::copy(src.begin() + r.x0 * 3, src.begin() + r.x1 * 3,
                  rgb.begin() + static_cast<size_t>(y - r.y0) * r.width() * 3);
      }
      write_tile(tile_path(dzi_, info_, level_, col, row), info_, params_.jpeg_quality, rgb,
                 r.width(), r.height());
    });
    stats_.tiles += static_cast<size_t>(cols);
  }

  const PyramidInfo& info_;
  int level_, w_, h_;
  fs::path dzi_;
  const PyramidParams& params_;
  LevelBuilder* below_;
  PyramidStats& stats_;
  std::deque<std::vector<uint8_t>> rows_;
  int first_ = 0;  // canvas row of rows_.front()
  int next_tile_row_ = 0;
  std::vector<uint8_t> pending_;
};

}  // namespace pyramid_detail

// read(y0, y1) returns rows [y0, y1) as packed 8-bit RGB. The descriptor is
// written last, after every tile is in place.
inline PyramidStats build_pyramid(int width, int height,
                                  const std::function<std::vector<uint8_t>(int, int)>& read,
                                  const fs::path& dzi, const PyramidParams& params = {}) {
  PyramidInfo info;
  info.width = width;
  info.height = height;
  info.tile_size = params.tile_size;
  info.overlap = params.overlap;
  info.format = params.format;
  info.validate();
  require(params.read_rows >= 1, Errc::InvalidArgument, "read_rows must be positive");
  if (!dzi.parent_path().empty()) fs::create_directories(dzi.parent_path());
  fs::remove(dzi);
  fs::remove_all(tiles_dir(dzi));

  PyramidStats stats;
  const int top = info.max_level();
  stats.levels = top + 1;
  std::vector<std::unique_ptr<pyramid_detail::LevelBuilder>> levels(top + 1);
  for (int l = 0; l <= top; ++l)
    levels[l] = std::make_unique<pyramid_detail::LevelBuilder>(
        info, l, dzi, params, l > 0 ? levels[l - 1].get() : nullptr, stats);

  const size_t row_bytes = static_cast<size_t>(width) * 3;
  for (int y0 = 0; y0 < height; y0 += params.read_rows) {
    const int y1 = std::min(height, y0 + params.read_rows);
    const auto chunk = read(y0, y1);
    if (chunk.size() != static_cast<size_t>(y1 - y0) * row_bytes)
      throw Error(Errc::CorruptStream, "row source returned a short read");
    for (int y = y0; y < y1; ++y) {
      const auto* p = chunk.data() + static_cast<size_t>(y - y0) * row_bytes;
      levels[top]->push(std::vector<uint8_t>(p, p + row_bytes));
      size_t resident = 0;
      for (const auto& l : levels) resident += l->resident_bytes();
      stats.peak_resident_bytes = std::max(stats.peak_resident_bytes, resident);
    }
  }
  for (int l = top; l >= 0; --l) levels[l]->finish();
  write_text_atomic(dzi, descriptor_xml(info));
  return stats;
}

inline PyramidStats build_pyramid(const BandReader& canvas, const fs::path& dzi,
                                  const PyramidParams& params = {}) {
  return build_pyramid(
      canvas.width(), canvas.height(), [&](int y0, int y1) { return canvas.read_rows(y0, y1); },
      dzi, params);
}

inline PyramidStats build_pyramid(const Image& img, const fs::path& dzi,
                                  const PyramidParams& params = {}) {
  require(img.channels == 3, Errc::InvalidArgument, "pyramid input must be RGB");
  const auto bytes = to_bytes(img);
  const size_t row_bytes = static_cast<size_t>(img.width) * 3;
  return build_pyramid(
      img.width, img.height,
      [&](int y0, int y1) {
        return std::vector<uint8_t>(bytes.begin() + y0 * row_bytes, bytes.begin() + y1 * row_bytes);
      },
      dzi, params);
}

// Stitches a level back together from its tiles, dropping overlap borders.
inline Image reassemble_level(const fs::path& dzi, int level) {
  const PyramidInfo info = read_descriptor(dzi);
  if (level < 0 || level > info.max_level())
    throw Error(Errc::MissingTile, "level " + std::to_string(level) + " does not exist", level);
  const int lw = info.level_width(level), lh = info.level_height(level);
  Image out(lw, lh, 3);
  for (int row = 0; row < info.tile_rows(level); ++row)
    for (int col = 0; col < info.tile_cols(level); ++col) {
      const Rect r = info.tile_rect(level, col, row);
      const Image t = pyramid_detail::read_tile(tile_path(dzi, info, level, col, row), info);
      if (t.width != r.width() || t.height != r.height())
        throw Error(Errc::CorruptStream, "tile " + std::to_string(col) + "_" +
                                             std::to_string(row) + " has the wrong size");
      const int x0 = col * info.tile_size, y0 = row * info.tile_size;
      const int x1 = std::min(lw, x0 + info.tile_size), y1 = std::min(lh, y0 + info.tile_size);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          for (int c = 0; c < 3; ++c) out.at(x, y, c) = t.at(x - r.x0, y - r.y0, c);
    }
  return out;
}

}  // namespace uz
