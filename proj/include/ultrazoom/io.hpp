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

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "ultrazoom/error.hpp"
#include "ultrazoom/image.hpp"

namespace uz {

namespace fs = std::filesystem;

// Reads an 8-bit PNG. channels: 0 keeps the file's layout (gray -> 1,
// anything with color -> 3, alpha dropped), 1 forces Rec. 709 luma, 3 forces RGB.
inline Image read_png(const fs::path& path, int channels = 0) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw Error(Errc::Io, "cannot read PNG " + path.string() + ": " + img.message);
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const int file_channels = color ? 3 : 1;
  img.format = file_channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(Errc::Io, "cannot decode PNG " + path.string() + ": " + img.message);
  }
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), file_channels);
  for (size_t i = 0; i < buf.size(); ++i) out.data[i] = buf[i] / 255.0f;
  if (channels == 1 && file_channels == 3) return to_luma(out);
  if (channels == 3 && file_channels == 1) return gray_to_rgb(out);
  return out;
}

inline void write_png_u8(const fs::path& path, const uint8_t* pixels, int width,
                         int height, int channels, int compression = 3) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw Error(Errc::Io, "cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::Io, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::Io, "PNG encode failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, compression);
  png_set_IHDR(png, info, width, height, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t stride = static_cast<size_t>(width) * channels;
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(pixels + y * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline std::vector<uint8_t> to_bytes(const Image& img) {
  std::vector<uint8_t> out(img.data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = to_u8(img.data[i]);
  return out;
}

inline Image from_bytes(const uint8_t* bytes, int width, int height, int channels) {
  Image out(width, height, channels);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = bytes[i] / 255.0f;
  return out;
}

inline void write_png(const fs::path& path, const Image& img) {
  require(img.channels == 1 || img.channels == 3, Errc::InvalidArgument,
          "write_png supports 1 or 3 channels");
  const auto bytes = to_bytes(img);
  write_png_u8(path, bytes.data(), img.width, img.height, img.channels);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::Io, "short write " + path.string());
}

// Writes via a temporary name and renames, so readers never see a partial file.
inline void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_text(tmp, text);
  fs::rename(tmp, path);
}

}  // namespace uz
