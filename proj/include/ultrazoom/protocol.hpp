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

// Framed worker protocol. All integers little-endian.
//   frame   = "UZEP" | type u8 | request_id u64 | payload_len u64 | payload
//   ENHANCE = zoom f64 | step_index u32 | step_count u32 | width u32 | height u32 | RGB f32
//   RESULT  = width u32 | height u32 | RGB f32
//   HELLO, CAPS, ERROR carry UTF-8 JSON.

#pragma once

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ultrazoom/error.hpp"
#include "ultrazoom/image.hpp"

namespace uz::proto {

inline constexpr char kMagic[4] = {'U', 'Z', 'E', 'P'};
inline constexpr size_t kHeaderSize = 4 + 1 + 8 + 8;
inline constexpr uint64_t kMaxPayload = uint64_t{1} << 34;

enum class FrameType : uint8_t { Hello = 0, Caps = 1, Enhance = 2, Result = 3, Error = 4 };

struct Frame {
  FrameType type = FrameType::Hello;
  uint64_t request_id = 0;
  std::vector<uint8_t> payload;
};

// Little-endian writer/reader over a byte vector.
class Writer {
 public:
  std::vector<uint8_t> bytes;
  void u8(uint8_t v) { bytes.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
};

class Reader {
 public:
  Reader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{p_[off_ + i]} << (8 * i);
    off_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t{p_[off_ + i]} << (8 * i);
    off_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  size_t remaining() const { return n_ - off_; }

 private:
  void need(size_t k) const {
    if (n_ - off_ < k) throw Error(Errc::ProtocolError, "payload shorter than its fields");
  }
  const uint8_t* p_;
  size_t n_;
  size_t off_ = 0;
};

inline std::vector<uint8_t> encode_frame(const Frame& f) {
  Writer w;
  w.raw(kMagic, 4);
  w.u8(static_cast<uint8_t>(f.type));
  w.u64(f.request_id);
  w.u64(f.payload.size());
  w.raw(f.payload.data(), f.payload.size());
  return std::move(w.bytes);
}

inline std::vector<uint8_t> text_payload(const std::string& s) { return {s.begin(), s.end()}; }
inline std::string payload_text(const Frame& f) { return {f.payload.begin(), f.payload.end()}; }

struct EnhancePayload {
  double zoom = 2.0;
  uint32_t step_index = 0, step_count = 1;
  Image lr;
};

inline void put_pixels(Writer& w, const Image& img) {
  for (size_t i = 0; i < img.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c) w.f32(img.channels == 3 ? img.data[i * 3 + c] : img.data[i]);
}

inline Image get_pixels(Reader& r, uint32_t w, uint32_t h) {
  if (r.remaining() != static_cast<uint64_t>(w) * h * 12)
    throw Error(Errc::ProtocolError, "pixel block size does not match dimensions");
  Image img(static_cast<int>(w), static_cast<int>(h), 3);
  for (float& v : img.data) v = r.f32();
  return img;
}

inline std::vector<uint8_t> encode_enhance(const EnhancePayload& p) {
  Writer w;
  w.f64(p.zoom);
  w.u32(p.step_index);
  w.u32(p.step_count);
  w.u32(static_cast<uint32_t>(p.lr.width));
  w.u32(static_cast<uint32_t>(p.lr.height));
  put_pixels(w, p.lr);
  return std::move(w.bytes);
}

inline EnhancePayload decode_enhance(const std::vector<uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size());
  EnhancePayload p;
  p.zoom = r.f64();
  p.step_index = r.u32();
  p.step_count = r.u32();
  const uint32_t w = r.u32(), h = r.u32();
  p.lr = get_pixels(r, w, h);
  return p;
}

inline std::vector<uint8_t> encode_result(const Image& img) {
  Writer w;
  w.u32(static_cast<uint32_t>(img.width));
  w.u32(static_cast<uint32_t>(img.height));
  put_pixels(w, img);
  return std::move(w.bytes);
}

inline Image decode_result(const std::vector<uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size());
  const uint32_t w = r.u32(), h = r.u32();
  return get_pixels(r, w, h);
}

// Blocking fd I/O with an overall deadline. A negative timeout waits forever.
class Channel {
 public:
  enum class ReadStatus { Ok, Eof, Truncated };

  explicit Channel(int read_fd, int write_fd, double timeout_s = -1.0)
      : rfd_(read_fd), wfd_(write_fd), timeout_s_(timeout_s) {}

  void send(const Frame& f) {
    const auto bytes = encode_frame(f);
    size_t off = 0;
    while (off < bytes.size()) {
      ssize_t n = is_socket(wfd_) ? ::send(wfd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL)
                                  : ::write(wfd_, bytes.data() + off, bytes.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw Error(Errc::WorkerExit, "peer closed the connection during write");
      off += static_cast<size_t>(n);
    }
  }

  // Eof: clean end before any byte of a frame. Truncated: end inside a frame.
  ReadStatus receive(Frame& f) {
    const auto deadline = start_deadline();
    uint8_t hdr[kHeaderSize];
    const size_t got = read_some(hdr, kHeaderSize, deadline);
    if (got == 0) return ReadStatus::Eof;
    if (got < kHeaderSize) return ReadStatus::Truncated;
    if (std::memcmp(hdr, kMagic, 4) != 0) throw Error(Errc::ProtocolError, "bad frame magic");
    if (hdr[4] > static_cast<uint8_t>(FrameType::Error))
      throw Error(Errc::ProtocolError, "unknown frame type");
    Reader r(hdr + 5, 16);
    f.type = static_cast<FrameType>(hdr[4]);
    f.request_id = r.u64();
    const uint64_t len = r.u64();
    if (len > kMaxPayload) throw Error(Errc::ProtocolError, "frame payload too large");
    f.payload.resize(len);
    if (read_some(f.payload.data(), len, deadline) < len) return ReadStatus::Truncated;
    return ReadStatus::Ok;
  }

 private:
  using Clock = std::chrono::steady_clock;

  static bool is_socket(int fd) {
    int type = 0;
    socklen_t len = sizeof type;
    return ::getsockopt(fd, SOL_SOCKET, SO_TYPE, &type, &len) == 0;
  }

  Clock::time_point start_deadline() const {
    if (timeout_s_ < 0) return Clock::time_point::max();
    return Clock::now() + std::chrono::duration_cast<Clock::duration>(
                              std::chrono::duration<double>(timeout_s_));
  }

  size_t read_some(uint8_t* buf, size_t n, Clock::time_point deadline) {
    size_t off = 0;
    while (off < n) {
      int wait_ms = -1;
      if (deadline != Clock::time_point::max()) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (left.count() <= 0) throw Error(Errc::Timeout, "worker did not answer in time");
        wait_ms = static_cast<int>(std::min<int64_t>(left.count(), 1 << 30));
      }
      pollfd p{rfd_, POLLIN, 0};
      const int pr = ::poll(&p, 1, wait_ms);
      if (pr < 0 && errno == EINTR) continue;
      if (pr == 0) throw Error(Errc::Timeout, "worker did not answer in time");
      const ssize_t k = ::read(rfd_, buf + off, n - off);
      if (k < 0 && errno == EINTR) continue;
      if (k <= 0) return off;
      off += static_cast<size_t>(k);
    }
    return off;
  }

  int rfd_, wfd_;
  double timeout_s_;
};

}  // namespace uz::proto
