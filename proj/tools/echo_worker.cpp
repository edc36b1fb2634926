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

// Reference worker: answers ENHANCE with a bicubic upsample. Fault flags
// exercise the client's error paths.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ultrazoom/protocol.hpp"
#include "ultrazoom/resample.hpp"

namespace {

void write_raw(const std::vector<uint8_t>& bytes, size_t n) {
  size_t off = 0;
  while (off < n) {
    const ssize_t k = ::write(1, bytes.data() + off, n - off);
    if (k <= 0) std::_Exit(1);
    off += static_cast<size_t>(k);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UltraZoom echo worker (bicubic)"};
  bool wrong_dims = false, die_mid_frame = false, bad_magic = false;
  int delay_ms = 0;
  app.add_flag("--wrong-dims", wrong_dims, "reply with one extra column");
  app.add_flag("--die-mid-frame", die_mid_frame, "exit after half a RESULT frame");
  app.add_flag("--bad-magic", bad_magic, "reply with a corrupted frame magic");
  app.add_option("--delay-ms", delay_ms, "sleep before each RESULT");
  CLI11_PARSE(app, argc, argv);

  uz::proto::Channel ch(0, 1);
  for (;;) {
    uz::proto::Frame in;
    try {
      if (ch.receive(in) != uz::proto::Channel::ReadStatus::Ok) return 0;
    } catch (const uz::Error& e) {
      std::fprintf(stderr, "echo worker: %s\n", e.what());
      return 1;
    }
    using uz::proto::FrameType;
    if (in.type == FrameType::Hello) {
      const nlohmann::json caps = {{"name", "echo-bicubic"},
                                   {"mode", "one-shot"},
                                   {"max_input", 8192},
                                   {"deterministic", true}};
      ch.send({FrameType::Caps, in.request_id, uz::proto::text_payload(caps.dump())});
      continue;
    }
    if (in.type != FrameType::Enhance) {
      ch.send({FrameType::Error, in.request_id, uz::proto::text_payload("unexpected frame")});
      continue;
    }
    uz::Image out;
    try {
      const auto req = uz::proto::decode_enhance(in.payload);
      out = uz::resample_bicubic(req.lr, req.zoom);
    } catch (const std::exception& e) {
      ch.send({FrameType::Error, in.request_id, uz::proto::text_payload(e.what())});
      continue;
    }
    if (wrong_dims) out = uz::resize_bicubic(out, out.width + 1, out.height);
    if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    auto bytes = uz::proto::encode_frame({FrameType::Result, in.request_id, uz::proto::encode_result(out)});
    if (bad_magic) bytes[0] = 'X';
    if (die_mid_frame) {
      write_raw(bytes, bytes.size() / 2);
      std::_Exit(3);
    }
    write_raw(bytes, bytes.size());
  }
}
