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

#include "ultrazoom/external.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

#ifndef UZ_ECHO_WORKER
#error "UZ_ECHO_WORKER must name the echo worker binary"
#endif

namespace uz {
namespace {

EnhanceRequest request(Image lr, double z) {
  EnhanceRequest r;
  r.lr = std::move(lr);
  r.zoom = z;
  return r;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::InvalidArgument;
}

TEST(Protocol, FrameLayoutIsLittleEndian) {
  const auto b = proto::encode_frame({proto::FrameType::Result, 0x0102030405060708ull, {0xAA, 0xBB}});
  ASSERT_EQ(b.size(), proto::kHeaderSize + 2);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "UZEP");
  EXPECT_EQ(b[4], 3);
  EXPECT_EQ(b[5], 0x08);
  EXPECT_EQ(b[12], 0x01);
  EXPECT_EQ(b[13], 2);
  for (int i = 14; i < 21; ++i) EXPECT_EQ(b[i], 0);
  EXPECT_EQ(b[21], 0xAA);
}

TEST(Protocol, EnhancePayloadRoundTrip) {
  proto::EnhancePayload p;
  p.zoom = 6.93;
  p.step_index = 3;
  p.step_count = 28;
  p.lr = test::textured(7, 5, 2);
  const auto bytes = proto::encode_enhance(p);
  EXPECT_EQ(bytes.size(), 8u + 16u + 7u * 5u * 12u);
  const auto q = proto::decode_enhance(bytes);
  EXPECT_EQ(q.zoom, 6.93);
  EXPECT_EQ(q.step_index, 3u);
  EXPECT_EQ(q.step_count, 28u);
  EXPECT_EQ(q.lr.data, p.lr.data);
  auto cut = bytes;
  cut.pop_back();
  EXPECT_EQ(code_of([&] { proto::decode_enhance(cut); }), Errc::ProtocolError);
}

TEST(External, EchoMatchesLocalBicubic) {
  ExternalEnhancer e({UZ_ECHO_WORKER});
  EXPECT_EQ(e.descriptor().name, "echo-bicubic");
  EXPECT_EQ(e.descriptor().max_input, 8192);
  const Image lr = test::textured(32, 32, 3);
  const Image out = e.enhance(request(lr, 2.0));
  EXPECT_EQ(out.width, 64);
  EXPECT_EQ(out.data, resample_bicubic(lr, 2.0).data);
  // Several requests on one connection.
  for (double z : {3.0, 6.93}) EXPECT_EQ(e.enhance(request(lr, z)).data, resample_bicubic(lr, z).data);
}

TEST(External, WrongDimensions) {
  ExternalEnhancer e({UZ_ECHO_WORKER, "--wrong-dims"});
  EXPECT_EQ(code_of([&] { e.enhance(request(test::textured(32, 32, 3), 2.0)); }),
            Errc::ProtocolError);
}

TEST(External, BadMagic) {
  ExternalEnhancer e({UZ_ECHO_WORKER, "--bad-magic"});
  EXPECT_EQ(code_of([&] { e.enhance(request(test::textured(16, 16, 3), 2.0)); }),
            Errc::ProtocolError);
}

TEST(External, WorkerDiesMidFrame) {
  ExternalEnhancer e({UZ_ECHO_WORKER, "--die-mid-frame"});
  EXPECT_EQ(code_of([&] { e.enhance(request(test::textured(16, 16, 3), 2.0)); }),
            Errc::WorkerExit);
}

TEST(External, Timeout) {
  ExternalEnhancer e({UZ_ECHO_WORKER, "--delay-ms", "3000"}, 0.3);
  EXPECT_EQ(code_of([&] { e.enhance(request(test::textured(16, 16, 3), 2.0)); }), Errc::Timeout);
}

TEST(External, MissingBinary) {
  EXPECT_EQ(code_of([] { ExternalEnhancer e({"/nonexistent/uz-worker"}); }), Errc::WorkerExit);
}

}  // namespace
}  // namespace uz
