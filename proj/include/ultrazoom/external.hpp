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

// Enhancer backed by a worker process speaking the framed protocol over a
// socket pair connected to the worker's stdin and stdout.

#pragma once

#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ultrazoom/enhance.hpp"
#include "ultrazoom/protocol.hpp"

namespace uz {

class ExternalEnhancer : public Enhancer {
 public:
  // argv[0] is looked up on PATH. timeout_s bounds each reply.
  explicit ExternalEnhancer(std::vector<std::string> argv, double timeout_s = 300.0)
      : argv_(std::move(argv)), timeout_s_(timeout_s) {
    require(!argv_.empty(), Errc::Config, "external enhancer needs a command");
    spawn();
    try {
      handshake();
    } catch (...) {
      shutdown();
      throw;
    }
  }
  ~ExternalEnhancer() override { shutdown(); }
  ExternalEnhancer(const ExternalEnhancer&) = delete;
  ExternalEnhancer& operator=(const ExternalEnhancer&) = delete;

  EnhancerDescriptor descriptor() const override { return desc_; }

  Image enhance(const EnhanceRequest& req) override { return call(req); }
  Image step(const EnhanceRequest& req, const Image& current) override {
    (void)current;  // the worker keeps no state; iterative workers get step indices
    return call(req);
  }

 private:
  Image call(const EnhanceRequest& req) {
    check(req);
    std::lock_guard lock(mu_);
    const uint64_t id = ++next_id_;
    proto::EnhancePayload p;
    p.zoom = req.zoom;
    p.step_index = static_cast<uint32_t>(req.step_index);
    p.step_count = static_cast<uint32_t>(req.step_count);
    p.lr = req.lr;
    channel_->send({proto::FrameType::Enhance, id, proto::encode_enhance(p)});
    proto::Frame f = receive();
    if (f.type == proto::FrameType::Error)
      throw Error(Errc::ProtocolError, "worker error: " + proto::payload_text(f));
    if (f.type != proto::FrameType::Result)
      throw Error(Errc::ProtocolError, "expected a RESULT frame");
    if (f.request_id != id) throw Error(Errc::ProtocolError, "RESULT request id mismatch");
    Image out = proto::decode_result(f.payload);
    if (out.width != req.out_width() || out.height != req.out_height())
      throw Error(Errc::ProtocolError, "worker returned " + std::to_string(out.width) + "x" +
                                           std::to_string(out.height) + ", expected " +
                                           std::to_string(req.out_width()) + "x" +
                                           std::to_string(req.out_height()));
    return out;
  }

  proto::Frame receive() {
    proto::Frame f;
    const auto st = channel_->receive(f);
    if (st == proto::Channel::ReadStatus::Ok) return f;
    if (worker_exited()) throw Error(Errc::WorkerExit, "worker process exited");
    throw Error(Errc::ProtocolError, st == proto::Channel::ReadStatus::Eof
                                         ? "worker closed the connection"
                                         : "truncated frame");
  }

  void spawn() {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
      throw Error(Errc::Io, "socketpair failed");
    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw Error(Errc::Io, "fork failed");
    }
    if (pid_ == 0) {
      ::dup2(sv[1], 0);
      ::dup2(sv[1], 1);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(sv[1]);
    fd_ = sv[0];
    channel_ = std::make_unique<proto::Channel>(fd_, fd_, timeout_s_);
  }

  void handshake() {
    channel_->send({proto::FrameType::Hello, 0, proto::text_payload(R"({"client":"uz","version":1})")});
    const proto::Frame f = receive();
    if (f.type != proto::FrameType::Caps) throw Error(Errc::ProtocolError, "expected CAPS frame");
    try {
      desc_ = nlohmann::json::parse(proto::payload_text(f)).get<EnhancerDescriptor>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ProtocolError, std::string("bad CAPS descriptor: ") + e.what());
    }
  }

  // Waits briefly for the worker to finish exiting after its socket closed.
  bool worker_exited() {
    if (pid_ <= 0) return true;
    for (int i = 0; i < 100; ++i) {
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        return true;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return false;
  }

  void shutdown() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
    if (pid_ > 0 && !worker_exited()) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
  }

  std::vector<std::string> argv_;
  double timeout_s_;
  EnhancerDescriptor desc_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::unique_ptr<proto::Channel> channel_;
  std::mutex mu_;
  uint64_t next_id_ = 0;
};

}  // namespace uz
