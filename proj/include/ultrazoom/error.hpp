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

#include <stdexcept>
#include <string>
#include <string_view>

namespace uz {

enum class Errc {
  InvalidArgument,
  DegenerateInput,
  NoConsensus,
  EmptyChain,
  InvalidGrid,
  InvalidSplit,
  EmptySequence,
  TooFewValidTracks,
  EmptyRegion,
  OutputTooSmall,
  TooSmall,
  FootprintOutsideImage,
  PatchTooLarge,
  DegradedPatchTooSmall,
  ManifestCorrupt,
  InputTooLarge,
  ProtocolError,
  WorkerExit,
  Timeout,
  EmptyManifest,
  EmptyBank,
  DimensionMismatch,
  WindowLargerThanCanvas,
  InvalidRange,
  InvalidMargin,
  ScheduleCoverageGap,
  Io,
  CorruptStream,
  MissingTile,
  NotPSD,
  TooFewSamples,
  Config,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::NoConsensus: return "NoConsensus";
    case Errc::EmptyChain: return "EmptyChain";
    case Errc::InvalidGrid: return "InvalidGrid";
    case Errc::InvalidSplit: return "InvalidSplit";
    case Errc::EmptySequence: return "EmptySequence";
    case Errc::TooFewValidTracks: return "TooFewValidTracks";
    case Errc::EmptyRegion: return "EmptyRegion";
    case Errc::OutputTooSmall: return "OutputTooSmall";
    case Errc::TooSmall: return "TooSmall";
    case Errc::FootprintOutsideImage: return "FootprintOutsideImage";
    case Errc::PatchTooLarge: return "PatchTooLarge";
    case Errc::DegradedPatchTooSmall: return "DegradedPatchTooSmall";
    case Errc::ManifestCorrupt: return "ManifestCorrupt";
    case Errc::InputTooLarge: return "InputTooLarge";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::WorkerExit: return "WorkerExit";
    case Errc::Timeout: return "Timeout";
    case Errc::EmptyManifest: return "EmptyManifest";
    case Errc::EmptyBank: return "EmptyBank";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::WindowLargerThanCanvas: return "WindowLargerThanCanvas";
    case Errc::InvalidRange: return "InvalidRange";
    case Errc::InvalidMargin: return "InvalidMargin";
    case Errc::ScheduleCoverageGap: return "ScheduleCoverageGap";
    case Errc::Io: return "Io";
    case Errc::CorruptStream: return "CorruptStream";
    case Errc::MissingTile: return "MissingTile";
    case Errc::NotPSD: return "NotPSD";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::Config: return "Config";
  }
  return "Unknown";
}

// All library failures are reported as uz::Error. `index` carries a stage
// specific position (segment index, window coordinate, pair id) or -1.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, long long index = -1)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code),
        index_(index) {}

  Errc code() const noexcept { return code_; }
  long long index() const noexcept { return index_; }

 private:
  Errc code_;
  long long index_;
};

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace uz
