/*
 * Copyright 2026 The ecgcls Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
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

namespace ecgcls {

/// Domain error codes. The CLI prints `error: <code>: <message>` and exits 1.
enum class Errc {
  MissingRoot,
  NoLabeledImages,
  UnreadableImage,
  AlreadySplit,
  RatioInvalid,
  KTooLarge,
  NotSplit,
  RectOutOfBounds,
  BadTarget,
  ConfigInvalid,
  SpecInvalid,
  WeightsUnavailable,
  UnknownBackbone,
  PolicyInvalid,
  ShapeMismatch,
  EmptyGrid,
  EmptyResults,
  EmptyTrainSplit,
  EmptyTestSplit,
  EmptyReports,
  DataLeak,
  IoError,
  ParseError,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MissingRoot: return "MissingRoot";
    case Errc::NoLabeledImages: return "NoLabeledImages";
    case Errc::UnreadableImage: return "UnreadableImage";
    case Errc::AlreadySplit: return "AlreadySplit";
    case Errc::RatioInvalid: return "RatioInvalid";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::NotSplit: return "NotSplit";
    case Errc::RectOutOfBounds: return "RectOutOfBounds";
    case Errc::BadTarget: return "BadTarget";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::SpecInvalid: return "SpecInvalid";
    case Errc::WeightsUnavailable: return "WeightsUnavailable";
    case Errc::UnknownBackbone: return "UnknownBackbone";
    case Errc::PolicyInvalid: return "PolicyInvalid";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptyGrid: return "EmptyGrid";
    case Errc::EmptyResults: return "EmptyResults";
    case Errc::EmptyTrainSplit: return "EmptyTrainSplit";
    case Errc::EmptyTestSplit: return "EmptyTestSplit";
    case Errc::EmptyReports: return "EmptyReports";
    case Errc::DataLeak: return "DataLeak";
    case Errc::IoError: return "IoError";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ecgcls
