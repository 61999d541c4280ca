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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "ecgcls/augment.hpp"
#include "ecgcls/dataset.hpp"
#include "ecgcls/hypersearch.hpp"
#include "ecgcls/preprocess.hpp"

namespace ecgcls {

// Effective settings of one CLI run. Loaded from YAML, overridden by flags,
// and fingerprinted into every output's provenance.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string log_level = "info";
  std::optional<std::filesystem::path> data_root;
  std::optional<std::filesystem::path> manifest;

  struct Ingest {
    std::string labels = "COVID=COVID,Normal=NON_COVID";
    SplitRatios ratios;
    int k = 5;
  } ingest;

  PreprocessConfig preprocess;
  AugmentationSpec augment;

  struct Model {
    std::string backbone = "vgg16";
    bool pretrained = true;
    std::optional<std::filesystem::path> weights;
    std::uint64_t init_seed = 0;
    std::string mode = "feature_extract";
    std::optional<std::string> policy;  ///< default follows the mode
  } model;

  HyperParams train;

  struct Search {
    HyperGrid grid = HyperGrid::reference();
    int k = 5;
    int workers = 1;
  } search;

  double threshold = 0.5;
};

/// Throws Error{IoError} or Error{ConfigInvalid}. Missing keys keep their
/// defaults; unknown keys are rejected.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(std::string_view yaml);
std::string config_to_yaml(const RunConfig& config);
/// FNV-1a of config_to_yaml(), hex.
std::string config_hash(const RunConfig& config);

}  // namespace ecgcls
