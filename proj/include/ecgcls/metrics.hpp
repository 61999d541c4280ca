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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecgcls/dataset.hpp"

namespace ecgcls {

enum class TrainMode { FeatureExtract, FineTune };

std::string_view to_string(TrainMode mode);
/// Accepts feature_extract / fine_tune (case-insensitive, '-' or '_').
TrainMode parse_train_mode(std::string_view text);

/// COVID is the positive class.
struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct EvalReport {
  std::string model_id;
  TrainMode mode = TrainMode::FeatureExtract;
  double accuracy = 0.0;
  double loss = 0.0;
  Confusion confusion;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n_test = 0;
  std::string manifest_hash;
  std::uint64_t seed = 0;
  /// Provenance of the producing run (serialized under "provenance").
  std::string config_hash;
  std::string tool_version;
  /// Records that were scored; kept in memory only.
  std::vector<std::string> record_ids;
};

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
double binary_cross_entropy(std::span<const double> probabilities,
                            std::span<const Label> labels);

/// Thresholds probabilities (p >= threshold means COVID) and fills accuracy,
/// loss, confusion, precision, recall, f1 and n_test. Ratios with a zero
/// denominator are reported as 0. Throws EmptyTestSplit or ShapeMismatch.
EvalReport score_predictions(std::span<const double> probabilities,
                             std::span<const Label> labels, double threshold = 0.5);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);
void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

/// Reports sorted by accuracy (descending), then loss (ascending); stable.
struct Comparison {
  std::vector<EvalReport> ranked;

  /// Header `model,mode,accuracy,loss`.
  std::string csv() const;
  /// Grouped bar-chart data: {"series": ["accuracy", "loss"], "models": [...]}.
  std::string plot_json() const;
};

/// Throws Error{EmptyReports}.
Comparison compare_models(std::vector<EvalReport> reports);

/// Writes the CSV, a sibling .json plot-data file, and a rendered PNG chart.
void write_comparison(const std::filesystem::path& csv_path, const Comparison& comparison);

}  // namespace ecgcls
