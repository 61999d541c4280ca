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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecgcls/dataset.hpp"

namespace ecgcls {

struct HyperParams {
  int epochs = 25;
  int batch_size = 32;
  double dropout = 0.1;
  int neurons = 32;
  double learning_rate = 0.001;

  /// Throws Error{ConfigInvalid}.
  void validate() const;
  /// "epochs=25;batch_size=32;dropout=0.1;neurons=32;learning_rate=0.001"
  /// using shortest round-trip formatting for the fractions.
  std::string canonical() const;
  /// Hex FNV-1a of canonical(); the trial store key.
  std::string key() const;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

struct HyperGrid {
  std::vector<int> epochs_set;
  std::vector<int> batch_set;
  std::vector<double> dropout_set;
  std::vector<int> neurons_set;
  std::vector<double> lr_set;

  std::size_t size() const;
  /// Throws Error{EmptyGrid} if any set is empty, Error{ConfigInvalid} for
  /// duplicate or out-of-range values.
  void validate() const;

  /// Epochs {25, 50} x batch {16, 32, 64} x dropout {0.1, 0.2, 0.5} x
  /// neurons {16, 32, 64} x learning rate {0.001}.
  static HyperGrid reference();
};

/// Every combination, lexicographic over the declared set orders with
/// epochs varying slowest and learning rate fastest.
std::vector<HyperParams> enumerate_grid(const HyperGrid& grid);

/// Seed for one trial, independent of execution order.
std::uint64_t trial_seed(std::uint64_t seed, const HyperParams& params);

enum class TrialStatus { Ok, Failed };

struct TrialResult {
  HyperParams params;
  std::size_t index = 0;  ///< position in enumeration order
  TrialStatus status = TrialStatus::Ok;
  std::vector<double> fold_accuracies;
  std::vector<double> fold_errors;
  double mean_accuracy = 0.0;
  double mean_error = 0.0;
  double wall_time = 0.0;  ///< seconds
  std::uint64_t seed = 0;
  std::string error;       ///< failure message when status == Failed
};

struct FoldMetrics {
  double accuracy = 0.0;
  double error = 0.0;  ///< cross-entropy loss on the held-out fold
};

/// Trains on `train` and scores on `val`; must be deterministic for a seed.
/// Exceptions mark the trial FAILED.
using Trainer = std::function<FoldMetrics(const HyperParams& params,
                                          std::span<const ImageRecord> train,
                                          std::span<const ImageRecord> val,
                                          std::uint64_t seed)>;

/// Identifies a search so that stored trials are only reused by a search
/// over the same backbone, data, fold count and seed.
struct SearchContext {
  std::string backbone;
  int k = 0;
  std::uint64_t seed = 0;
  std::string manifest_hash;

  friend bool operator==(const SearchContext&, const SearchContext&) = default;
};

struct SearchOptions {
  int workers = 1;
  std::optional<std::filesystem::path> store;
};

struct GridSearchOutcome {
  std::vector<TrialResult> results;  ///< enumeration order, one per grid point
  std::optional<HyperParams> best;   ///< empty when every trial failed
  std::size_t resumed = 0;
  std::size_t executed = 0;
};

/// Training and validation records for every fold. Validation holds the
/// fold's original TRAIN records; training holds every other TRAIN record
/// including augmented copies whose parent lies outside the fold.
struct FoldSplit {
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> val;
};
std::vector<FoldSplit> fold_splits(const Manifest& manifest);

/// Exhaustive k-fold grid search. If the manifest has no folds they are
/// assigned with kfold_partition(manifest, k, seed). With a store, finished
/// trials are appended as they complete and reused on the next run.
GridSearchOutcome run_grid_search(const HyperGrid& grid, std::string_view backbone,
                                  const Manifest& manifest, int k, std::uint64_t seed,
                                  const Trainer& trainer, const SearchOptions& options = {});

/// Descending mean accuracy, then ascending mean error, then enumeration
/// order. FAILED trials sort last. Throws Error{EmptyResults}.
std::vector<TrialResult> rank_trials(std::vector<TrialResult> results);

/// Append-only JSON Lines trial store. A torn final line (from an
/// interrupted write) is ignored on load.
class TrialStore {
 public:
  explicit TrialStore(std::filesystem::path path);

  /// Trials recorded under `context`, last entry per key wins.
  std::vector<TrialResult> load(const SearchContext& context) const;
  /// Every well-formed trial regardless of context.
  std::vector<TrialResult> load_all() const;
  void append(const TrialResult& result, const SearchContext& context);

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Columns: Epoch | Batch Size | Dropout | Layer Neurons | Accuracy |
/// Error, rows in enumeration order. A Learning Rate column is added when
/// the results span more than one learning rate.
std::string format_trial_table(std::span<const TrialResult> results);
std::string trials_to_json(std::span<const TrialResult> results);

}  // namespace ecgcls
