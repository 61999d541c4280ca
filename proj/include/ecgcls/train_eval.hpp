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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ecgcls/augment.hpp"
#include "ecgcls/hypersearch.hpp"
#include "ecgcls/metrics.hpp"
#include "ecgcls/models.hpp"

namespace ecgcls {

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  /// Empty when the validation set is empty.
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;
  int epochs_run = 0;
};

/// Backbone features per record id. Only consulted while the backbone is
/// frozen; entries are keyed by the backbone's identity (name, weights
/// source, init seed) so one cache can serve many heads.
class FeatureCache {
 public:
  std::optional<torch::Tensor> get(const std::string& backbone_key, const std::string& id) const;
  void put(const std::string& backbone_key, const std::string& id, torch::Tensor features);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, torch::Tensor> entries_;
};

struct TrainOptions {
  ImageLoader loader = disk_loader();
  std::shared_ptr<FeatureCache> cache;  ///< created per call when null
  /// Called after each epoch.
  std::function<void(int epoch, const TrainHistory&)> on_epoch;
};

/// Adam on the trainable parameters, binary cross-entropy on the logit,
/// reshuffled mini-batches every epoch. The head dropout is taken from
/// params; params.neurons must match the head. Provenance records every
/// record id touched. Throws EmptyTrainSplit, ConfigInvalid, ShapeMismatch.
TrainHistory train(TrainableModel& model, std::span<const ImageRecord> train_records,
                   std::span<const ImageRecord> val_records, const HyperParams& params,
                   std::uint64_t seed, const TrainOptions& options = {});

/// Trains on the TRAIN split (augmented copies included) and validates on
/// VAL. TEST is never read.
TrainHistory train(TrainableModel& model, const Manifest& manifest, const HyperParams& params,
                   std::uint64_t seed, const TrainOptions& options = {});

/// Probabilities for each record, in order.
std::vector<double> predict_records(TrainableModel& model, std::span<const ImageRecord> records,
                                    const TrainOptions& options = {});

/// Scores the TEST split. Throws EmptyTestSplit, or DataLeak if the model
/// was trained on any test record.
EvalReport evaluate(TrainableModel& model, const Manifest& manifest, double threshold = 0.5,
                    const TrainOptions& options = {});

/// Grid-search trainer: builds a fresh model per (trial, fold) with the
/// trial's head settings, trains it, and scores the held-out fold.
Trainer make_model_trainer(BackboneSpec spec, TrainMode mode, std::optional<FineTunePolicy> policy,
                           TrainOptions options = {});

}  // namespace ecgcls
