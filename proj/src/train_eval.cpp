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

#include "ecgcls/train_eval.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "ecgcls/error.hpp"
#include "ecgcls/hash.hpp"
#include "ecgcls/random.hpp"

namespace ecgcls {

namespace {

constexpr std::size_t kLoadChunk = 8;

std::string backbone_key(const TrainableModel& model) {
  const auto& s = model.backbone_spec();
  std::string key(to_string(s.name));
  key += s.pretrained ? ":pretrained:" + (s.weights ? s.weights->string() : std::string("default"))
                      : ":random:" + std::to_string(s.init_seed);
  return key;
}

std::vector<Label> labels_of(std::span<const ImageRecord> records) {
  std::vector<Label> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

torch::Tensor targets_of(std::span<const ImageRecord> records) {
  auto t = torch::empty({static_cast<std::int64_t>(records.size())});
  for (std::size_t i = 0; i < records.size(); ++i) {
    t[static_cast<std::int64_t>(i)] = records[i].label == Label::Covid ? 1.0f : 0.0f;
  }
  return t;
}

torch::Tensor load_inputs(const TrainableModel& model, std::span<const ImageRecord> records,
                          const ImageLoader& loader) {
  std::vector<PixelImage> images;
  images.reserve(records.size());
  for (const auto& r : records) images.push_back(loader(r));
  return model.to_input(images);
}

// Features for every record through the frozen backbone, cached by id.
torch::Tensor frozen_features(TrainableModel& model, std::span<const ImageRecord> records,
                              const TrainOptions& options, FeatureCache& cache) {
  const std::string key = backbone_key(model);
  std::vector<torch::Tensor> rows(records.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (auto hit = cache.get(key, records[i].id)) {
      rows[i] = *hit;
    } else {
      missing.push_back(i);
    }
  }
  torch::NoGradGuard no_grad;
  for (std::size_t start = 0; start < missing.size(); start += kLoadChunk) {
    const std::size_t end = std::min(missing.size(), start + kLoadChunk);
    std::vector<ImageRecord> chunk;
    for (std::size_t j = start; j < end; ++j) chunk.push_back(records[missing[j]]);
    const auto feats = model.features(load_inputs(model, chunk, options.loader));
    for (std::size_t j = start; j < end; ++j) {
      auto row = feats[static_cast<std::int64_t>(j - start)].clone();
      cache.put(key, records[missing[j]].id, row);
      rows[missing[j]] = row;
    }
  }
  if (rows.empty()) return torch::empty({0, model.feature_dim()});
  return torch::stack(rows);
}

struct Scores {
  double loss = 0.0;
  double accuracy = 0.0;
};

Scores score(const std::vector<double>& probs, std::span<const ImageRecord> records) {
  const auto labels = labels_of(records);
  const auto report = score_predictions(probs, labels);
  return {report.loss, report.accuracy};
}

}  // namespace

std::optional<torch::Tensor> FeatureCache::get(const std::string& backbone_key,
                                               const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find({backbone_key, id});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void FeatureCache::put(const std::string& backbone_key, const std::string& id,
                       torch::Tensor features) {
  std::lock_guard lock(mutex_);
  entries_[{backbone_key, id}] = std::move(features);
}

std::size_t FeatureCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

TrainHistory train(TrainableModel& model, std::span<const ImageRecord> train_records,
                   std::span<const ImageRecord> val_records, const HyperParams& params,
                   std::uint64_t seed, const TrainOptions& options) {
  // Zero epochs is a valid no-op request; everything else must be a grid-valid point.
  if (params.epochs < 0) throw Error(Errc::ConfigInvalid, "epochs must not be negative");
  HyperParams checked = params;
  checked.epochs = std::max(checked.epochs, 1);
  checked.validate();
  if (params.neurons != model.head_config().neurons) {
    throw Error(Errc::ConfigInvalid, "params.neurons (" + std::to_string(params.neurons) +
                                         ") does not match the model head (" +
                                         std::to_string(model.head_config().neurons) + ")");
  }
  if (train_records.empty()) throw Error(Errc::EmptyTrainSplit, "no training records");
  model.set_head_dropout(params.dropout);

  TrainHistory history;
  auto& prov = model.provenance;
  prov.params = params;
  prov.seed = seed;
  {
    std::set<std::string> seen(prov.trained_on.begin(), prov.trained_on.end());
    for (auto span : {train_records, val_records}) {
      for (const auto& r : span) {
        if (seen.insert(r.id).second) prov.trained_on.push_back(r.id);
      }
    }
  }
  if (params.epochs == 0) return history;

  auto cache = options.cache ? options.cache : std::make_shared<FeatureCache>();
  const bool frozen = model.backbone_frozen();
  torch::Tensor train_features;
  torch::Tensor val_features;
  if (frozen) {
    train_features = frozen_features(model, train_records, options, *cache);
    val_features = frozen_features(model, val_records, options, *cache);
  }
  const auto targets = targets_of(train_records);

  torch::optim::Adam optimizer(model.trainable_parameters(),
                               torch::optim::AdamOptions(params.learning_rate));
  auto dropout_gen = at::make_generator<at::CPUGeneratorImpl>(derive_seed(seed, "dropout"));
  Rng shuffle_rng(derive_seed(seed, "shuffle"));
  std::vector<std::size_t> order(train_records.size());

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(params.batch_size));
      std::vector<std::int64_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      const auto index = torch::tensor(idx, torch::kLong);
      torch::Tensor feats;
      if (frozen) {
        feats = train_features.index_select(0, index);
      } else {
        std::vector<ImageRecord> batch;
        for (auto i : idx) batch.push_back(train_records[static_cast<std::size_t>(i)]);
        feats = model.features(load_inputs(model, batch, options.loader));
      }
      const auto y = targets.index_select(0, index);
      optimizer.zero_grad();
      const auto logits = model.head().forward(feats, &dropout_gen);
      const auto loss = torch::binary_cross_entropy_with_logits(logits, y);
      loss.backward();
      optimizer.step();
      loss_sum += loss.item<double>() * static_cast<double>(idx.size());
      correct += static_cast<std::size_t>(((logits >= 0).to(torch::kFloat32) == y).sum().item<std::int64_t>());
    }
    history.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    history.train_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(order.size()));
    if (!val_records.empty()) {
      const auto probs = frozen ? model.predict_features(val_features)
                                : predict_records(model, val_records, options);
      const auto s = score(probs, val_records);
      history.val_loss.push_back(s.loss);
      history.val_accuracy.push_back(s.accuracy);
    }
    history.epochs_run = epoch + 1;
    if (options.on_epoch) options.on_epoch(epoch, history);
  }
  return history;
}

TrainHistory train(TrainableModel& model, const Manifest& manifest, const HyperParams& params,
                   std::uint64_t seed, const TrainOptions& options) {
  if (!manifest.is_split()) throw Error(Errc::NotSplit, "manifest has no split assignment");
  std::vector<ImageRecord> train_records;
  std::vector<ImageRecord> val_records;
  for (const auto& r : manifest.records) {
    if (r.split == Split::Train) train_records.push_back(r);
    if (r.split == Split::Val) val_records.push_back(r);
  }
  auto history = train(model, train_records, val_records, params, seed, options);
  model.provenance.manifest_hash = manifest_hash(manifest);
  return history;
}

std::vector<double> predict_records(TrainableModel& model, std::span<const ImageRecord> records,
                                    const TrainOptions& options) {
  std::vector<double> out;
  out.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += kLoadChunk) {
    const auto chunk = records.subspan(start, std::min(kLoadChunk, records.size() - start));
    std::vector<PixelImage> images;
    for (const auto& r : chunk) images.push_back(options.loader(r));
    const auto probs = model.predict(images);
    out.insert(out.end(), probs.begin(), probs.end());
  }
  return out;
}

EvalReport evaluate(TrainableModel& model, const Manifest& manifest, double threshold,
                    const TrainOptions& options) {
  std::vector<ImageRecord> test;
  for (const auto& r : manifest.records) {
    if (r.split == Split::Test) test.push_back(r);
  }
  if (test.empty()) throw Error(Errc::EmptyTestSplit, "manifest has no TEST records");
  const std::set<std::string> seen(model.provenance.trained_on.begin(),
                                   model.provenance.trained_on.end());
  for (const auto& r : test) {
    if (seen.count(r.id) != 0 || (r.parent && seen.count(*r.parent) != 0)) {
      throw Error(Errc::DataLeak, "test record " + r.id + " was used during training");
    }
  }
  const auto probs = predict_records(model, test, options);
  auto report = score_predictions(probs, labels_of(test), threshold);
  report.model_id = std::string(to_string(model.backbone_spec().name));
  report.mode = model.mode();
  report.manifest_hash = manifest_hash(manifest);
  report.seed = model.provenance.seed;
  for (const auto& r : test) report.record_ids.push_back(r.id);
  return report;
}

Trainer make_model_trainer(BackboneSpec spec, TrainMode mode, std::optional<FineTunePolicy> policy,
                           TrainOptions options) {
  if (!options.cache) options.cache = std::make_shared<FeatureCache>();
  return [spec, mode, policy, options](const HyperParams& params,
                                       std::span<const ImageRecord> train_records,
                                       std::span<const ImageRecord> val_records,
                                       std::uint64_t seed) {
    auto model = build_model(spec, HeadConfig{params.neurons, params.dropout}, mode, seed);
    if (policy) set_fine_tune_policy(model, *policy);
    train(model, train_records, {}, params, seed, options);
    const auto probs = model.backbone_frozen()
                           ? model.predict_features(frozen_features(model, val_records, options,
                                                                    *options.cache))
                           : predict_records(model, val_records, options);
    const auto s = score(probs, val_records);
    return FoldMetrics{s.accuracy, s.loss};
  };
}

}  // namespace ecgcls
