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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "ecgcls/backbones.hpp"
#include "ecgcls/hypersearch.hpp"
#include "ecgcls/image.hpp"
#include "ecgcls/metrics.hpp"

namespace ecgcls {

struct HeadConfig {
  int neurons = 32;
  double dropout = 0.1;

  /// Throws Error{ConfigInvalid}.
  void validate() const;
  /// (F + 1) * neurons + (neurons + 1).
  static std::int64_t parameter_count(std::int64_t feature_dim, int neurons);
};

/// features -> dense(neurons) -> ReLU -> dropout -> dense(1) logit.
class HeadImpl : public torch::nn::Module {
 public:
  HeadImpl(std::int64_t feature_dim, const HeadConfig& config);

  /// Dropout is applied only when `dropout_gen` is given.
  torch::Tensor forward(const torch::Tensor& features, torch::Generator* dropout_gen = nullptr);

  double dropout = 0.0;
  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};
};
TORCH_MODULE(Head);

/// Which trailing portion of the backbone is trainable. Policies are
/// absolute: applying one resets the backbone's trainable set.
struct FineTunePolicy {
  enum class Kind { None, LastBlock, LastNLayers, All };
  Kind kind = Kind::None;
  int layers = 0;  ///< for LastNLayers

  /// "none", "last_block", "last_n_layers:N", "all".
  static FineTunePolicy parse(std::string_view text);
  std::string str() const;

  friend bool operator==(const FineTunePolicy&, const FineTunePolicy&) = default;
};

/// Where a trained model's weights came from.
struct ModelProvenance {
  std::string manifest_hash;
  std::optional<HyperParams> params;
  std::uint64_t seed = 0;
  std::string config_hash;
  /// Record ids used for optimization or validation during training.
  std::vector<std::string> trained_on;
};

class TrainableModel {
 public:
  TrainableModel(BackboneSpec spec, HeadConfig head, std::shared_ptr<BackboneImpl> backbone,
                 Head head_module);

  const BackboneSpec& backbone_spec() const { return spec_; }
  const HeadConfig& head_config() const { return head_config_; }
  TrainMode mode() const { return mode_; }
  const FineTunePolicy& policy() const { return policy_; }

  BackboneImpl& backbone() { return *backbone_; }
  HeadImpl& head() { return *head_; }
  std::int64_t feature_dim() const { return backbone_->feature_dim(); }

  std::int64_t total_param_count() const;
  std::int64_t trainable_param_count() const;
  std::int64_t head_param_count() const;
  std::vector<torch::Tensor> trainable_parameters() const;
  /// True when no backbone parameter is trainable.
  bool backbone_frozen() const;

  /// FNV-1a over the raw bytes of every parameter and buffer.
  std::uint64_t backbone_checksum() const;
  std::uint64_t head_checksum() const;

  /// Resizes to the native input (area filter when shrinking, bilinear
  /// otherwise), replicates gray to three channels and standardizes.
  /// Throws Error{ShapeMismatch} for empty images or unsupported channels.
  torch::Tensor to_input(std::span<const PixelImage> images) const;
  /// Backbone features; gradients flow only if some backbone layer is
  /// trainable.
  torch::Tensor features(const torch::Tensor& input);
  /// Inference probabilities in [0, 1], one per image.
  std::vector<double> predict(std::span<const PixelImage> images);
  std::vector<double> predict_features(const torch::Tensor& features);

  void set_head_dropout(double dropout);

  ModelProvenance provenance;

 private:
  friend TrainableModel& set_fine_tune_policy(TrainableModel&, const FineTunePolicy&);

  BackboneSpec spec_;
  HeadConfig head_config_;
  std::shared_ptr<BackboneImpl> backbone_;
  Head head_;
  TrainMode mode_ = TrainMode::FeatureExtract;
  FineTunePolicy policy_;
};

/// Builds backbone + head. FEATURE_EXTRACT freezes the whole backbone;
/// FINE_TUNE applies the default last-block policy. The head is initialized
/// from `seed`; a random backbone from spec.init_seed. Pretrained weights are
/// read from resolve_weights_path(spec).
/// Throws WeightsUnavailable, UnknownBackbone, ConfigInvalid.
TrainableModel build_model(const BackboneSpec& spec, const HeadConfig& head, TrainMode mode,
                           std::uint64_t seed = 0);

/// Marks the policy's portion of the backbone trainable (everything else
/// frozen). Mode becomes FINE_TUNE iff any backbone parameter is trainable.
/// Throws Error{PolicyInvalid}.
TrainableModel& set_fine_tune_policy(TrainableModel& model, const FineTunePolicy& policy);

/// Directory with metadata.json and weights.safetensors.
void save_checkpoint(const std::filesystem::path& dir, TrainableModel& model);
TrainableModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace ecgcls
