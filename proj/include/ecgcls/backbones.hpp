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

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "ecgcls/safetensors.hpp"

namespace ecgcls {

enum class BackboneName { Vgg16, Vgg19, ResNet50, DenseNet201, InceptionV3, InceptionResNetV2 };

/// "vgg16", "vgg19", "resnet50", "densenet201", "inception_v3",
/// "inception_resnet_v2".
std::string_view to_string(BackboneName name);
/// Case-insensitive; '-' and '_' are ignored. Throws Error{UnknownBackbone}.
BackboneName parse_backbone(std::string_view text);
std::span<const BackboneName> all_backbones();

struct InputShape {
  int width = 224;
  int height = 224;
  int channels = 3;

  friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct BackboneSpec {
  BackboneName name = BackboneName::Vgg16;
  bool pretrained = false;
  InputShape native_input;
  /// safetensors file holding pretrained backbone weights (torchvision/timm
  /// parameter names). Falls back to $ECGCLS_WEIGHTS_DIR/<name>.safetensors.
  std::optional<std::filesystem::path> weights;
  /// Seed for the random initialization used when pretrained is false.
  std::uint64_t init_seed = 0;

  static BackboneSpec of(BackboneName name, bool pretrained = false);
};

/// Per-channel input standardization expected by the pretrained weights.
struct Normalization {
  std::array<float, 3> mean;
  std::array<float, 3> std;
};

/// A parameterized leaf module of a backbone, in forward order.
struct BackboneLayer {
  std::string name;
  std::vector<torch::Tensor> parameters;
  int block = 0;
};

/// Convolutional feature extractor: [N, 3, H, W] standardized input to
/// [N, feature_dim] features. Layouts and parameter names follow
/// torchvision (timm for Inception-ResNet-v2) with the ImageNet classifier
/// layer removed.
class BackboneImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(torch::Tensor x) = 0;
  virtual std::int64_t feature_dim() const = 0;
  virtual Normalization normalization() const = 0;
  /// Block index of a parameterized leaf, by its qualified module name.
  virtual int block_of(std::string_view module_name) const = 0;
  /// Index of the last convolutional block.
  virtual int last_conv_block() const = 0;

  std::vector<BackboneLayer> layers();
};

std::shared_ptr<BackboneImpl> make_backbone(BackboneName name);

/// torchvision-style random initialization from an explicit generator:
/// Kaiming-normal (fan-out) convolutions, N(0, 0.01) linear weights, zero
/// biases, unit batch-norm scale. Batch-norm running statistics are then
/// estimated on a seeded batch of smooth noise images of size `input`, so
/// that inference-mode activations stay normalized through deep stacks.
void init_backbone(BackboneImpl& backbone, torch::Generator& generator,
                   InputShape input = {});

/// Copies tensors into parameters and buffers by name (with an optional
/// prefix on the file side). Throws Error{WeightsUnavailable} for missing
/// names or shape mismatches.
void load_named_tensors(torch::nn::Module& module, std::span<const TensorBlob> tensors,
                        std::string_view prefix = {});

/// Resolves spec.weights or the weights directory; throws
/// Error{WeightsUnavailable} if no file exists.
std::filesystem::path resolve_weights_path(const BackboneSpec& spec);

}  // namespace ecgcls
