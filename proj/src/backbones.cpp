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

#include "ecgcls/backbones.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>

#include "ecgcls/error.hpp"

namespace ecgcls {

namespace nn = torch::nn;
namespace F = torch::nn::functional;
namespace fs = std::filesystem;

namespace {

constexpr std::array<BackboneName, 6> kAllBackbones = {
    BackboneName::Vgg16,       BackboneName::Vgg19,       BackboneName::ResNet50,
    BackboneName::DenseNet201, BackboneName::InceptionV3, BackboneName::InceptionResNetV2};

constexpr Normalization kImageNet{{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}};
constexpr Normalization kInception{{0.5f, 0.5f, 0.5f}, {0.5f, 0.5f, 0.5f}};

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::vector<std::int64_t> kernel,
                std::vector<std::int64_t> stride = {1, 1},
                std::vector<std::int64_t> padding = {0, 0}, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, torch::IntArrayRef(kernel))
                        .stride(torch::IntArrayRef(stride))
                        .padding(torch::IntArrayRef(padding))
                        .bias(bias));
}

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride = 1,
                std::int64_t padding = 0, bool bias = false) {
  return conv(in, out, {kernel, kernel}, {stride, stride}, {padding, padding}, bias);
}

// ---------------------------------------------------------------- VGG

class VggImpl final : public BackboneImpl {
 public:
  explicit VggImpl(const std::vector<int>& config) {
    std::int64_t in = 3;
    int block = 0;
    for (int v : config) {
      if (v == 0) {
        features_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
        block_of_index_.push_back(block++);
      } else {
        features_->push_back(conv(in, v, 3, 1, 1, true));
        block_of_index_.push_back(block);
        features_->push_back(nn::ReLU(nn::ReLUOptions(true)));
        block_of_index_.push_back(block);
        in = v;
      }
    }
    fc_block_ = block;
    classifier_->push_back(nn::Linear(512 * 7 * 7, 4096));
    classifier_->push_back(nn::ReLU(nn::ReLUOptions(true)));
    classifier_->push_back(nn::Dropout(0.5));
    classifier_->push_back(nn::Linear(4096, 4096));
    classifier_->push_back(nn::ReLU(nn::ReLUOptions(true)));
    classifier_->push_back(nn::Dropout(0.5));
    register_module("features", features_);
    register_module("avgpool", avgpool_);
    register_module("classifier", classifier_);
  }

  torch::Tensor forward(torch::Tensor x) override {
    x = avgpool_(features_->forward(x));
    return classifier_->forward(torch::flatten(x, 1));
  }
  std::int64_t feature_dim() const override { return 4096; }
  Normalization normalization() const override { return kImageNet; }
  int block_of(std::string_view name) const override {
    if (starts_with(name, "features.")) {
      const int idx = std::atoi(std::string(name.substr(9)).c_str());
      return block_of_index_.at(static_cast<std::size_t>(idx));
    }
    return fc_block_;
  }
  // Blocks 0..4 are the convolutional stages; the fully connected pair
  // forms block 5.
  int last_conv_block() const override { return fc_block_ - 1; }

 private:
  nn::Sequential features_;
  nn::AdaptiveAvgPool2d avgpool_{nn::AdaptiveAvgPool2dOptions(7)};
  nn::Sequential classifier_;
  std::vector<int> block_of_index_;
  int fc_block_ = 0;
};

// ------------------------------------------------------------- ResNet

class BottleneckImpl : public nn::Module {
 public:
  BottleneckImpl(std::int64_t inplanes, std::int64_t planes, std::int64_t stride,
                 bool downsample)
      : conv1(conv(inplanes, planes, 1)),
        bn1(planes),
        conv2(conv(planes, planes, 3, stride, 1)),
        bn2(planes),
        conv3(conv(planes, planes * 4, 1)),
        bn3(planes * 4) {
    register_module("conv1", conv1);
    register_module("bn1", bn1);
    register_module("conv2", conv2);
    register_module("bn2", bn2);
    register_module("conv3", conv3);
    register_module("bn3", bn3);
    if (downsample) {
      down->push_back(conv(inplanes, planes * 4, 1, stride));
      down->push_back(nn::BatchNorm2d(planes * 4));
      register_module("downsample", down);
      has_down = true;
    }
  }

  torch::Tensor forward(torch::Tensor x) {
    auto out = torch::relu(bn1(conv1(x)));
    out = torch::relu(bn2(conv2(out)));
    out = bn3(conv3(out));
    out += has_down ? down->forward(x) : x;
    return torch::relu(out);
  }

  nn::Conv2d conv1;
  nn::BatchNorm2d bn1;
  nn::Conv2d conv2;
  nn::BatchNorm2d bn2;
  nn::Conv2d conv3;
  nn::BatchNorm2d bn3;
  nn::Sequential down;
  bool has_down = false;
};
TORCH_MODULE(Bottleneck);

class ResNet50Impl final : public BackboneImpl {
 public:
  ResNet50Impl() {
    register_module("conv1", conv1_);
    register_module("bn1", bn1_);
    const std::array<int, 4> blocks = {3, 4, 6, 3};
    std::int64_t inplanes = 64;
    for (int stage = 0; stage < 4; ++stage) {
      const std::int64_t planes = 64LL << stage;
      const std::int64_t stride = stage == 0 ? 1 : 2;
      nn::Sequential layer;
      for (int b = 0; b < blocks[static_cast<std::size_t>(stage)]; ++b) {
        const bool first = b == 0;
        layer->push_back(Bottleneck(inplanes, planes, first ? stride : 1,
                                    first && (stride != 1 || inplanes != planes * 4)));
        inplanes = planes * 4;
      }
      layers_.push_back(register_module("layer" + std::to_string(stage + 1), layer));
    }
  }

  torch::Tensor forward(torch::Tensor x) override {
    x = torch::relu(bn1_(conv1_(x)));
    x = F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
    for (auto& layer : layers_) x = layer->forward(x);
    return torch::flatten(F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1)), 1);
  }
  std::int64_t feature_dim() const override { return 2048; }
  Normalization normalization() const override { return kImageNet; }
  int block_of(std::string_view name) const override {
    if (starts_with(name, "layer")) return name[5] - '0';
    return 0;
  }
  int last_conv_block() const override { return 4; }

 private:
  nn::Conv2d conv1_ = conv(3, 64, 7, 2, 3);
  nn::BatchNorm2d bn1_{64};
  std::vector<nn::Sequential> layers_;
};

// ----------------------------------------------------------- DenseNet

// Sequential with a concrete forward so it can nest inside another one.
class NestedSequentialImpl : public nn::SequentialImpl {
 public:
  torch::Tensor forward(torch::Tensor x) { return nn::SequentialImpl::forward(x); }
};
TORCH_MODULE(NestedSequential);

class DenseLayerImpl : public nn::Module {
 public:
  DenseLayerImpl(std::int64_t in, std::int64_t growth, std::int64_t bn_size)
      : norm1(in),
        conv1(conv(in, bn_size * growth, 1)),
        norm2(bn_size * growth),
        conv2(conv(bn_size * growth, growth, 3, 1, 1)) {
    register_module("norm1", norm1);
    register_module("conv1", conv1);
    register_module("norm2", norm2);
    register_module("conv2", conv2);
  }

  torch::Tensor forward(torch::Tensor x) {
    x = conv1(torch::relu(norm1(x)));
    return conv2(torch::relu(norm2(x)));
  }

  nn::BatchNorm2d norm1;
  nn::Conv2d conv1;
  nn::BatchNorm2d norm2;
  nn::Conv2d conv2;
};
TORCH_MODULE(DenseLayer);

class DenseBlockImpl : public nn::Module {
 public:
  DenseBlockImpl(int layers, std::int64_t in, std::int64_t growth, std::int64_t bn_size) {
    for (int i = 0; i < layers; ++i) {
      layers_.push_back(register_module("denselayer" + std::to_string(i + 1),
                                        DenseLayer(in + i * growth, growth, bn_size)));
    }
  }

  torch::Tensor forward(torch::Tensor x) {
    std::vector<torch::Tensor> features{x};
    for (auto& layer : layers_) features.push_back(layer(torch::cat(features, 1)));
    return torch::cat(features, 1);
  }

 private:
  std::vector<DenseLayer> layers_;
};
TORCH_MODULE(DenseBlock);

class DenseNet201Impl final : public BackboneImpl {
 public:
  DenseNet201Impl() {
    constexpr std::int64_t growth = 32;
    constexpr std::int64_t bn_size = 4;
    const std::array<int, 4> config = {6, 12, 48, 32};
    features_->push_back("conv0", conv(3, 64, 7, 2, 3));
    features_->push_back("norm0", nn::BatchNorm2d(64));
    features_->push_back("relu0", nn::ReLU(nn::ReLUOptions(true)));
    features_->push_back("pool0", nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
    std::int64_t channels = 64;
    for (std::size_t i = 0; i < config.size(); ++i) {
      features_->push_back("denseblock" + std::to_string(i + 1),
                           DenseBlock(config[i], channels, growth, bn_size));
      channels += config[i] * growth;
      if (i + 1 < config.size()) {
        NestedSequential transition;
        transition->push_back("norm", nn::BatchNorm2d(channels));
        transition->push_back("relu", nn::ReLU(nn::ReLUOptions(true)));
        transition->push_back("conv", conv(channels, channels / 2, 1));
        transition->push_back("pool", nn::AvgPool2d(nn::AvgPool2dOptions(2).stride(2)));
        features_->push_back("transition" + std::to_string(i + 1), transition);
        channels /= 2;
      }
    }
    features_->push_back("norm5", nn::BatchNorm2d(channels));
    register_module("features", features_);
  }

  torch::Tensor forward(torch::Tensor x) override {
    x = torch::relu(features_->forward(x));
    return torch::flatten(F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1)), 1);
  }
  std::int64_t feature_dim() const override { return 1920; }
  Normalization normalization() const override { return kImageNet; }
  int block_of(std::string_view name) const override {
    for (std::string_view stem : {"features.denseblock", "features.transition"}) {
      if (starts_with(name, stem)) return name[stem.size()] - '0';
    }
    if (starts_with(name, "features.norm5")) return 4;
    return 0;
  }
  int last_conv_block() const override { return 4; }

 private:
  nn::Sequential features_;
};

// --------------------------------------------------------- Inception

// Conv (no bias) + batch norm (eps 1e-3) + ReLU; registered as conv/bn.
class ConvBnImpl : public nn::Module {
 public:
  ConvBnImpl(std::int64_t in, std::int64_t out, std::vector<std::int64_t> kernel,
             std::vector<std::int64_t> stride = {1, 1}, std::vector<std::int64_t> padding = {0, 0})
      : conv_(conv(in, out, std::move(kernel), std::move(stride), std::move(padding))),
        bn_(nn::BatchNorm2dOptions(out).eps(0.001)) {
    register_module("conv", conv_);
    register_module("bn", bn_);
  }
  ConvBnImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride = 1,
             std::int64_t padding = 0)
      : ConvBnImpl(in, out, {kernel, kernel}, {stride, stride}, {padding, padding}) {}

  torch::Tensor forward(torch::Tensor x) { return torch::relu(bn_(conv_(x))); }

 private:
  nn::Conv2d conv_;
  nn::BatchNorm2d bn_;
};
TORCH_MODULE(ConvBn);

// Asymmetric-kernel variant (stride 1).
ConvBn conv_bn(std::int64_t in, std::int64_t out, std::array<std::int64_t, 2> kernel,
               std::array<std::int64_t, 2> padding) {
  return ConvBn(std::make_shared<ConvBnImpl>(
      in, out, std::vector<std::int64_t>(kernel.begin(), kernel.end()),
      std::vector<std::int64_t>{1, 1}, std::vector<std::int64_t>(padding.begin(), padding.end())));
}

torch::Tensor avg3(const torch::Tensor& x, bool count_include_pad = true) {
  return F::avg_pool2d(
      x, F::AvgPool2dFuncOptions(3).stride(1).padding(1).count_include_pad(count_include_pad));
}

torch::Tensor max3s2(const torch::Tensor& x) {
  return F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2));
}

// Registers ConvBn children in declaration order and runs them as chains.
class BranchModule : public nn::Module {
 protected:
  ConvBn add(const std::string& name, ConvBn module) { return register_module(name, module); }
};

class InceptionAImpl : public BranchModule {
 public:
  InceptionAImpl(std::int64_t in, std::int64_t pool_features) {
    b1x1 = add("branch1x1", ConvBn(in, 64, 1));
    b5x5_1 = add("branch5x5_1", ConvBn(in, 48, 1));
    b5x5_2 = add("branch5x5_2", ConvBn(48, 64, 5, 1, 2));
    b3dbl_1 = add("branch3x3dbl_1", ConvBn(in, 64, 1));
    b3dbl_2 = add("branch3x3dbl_2", ConvBn(64, 96, 3, 1, 1));
    b3dbl_3 = add("branch3x3dbl_3", ConvBn(96, 96, 3, 1, 1));
    bpool = add("branch_pool", ConvBn(in, pool_features, 1));
  }
  torch::Tensor forward(torch::Tensor x) {
    return torch::cat({b1x1(x), b5x5_2(b5x5_1(x)), b3dbl_3(b3dbl_2(b3dbl_1(x))), bpool(avg3(x))}, 1);
  }
  ConvBn b1x1{nullptr}, b5x5_1{nullptr}, b5x5_2{nullptr}, b3dbl_1{nullptr}, b3dbl_2{nullptr},
      b3dbl_3{nullptr}, bpool{nullptr};
};
TORCH_MODULE(InceptionA);

class InceptionBImpl : public BranchModule {
 public:
  explicit InceptionBImpl(std::int64_t in) {
    b3x3 = add("branch3x3", ConvBn(in, 384, 3, 2));
    b3dbl_1 = add("branch3x3dbl_1", ConvBn(in, 64, 1));
    b3dbl_2 = add("branch3x3dbl_2", ConvBn(64, 96, 3, 1, 1));
    b3dbl_3 = add("branch3x3dbl_3", ConvBn(96, 96, 3, 2));
  }
  torch::Tensor forward(torch::Tensor x) {
    return torch::cat({b3x3(x), b3dbl_3(b3dbl_2(b3dbl_1(x))), max3s2(x)}, 1);
  }
  ConvBn b3x3{nullptr}, b3dbl_1{nullptr}, b3dbl_2{nullptr}, b3dbl_3{nullptr};
};
TORCH_MODULE(InceptionB);

class InceptionCImpl : public BranchModule {
 public:
  InceptionCImpl(std::int64_t in, std::int64_t c7) {
    b1x1 = add("branch1x1", ConvBn(in, 192, 1));
    b7_1 = add("branch7x7_1", ConvBn(in, c7, 1));
    b7_2 = add("branch7x7_2", conv_bn(c7, c7, {1, 7}, {0, 3}));
    b7_3 = add("branch7x7_3", conv_bn(c7, 192, {7, 1}, {3, 0}));
    b7dbl_1 = add("branch7x7dbl_1", ConvBn(in, c7, 1));
    b7dbl_2 = add("branch7x7dbl_2", conv_bn(c7, c7, {7, 1}, {3, 0}));
    b7dbl_3 = add("branch7x7dbl_3", conv_bn(c7, c7, {1, 7}, {0, 3}));
    b7dbl_4 = add("branch7x7dbl_4", conv_bn(c7, c7, {7, 1}, {3, 0}));
    b7dbl_5 = add("branch7x7dbl_5", conv_bn(c7, 192, {1, 7}, {0, 3}));
    bpool = add("branch_pool", ConvBn(in, 192, 1));
  }
  torch::Tensor forward(torch::Tensor x) {
    auto b7 = b7_3(b7_2(b7_1(x)));
    auto b7dbl = b7dbl_5(b7dbl_4(b7dbl_3(b7dbl_2(b7dbl_1(x)))));
    return torch::cat({b1x1(x), b7, b7dbl, bpool(avg3(x))}, 1);
  }
  ConvBn b1x1{nullptr}, b7_1{nullptr}, b7_2{nullptr}, b7_3{nullptr}, b7dbl_1{nullptr},
      b7dbl_2{nullptr}, b7dbl_3{nullptr}, b7dbl_4{nullptr}, b7dbl_5{nullptr}, bpool{nullptr};
};
TORCH_MODULE(InceptionC);

class InceptionDImpl : public BranchModule {
 public:
  explicit InceptionDImpl(std::int64_t in) {
    b3_1 = add("branch3x3_1", ConvBn(in, 192, 1));
    b3_2 = add("branch3x3_2", ConvBn(192, 320, 3, 2));
    b7_1 = add("branch7x7x3_1", ConvBn(in, 192, 1));
    b7_2 = add("branch7x7x3_2", conv_bn(192, 192, {1, 7}, {0, 3}));
    b7_3 = add("branch7x7x3_3", conv_bn(192, 192, {7, 1}, {3, 0}));
    b7_4 = add("branch7x7x3_4", ConvBn(192, 192, 3, 2));
  }
  torch::Tensor forward(torch::Tensor x) {
    return torch::cat({b3_2(b3_1(x)), b7_4(b7_3(b7_2(b7_1(x)))), max3s2(x)}, 1);
  }
  ConvBn b3_1{nullptr}, b3_2{nullptr}, b7_1{nullptr}, b7_2{nullptr}, b7_3{nullptr}, b7_4{nullptr};
};
TORCH_MODULE(InceptionD);

class InceptionEImpl : public BranchModule {
 public:
  explicit InceptionEImpl(std::int64_t in) {
    b1x1 = add("branch1x1", ConvBn(in, 320, 1));
    b3_1 = add("branch3x3_1", ConvBn(in, 384, 1));
    b3_2a = add("branch3x3_2a", conv_bn(384, 384, {1, 3}, {0, 1}));
    b3_2b = add("branch3x3_2b", conv_bn(384, 384, {3, 1}, {1, 0}));
    b3dbl_1 = add("branch3x3dbl_1", ConvBn(in, 448, 1));
    b3dbl_2 = add("branch3x3dbl_2", ConvBn(448, 384, 3, 1, 1));
    b3dbl_3a = add("branch3x3dbl_3a", conv_bn(384, 384, {1, 3}, {0, 1}));
    b3dbl_3b = add("branch3x3dbl_3b", conv_bn(384, 384, {3, 1}, {1, 0}));
    bpool = add("branch_pool", ConvBn(in, 192, 1));
  }
  torch::Tensor forward(torch::Tensor x) {
    auto b3 = b3_1(x);
    auto b3dbl = b3dbl_2(b3dbl_1(x));
    return torch::cat({b1x1(x), torch::cat({b3_2a(b3), b3_2b(b3)}, 1),
                       torch::cat({b3dbl_3a(b3dbl), b3dbl_3b(b3dbl)}, 1), bpool(avg3(x))},
                      1);
  }
  ConvBn b1x1{nullptr}, b3_1{nullptr}, b3_2a{nullptr}, b3_2b{nullptr}, b3dbl_1{nullptr},
      b3dbl_2{nullptr}, b3dbl_3a{nullptr}, b3dbl_3b{nullptr}, bpool{nullptr};
};
TORCH_MODULE(InceptionE);

class InceptionV3Impl final : public BackboneImpl {
 public:
  InceptionV3Impl() {
    stem_.push_back(register_module("Conv2d_1a_3x3", ConvBn(3, 32, 3, 2)));
    stem_.push_back(register_module("Conv2d_2a_3x3", ConvBn(32, 32, 3)));
    stem_.push_back(register_module("Conv2d_2b_3x3", ConvBn(32, 64, 3, 1, 1)));
    stem2_.push_back(register_module("Conv2d_3b_1x1", ConvBn(64, 80, 1)));
    stem2_.push_back(register_module("Conv2d_4a_3x3", ConvBn(80, 192, 3)));
    mixed_->push_back("Mixed_5b", InceptionA(192, 32));
    mixed_->push_back("Mixed_5c", InceptionA(256, 64));
    mixed_->push_back("Mixed_5d", InceptionA(288, 64));
    mixed_->push_back("Mixed_6a", InceptionB(288));
    mixed_->push_back("Mixed_6b", InceptionC(768, 128));
    mixed_->push_back("Mixed_6c", InceptionC(768, 160));
    mixed_->push_back("Mixed_6d", InceptionC(768, 160));
    mixed_->push_back("Mixed_6e", InceptionC(768, 192));
    mixed_->push_back("Mixed_7a", InceptionD(768));
    mixed_->push_back("Mixed_7b", InceptionE(1280));
    mixed_->push_back("Mixed_7c", InceptionE(2048));
    // Flatten the Mixed_* modules into this module's namespace so that
    // parameter names match torchvision ("Mixed_5b.branch1x1.conv.weight").
    for (const auto& item : mixed_->named_children()) register_module(item.key(), item.value());
  }

  torch::Tensor forward(torch::Tensor x) override {
    for (auto& m : stem_) x = m(x);
    x = max3s2(x);
    for (auto& m : stem2_) x = m(x);
    x = max3s2(x);
    x = mixed_->forward(x);
    return torch::flatten(F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1)), 1);
  }
  std::int64_t feature_dim() const override { return 2048; }
  Normalization normalization() const override { return kInception; }
  int block_of(std::string_view name) const override {
    if (starts_with(name, "Mixed_5")) return 1;
    if (starts_with(name, "Mixed_6")) return 2;
    if (starts_with(name, "Mixed_7")) return 3;
    return 0;
  }
  int last_conv_block() const override { return 3; }

 private:
  std::vector<ConvBn> stem_;
  std::vector<ConvBn> stem2_;
  nn::Sequential mixed_;
};

// ------------------------------------------------ Inception-ResNet-v2

nn::Sequential chain(std::initializer_list<ConvBn> modules) {
  nn::Sequential seq;
  for (const auto& m : modules) seq->push_back(m);
  return seq;
}

class Mixed5bImpl : public nn::Module {
 public:
  Mixed5bImpl() {
    register_module("branch0", b0);
    register_module("branch1", b1);
    register_module("branch2", b2);
    b3->push_back(nn::AvgPool2d(nn::AvgPool2dOptions(3).stride(1).padding(1).count_include_pad(false)));
    b3->push_back(ConvBn(192, 64, 1));
    register_module("branch3", b3);
  }
  torch::Tensor forward(torch::Tensor x) {
    return torch::cat({b0(x), b1->forward(x), b2->forward(x), b3->forward(x)}, 1);
  }
  ConvBn b0{192, 96, 1};
  nn::Sequential b1 = chain({ConvBn(192, 48, 1), ConvBn(48, 64, 5, 1, 2)});
  nn::Sequential b2 = chain({ConvBn(192, 64, 1), ConvBn(64, 96, 3, 1, 1), ConvBn(96, 96, 3, 1, 1)});
  nn::Sequential b3;
};
TORCH_MODULE(Mixed5b);

class Block35Impl : public nn::Module {
 public:
  explicit Block35Impl(double scale) : scale_(scale) {
    register_module("branch0", b0);
    register_module("branch1", b1);
    register_module("branch2", b2);
    register_module("conv2d", conv2d);
  }
  torch::Tensor forward(torch::Tensor x) {
    auto out = conv2d(torch::cat({b0(x), b1->forward(x), b2->forward(x)}, 1));
    return torch::relu(out * scale_ + x);
  }
  double scale_;
  ConvBn b0{320, 32, 1};
  nn::Sequential b1 = chain({ConvBn(320, 32, 1), ConvBn(32, 32, 3, 1, 1)});
  nn::Sequential b2 = chain({ConvBn(320, 32, 1), ConvBn(32, 48, 3, 1, 1), ConvBn(48, 64, 3, 1, 1)});
  nn::Conv2d conv2d = conv(128, 320, 1, 1, 0, true);
};
TORCH_MODULE(Block35);

class Mixed6aImpl : public nn::Module {
 public:
  Mixed6aImpl() {
    register_module("branch0", b0);
    register_module("branch1", b1);
  }
  torch::Tensor forward(torch::Tensor x) {
    return torch::cat({b0(x), b1->forward(x), max3s2(x)}, 1);
  }
  ConvBn b0{320, 384, 3, 2};
  nn::Sequential b1 = chain({ConvBn(320, 256, 1), ConvBn(256, 256, 3, 1, 1), ConvBn(256, 384, 3, 2)});
};
TORCH_MODULE(Mixed6a);

class Block17Impl : public nn::Module {
 public:
  explicit Block17Impl(double scale) : scale_(scale) {
    register_module("branch0", b0);
    register_module("branch1", b1);
    register_module("conv2d", conv2d);
  }
  torch::Tensor forward(torch::Tensor x) {
    auto out = conv2d(torch::cat({b0(x), b1->forward(x)}, 1));
    return torch::relu(out * scale_ + x);
  }
  double scale_;
  ConvBn b0{1088, 192, 1};
  nn::Sequential b1 = chain({ConvBn(1088, 128, 1), conv_bn(128, 160, {1, 7}, {0, 3}),
                             conv_bn(160, 192, {7, 1}, {3, 0})});
  nn::Conv2d conv2d = conv(384, 1088, 1, 1, 0, true);
};
TORCH_MODULE(Block17);

class Mixed7aImpl : public nn::Module {
 public:
  Mixed7aImpl() {
    register_module("branch0", b0);
    register_module("branch1", b1);
    register_module("branch2", b2);
  }
  torch::Tensor forward(torch::Tensor x) {
    return torch::cat({b0->forward(x), b1->forward(x), b2->forward(x), max3s2(x)}, 1);
  }
  nn::Sequential b0 = chain({ConvBn(1088, 256, 1), ConvBn(256, 384, 3, 2)});
  nn::Sequential b1 = chain({ConvBn(1088, 256, 1), ConvBn(256, 288, 3, 2)});
  nn::Sequential b2 = chain({ConvBn(1088, 256, 1), ConvBn(256, 288, 3, 1, 1), ConvBn(288, 320, 3, 2)});
};
TORCH_MODULE(Mixed7a);

class Block8Impl : public nn::Module {
 public:
  Block8Impl(double scale, bool relu) : scale_(scale), relu_(relu) {
    register_module("branch0", b0);
    register_module("branch1", b1);
    register_module("conv2d", conv2d);
  }
  torch::Tensor forward(torch::Tensor x) {
    auto out = conv2d(torch::cat({b0(x), b1->forward(x)}, 1)) * scale_ + x;
    return relu_ ? torch::relu(out) : out;
  }
  double scale_;
  bool relu_;
  ConvBn b0{2080, 192, 1};
  nn::Sequential b1 = chain({ConvBn(2080, 192, 1), conv_bn(192, 224, {1, 3}, {0, 1}),
                             conv_bn(224, 256, {3, 1}, {1, 0})});
  nn::Conv2d conv2d = conv(448, 2080, 1, 1, 0, true);
};
TORCH_MODULE(Block8);

class InceptionResNetV2Impl final : public BackboneImpl {
 public:
  InceptionResNetV2Impl() {
    register_module("conv2d_1a", conv2d_1a_);
    register_module("conv2d_2a", conv2d_2a_);
    register_module("conv2d_2b", conv2d_2b_);
    register_module("conv2d_3b", conv2d_3b_);
    register_module("conv2d_4a", conv2d_4a_);
    register_module("mixed_5b", mixed_5b_);
    for (int i = 0; i < 10; ++i) repeat_->push_back(Block35(0.17));
    register_module("repeat", repeat_);
    register_module("mixed_6a", mixed_6a_);
    for (int i = 0; i < 20; ++i) repeat_1_->push_back(Block17(0.10));
    register_module("repeat_1", repeat_1_);
    register_module("mixed_7a", mixed_7a_);
    for (int i = 0; i < 9; ++i) repeat_2_->push_back(Block8(0.20, true));
    register_module("repeat_2", repeat_2_);
    register_module("block8", block8_);
    register_module("conv2d_7b", conv2d_7b_);
  }

  torch::Tensor forward(torch::Tensor x) override {
    x = conv2d_2b_(conv2d_2a_(conv2d_1a_(x)));
    x = max3s2(x);
    x = conv2d_4a_(conv2d_3b_(x));
    x = max3s2(x);
    x = repeat_->forward(mixed_5b_(x));
    x = repeat_1_->forward(mixed_6a_(x));
    x = repeat_2_->forward(mixed_7a_(x));
    x = conv2d_7b_(block8_(x));
    return torch::flatten(F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1)), 1);
  }
  std::int64_t feature_dim() const override { return 1536; }
  Normalization normalization() const override { return kInception; }
  int block_of(std::string_view name) const override {
    if (starts_with(name, "mixed_5b") || starts_with(name, "repeat.")) return 1;
    if (starts_with(name, "mixed_6a") || starts_with(name, "repeat_1.")) return 2;
    if (starts_with(name, "mixed_7a") || starts_with(name, "repeat_2.") ||
        starts_with(name, "block8") || starts_with(name, "conv2d_7b")) {
      return 3;
    }
    return 0;
  }
  int last_conv_block() const override { return 3; }

 private:
  ConvBn conv2d_1a_{3, 32, 3, 2};
  ConvBn conv2d_2a_{32, 32, 3};
  ConvBn conv2d_2b_{32, 64, 3, 1, 1};
  ConvBn conv2d_3b_{64, 80, 1};
  ConvBn conv2d_4a_{80, 192, 3};
  Mixed5b mixed_5b_;
  nn::Sequential repeat_;
  Mixed6a mixed_6a_;
  nn::Sequential repeat_1_;
  Mixed7a mixed_7a_;
  nn::Sequential repeat_2_;
  Block8 block8_{1.0, false};
  ConvBn conv2d_7b_{2080, 1536, 1};
};

std::string normalized_name(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '-' || c == '_') continue;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace

std::string_view to_string(BackboneName name) {
  switch (name) {
    case BackboneName::Vgg16: return "vgg16";
    case BackboneName::Vgg19: return "vgg19";
    case BackboneName::ResNet50: return "resnet50";
    case BackboneName::DenseNet201: return "densenet201";
    case BackboneName::InceptionV3: return "inception_v3";
    case BackboneName::InceptionResNetV2: return "inception_resnet_v2";
  }
  return "?";
}

BackboneName parse_backbone(std::string_view text) {
  const std::string n = normalized_name(text);
  for (BackboneName b : kAllBackbones) {
    if (normalized_name(to_string(b)) == n) return b;
  }
  throw Error(Errc::UnknownBackbone, "unknown backbone '" + std::string(text) + "'");
}

std::span<const BackboneName> all_backbones() { return kAllBackbones; }

BackboneSpec BackboneSpec::of(BackboneName name, bool pretrained) {
  BackboneSpec spec;
  spec.name = name;
  spec.pretrained = pretrained;
  const bool inception =
      name == BackboneName::InceptionV3 || name == BackboneName::InceptionResNetV2;
  spec.native_input = inception ? InputShape{299, 299, 3} : InputShape{224, 224, 3};
  return spec;
}

std::vector<BackboneLayer> BackboneImpl::layers() {
  std::vector<BackboneLayer> out;
  for (const auto& item : named_modules("", /*include_self=*/false)) {
    const auto& module = item.value();
    if (!module->children().empty()) continue;
    auto params = module->parameters(/*recurse=*/false);
    if (params.empty()) continue;
    out.push_back({item.key(), std::move(params), block_of(item.key())});
  }
  return out;
}

std::shared_ptr<BackboneImpl> make_backbone(BackboneName name) {
  switch (name) {
    case BackboneName::Vgg16:
      return std::make_shared<VggImpl>(
          std::vector<int>{64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0});
    case BackboneName::Vgg19:
      return std::make_shared<VggImpl>(std::vector<int>{64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0,
                                                        512, 512, 512, 512, 0, 512, 512, 512, 512, 0});
    case BackboneName::ResNet50: return std::make_shared<ResNet50Impl>();
    case BackboneName::DenseNet201: return std::make_shared<DenseNet201Impl>();
    case BackboneName::InceptionV3: return std::make_shared<InceptionV3Impl>();
    case BackboneName::InceptionResNetV2: return std::make_shared<InceptionResNetV2Impl>();
  }
  throw Error(Errc::UnknownBackbone, "unknown backbone");
}

namespace {

constexpr int kCalibrationBatch = 8;

// Sum of Gaussian noise fields at several spatial scales with a random
// per-image contrast and brightness offset: a crude stand-in for
// natural-image statistics after input standardization. The offsets matter:
// without them, nearly uniform pages (large DC component) land far outside
// the calibrated range and produce oversized features.
torch::Tensor smooth_noise(InputShape input, torch::Generator& generator) {
  const std::array<std::int64_t, 4> scales = {4, 16, 64, 0};
  auto x = torch::zeros({kCalibrationBatch, 3, input.height, input.width});
  for (auto s : scales) {
    if (s == 0) {
      x += 0.25 * torch::randn(x.sizes(), generator);
      continue;
    }
    auto coarse = torch::randn({kCalibrationBatch, 3, s, s}, generator);
    x += F::interpolate(coarse, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>{input.height, input.width})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
  }
  const auto mean = x.mean({1, 2, 3}, true);
  const auto std = x.std({1, 2, 3}, true, true);
  const auto contrast = torch::empty({kCalibrationBatch, 1, 1, 1}).uniform_(0.2, 1.2, generator);
  const auto offset = torch::empty({kCalibrationBatch, 1, 1, 1}).uniform_(-2.0, 2.0, generator);
  return (x - mean) / std * contrast + offset;
}

}  // namespace

void init_backbone(BackboneImpl& backbone, torch::Generator& generator, InputShape input) {
  torch::NoGradGuard no_grad;
  std::vector<nn::BatchNorm2dImpl*> norms;
  for (const auto& module : backbone.modules(/*include_self=*/false)) {
    if (auto* c = module->as<nn::Conv2d>()) {
      const auto& w = c->weight;
      const double fan_out = static_cast<double>(w.size(0) * w.size(2) * w.size(3));
      w.normal_(0.0, std::sqrt(2.0 / fan_out), generator);
      if (c->bias.defined()) c->bias.zero_();
    } else if (auto* l = module->as<nn::Linear>()) {
      l->weight.normal_(0.0, 0.01, generator);
      if (l->bias.defined()) l->bias.zero_();
    } else if (auto* bn = module->as<nn::BatchNorm2d>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
      norms.push_back(bn);
    }
  }
  if (norms.empty()) return;
  // Cumulative averaging over one calibration batch, then back to the
  // default momentum.
  for (auto* bn : norms) {
    bn->reset_running_stats();
    bn->options.momentum(std::nullopt);
  }
  backbone.train();
  backbone.forward(smooth_noise(input, generator));
  backbone.eval();
  for (auto* bn : norms) bn->options.momentum(0.1);
}

namespace {

torch::Dtype torch_dtype(DType d) {
  switch (d) {
    case DType::F32: return torch::kFloat32;
    case DType::F64: return torch::kFloat64;
    case DType::I32: return torch::kInt32;
    case DType::I64: return torch::kInt64;
  }
  return torch::kFloat32;
}

}  // namespace

void load_named_tensors(torch::nn::Module& module, std::span<const TensorBlob> tensors,
                        std::string_view prefix) {
  std::map<std::string, const TensorBlob*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  torch::NoGradGuard no_grad;
  std::vector<std::string> missing;
  auto copy_into = [&](const std::string& name, torch::Tensor& target) {
    auto it = by_name.find(std::string(prefix) + name);
    if (it == by_name.end()) {
      missing.push_back(name);
      return;
    }
    const TensorBlob& blob = *it->second;
    if (std::vector<std::int64_t>(target.sizes().begin(), target.sizes().end()) != blob.shape) {
      throw Error(Errc::WeightsUnavailable, "shape mismatch for " + name);
    }
    auto src = torch::from_blob(const_cast<std::byte*>(blob.data.data()), blob.shape,
                                torch::TensorOptions().dtype(torch_dtype(blob.dtype)));
    target.copy_(src.to(target.dtype()));
  };
  for (auto& item : module.named_parameters(true)) copy_into(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) copy_into(item.key(), item.value());
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 5); ++i) {
      list += (i ? ", " : "") + missing[i];
    }
    throw Error(Errc::WeightsUnavailable, std::to_string(missing.size()) +
                                              " tensors missing from weights (" + list + ")");
  }
}

fs::path resolve_weights_path(const BackboneSpec& spec) {
  fs::path path;
  if (spec.weights) {
    path = *spec.weights;
  } else if (const char* dir = std::getenv("ECGCLS_WEIGHTS_DIR"); dir && *dir) {
    path = fs::path(dir) / (std::string(to_string(spec.name)) + ".safetensors");
  } else {
    throw Error(Errc::WeightsUnavailable,
                std::string("no pretrained weights for ") + std::string(to_string(spec.name)) +
                    " (pass --weights or set ECGCLS_WEIGHTS_DIR)");
  }
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(Errc::WeightsUnavailable, "weights file " + path.string() + " not found");
  }
  return path;
}

}  // namespace ecgcls
