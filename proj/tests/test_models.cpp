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

#include <gtest/gtest.h>

#include <cstring>

#include "ecgcls/error.hpp"
#include "ecgcls/models.hpp"
#include "ecgcls/random.hpp"
#include "test_support.hpp"

namespace ecgcls {
namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an ecgcls::Error";
  return Errc::IoError;
}

std::int64_t conv(std::int64_t k, std::int64_t in, std::int64_t out) { return (k * k * in + 1) * out; }
std::int64_t dense(std::int64_t in, std::int64_t out) { return (in + 1) * out; }

// VGG convolutional stacks counted from the published layer configuration.
std::int64_t vgg_conv_params(std::initializer_list<std::pair<int, int>> stages) {
  std::int64_t total = 0;
  std::int64_t in = 3;
  for (auto [convs, width] : stages) {
    for (int i = 0; i < convs; ++i) {
      total += conv(3, in, width);
      in = width;
    }
  }
  return total;
}
constexpr std::int64_t kVggFc = (7 * 7 * 512 + 1) * 4096 + (4096 + 1) * 4096;

struct CountCase {
  BackboneName name;
  std::int64_t backbone_params;  // published totals without the 1000-way classifier
  std::int64_t feature_dim;
};

const CountCase kCounts[] = {
    {BackboneName::Vgg16,
     vgg_conv_params({{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}}) + kVggFc, 4096},
    {BackboneName::Vgg19,
     vgg_conv_params({{2, 64}, {2, 128}, {4, 256}, {4, 512}, {4, 512}}) + kVggFc, 4096},
    {BackboneName::ResNet50, 25'557'032 - dense(2048, 1000), 2048},
    {BackboneName::DenseNet201, 20'013'928 - dense(1920, 1000), 1920},
    {BackboneName::InceptionV3, 23'834'568 - dense(2048, 1000), 2048},
    {BackboneName::InceptionResNetV2, 55'843'464 - dense(1536, 1000), 1536},
};

PixelImage random_image(Rng& rng, int w, int h, int c) {
  PixelImage img(w, h, c);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

BackboneSpec random_spec(BackboneName name, std::uint64_t init_seed = 1) {
  auto spec = BackboneSpec::of(name, false);
  spec.init_seed = init_seed;
  return spec;
}

// -------------------------------------------------------------- registry

TEST(Registry, ExactlySixBackbones) {
  ASSERT_EQ(all_backbones().size(), 6u);
  for (auto name : all_backbones()) EXPECT_EQ(parse_backbone(to_string(name)), name);
  EXPECT_EQ(parse_backbone("DenseNet-201"), BackboneName::DenseNet201);
  EXPECT_EQ(parse_backbone("InceptionResNetV2"), BackboneName::InceptionResNetV2);
  for (const char* bad : {"vgg11", "resnet101", "", "efficientnet_b0"}) {
    EXPECT_EQ(code_of([&] { parse_backbone(bad); }), Errc::UnknownBackbone) << bad;
  }
}

TEST(Registry, NativeInputs) {
  EXPECT_EQ(BackboneSpec::of(BackboneName::Vgg16).native_input, (InputShape{224, 224, 3}));
  EXPECT_EQ(BackboneSpec::of(BackboneName::DenseNet201).native_input, (InputShape{224, 224, 3}));
  EXPECT_EQ(BackboneSpec::of(BackboneName::InceptionV3).native_input, (InputShape{299, 299, 3}));
  EXPECT_EQ(BackboneSpec::of(BackboneName::InceptionResNetV2).native_input,
            (InputShape{299, 299, 3}));
}

// -------------------------------------------------------------- counts

class Counts : public ::testing::TestWithParam<CountCase> {};

TEST_P(Counts, MatchPublishedArchitecture) {
  const auto c = GetParam();
  const HeadConfig head{32, 0.1};
  auto model = build_model(random_spec(c.name), head, TrainMode::FeatureExtract);
  const std::int64_t head_params = (c.feature_dim + 1) * 32 + (32 + 1) * 1;
  EXPECT_EQ(model.feature_dim(), c.feature_dim);
  EXPECT_EQ(HeadConfig::parameter_count(c.feature_dim, 32), head_params);
  EXPECT_EQ(model.head_param_count(), head_params);
  EXPECT_EQ(model.total_param_count(), c.backbone_params + head_params);
  EXPECT_EQ(model.trainable_param_count(), head_params);
  EXPECT_TRUE(model.backbone_frozen());
  EXPECT_EQ(model.mode(), TrainMode::FeatureExtract);

  set_fine_tune_policy(model, {FineTunePolicy::Kind::All});
  EXPECT_EQ(model.trainable_param_count(), model.total_param_count());
  EXPECT_EQ(model.mode(), TrainMode::FineTune);

  // Default fine-tuning unfreezes a strict, non-empty part of the backbone.
  auto tuned = build_model(random_spec(c.name), head, TrainMode::FineTune);
  EXPECT_EQ(tuned.policy(), (FineTunePolicy{FineTunePolicy::Kind::LastBlock}));
  EXPECT_GT(tuned.trainable_param_count(), head_params);
  EXPECT_LT(tuned.trainable_param_count(), tuned.total_param_count());
}

INSTANTIATE_TEST_SUITE_P(AllBackbones, Counts, ::testing::ValuesIn(kCounts),
                         [](const auto& info) { return std::string(to_string(info.param.name)); });

TEST(Counts, VggFamilyMagnitude) {
  const HeadConfig head{32, 0.1};
  // Roughly 138 and 144 million parameters with the ImageNet classifier.
  for (auto [name, millions] : {std::pair{BackboneName::Vgg16, 138.0}, {BackboneName::Vgg19, 144.0}}) {
    auto model = build_model(random_spec(name), head, TrainMode::FeatureExtract);
    const double total = static_cast<double>(model.total_param_count()) / 1e6;
    EXPECT_NEAR(total, millions, millions * 0.05) << to_string(name);
  }
}

// -------------------------------------------------------------- policies

TEST(Policy, Parse) {
  EXPECT_EQ(FineTunePolicy::parse("none"), FineTunePolicy{});
  EXPECT_EQ(FineTunePolicy::parse("last_n_layers:3"),
            (FineTunePolicy{FineTunePolicy::Kind::LastNLayers, 3}));
  EXPECT_EQ(FineTunePolicy::parse("all").str(), "all");
  EXPECT_EQ(FineTunePolicy::parse("last_n_layers:12").str(), "last_n_layers:12");
  for (const char* bad : {"", "last", "last_n_layers:", "last_n_layers:-1", "last_n_layers:2x"}) {
    EXPECT_EQ(code_of([&] { FineTunePolicy::parse(bad); }), Errc::PolicyInvalid) << bad;
  }
}

TEST(Policy, Vgg16LastBlockCount) {
  auto model = build_model(random_spec(BackboneName::Vgg16), {32, 0.1}, TrainMode::FeatureExtract);
  const auto before = model.trainable_param_count();
  set_fine_tune_policy(model, {});
  EXPECT_EQ(model.trainable_param_count(), before);
  EXPECT_EQ(model.mode(), TrainMode::FeatureExtract);

  set_fine_tune_policy(model, {FineTunePolicy::Kind::LastBlock});
  const std::int64_t conv5 = 3 * conv(3, 512, 512);
  EXPECT_EQ(model.trainable_param_count(), conv5 + kVggFc + model.head_param_count());
  EXPECT_GT(model.trainable_param_count(), model.head_param_count());
  EXPECT_LT(model.trainable_param_count(), model.total_param_count());
  EXPECT_EQ(model.mode(), TrainMode::FineTune);

  // Policies are absolute, not cumulative.
  set_fine_tune_policy(model, {FineTunePolicy::Kind::LastNLayers, 1});
  EXPECT_EQ(model.trainable_param_count(), dense(4096, 4096) + model.head_param_count());
}

TEST(Policy, MonotoneUnfreezing) {
  auto model =
      build_model(random_spec(BackboneName::DenseNet201), {16, 0.1}, TrainMode::FeatureExtract);
  const auto n_layers = static_cast<int>(model.backbone().layers().size());
  std::int64_t previous = model.head_param_count();
  for (int n = 0; n <= n_layers; n += std::max(1, n_layers / 40)) {
    set_fine_tune_policy(model, {FineTunePolicy::Kind::LastNLayers, n});
    EXPECT_GE(model.trainable_param_count(), previous) << n;
    EXPECT_EQ(model.mode(), n == 0 ? TrainMode::FeatureExtract : TrainMode::FineTune);
    previous = model.trainable_param_count();
  }
  set_fine_tune_policy(model, {FineTunePolicy::Kind::LastNLayers, n_layers});
  EXPECT_EQ(model.trainable_param_count(), model.total_param_count());
  EXPECT_EQ(code_of([&] {
              set_fine_tune_policy(model, {FineTunePolicy::Kind::LastNLayers, n_layers + 1});
            }),
            Errc::PolicyInvalid);
}

// One optimizer step in feature-extraction mode moves only the head.
TEST(Policy, FrozenBackboneSurvivesAStep) {
  auto model =
      build_model(random_spec(BackboneName::DenseNet201), {16, 0.1}, TrainMode::FeatureExtract);
  const auto backbone_before = model.backbone_checksum();
  const auto head_before = model.head_checksum();
  Rng rng(3);
  std::vector<PixelImage> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_image(rng, 64, 48, 3));
  torch::optim::Adam opt(model.trainable_parameters(), torch::optim::AdamOptions(1e-2));
  auto logits = model.head().forward(model.features(model.to_input(batch)));
  auto loss = torch::binary_cross_entropy_with_logits(logits, torch::tensor({1.f, 0.f, 1.f, 0.f}));
  opt.zero_grad();
  loss.backward();
  opt.step();
  EXPECT_EQ(model.backbone_checksum(), backbone_before);
  EXPECT_NE(model.head_checksum(), head_before);
}

// -------------------------------------------------------------- predict

TEST(Predict, RangeDuplicatesAndEmpty) {
  auto model =
      build_model(random_spec(BackboneName::DenseNet201), {32, 0.1}, TrainMode::FeatureExtract, 5);
  EXPECT_TRUE(model.predict({}).empty());
  Rng rng(8);
  std::vector<PixelImage> batch = {random_image(rng, 300, 200, 3), random_image(rng, 100, 90, 1),
                                   PixelImage(50, 50, 3, 0.0f), PixelImage(50, 50, 3, 1.0f)};
  batch.push_back(batch[0]);
  const auto p = model.predict(batch);
  ASSERT_EQ(p.size(), batch.size());
  for (double v : p) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(p[0], p[4]);
  EXPECT_EQ(model.predict(batch), p);

  // Same build inputs give the same model.
  auto twin =
      build_model(random_spec(BackboneName::DenseNet201), {32, 0.1}, TrainMode::FeatureExtract, 5);
  EXPECT_EQ(twin.predict(batch), p);
  EXPECT_EQ(twin.backbone_checksum(), model.backbone_checksum());

  std::vector<PixelImage> bad = {PixelImage()};
  EXPECT_EQ(code_of([&] { model.predict(bad); }), Errc::ShapeMismatch);
  bad = {PixelImage(10, 10, 2, 0.5f)};
  EXPECT_EQ(code_of([&] { model.predict(bad); }), Errc::ShapeMismatch);
}

TEST(Predict, HeadSeedChangesOnlyTheHead) {
  auto a = build_model(random_spec(BackboneName::DenseNet201), {32, 0.1}, TrainMode::FeatureExtract, 1);
  auto b = build_model(random_spec(BackboneName::DenseNet201), {32, 0.1}, TrainMode::FeatureExtract, 2);
  EXPECT_EQ(a.backbone_checksum(), b.backbone_checksum());
  EXPECT_NE(a.head_checksum(), b.head_checksum());
  auto c = build_model(random_spec(BackboneName::DenseNet201, 9), {32, 0.1},
                       TrainMode::FeatureExtract, 1);
  EXPECT_NE(a.backbone_checksum(), c.backbone_checksum());
}

// -------------------------------------------------------------- weights

void export_backbone(BackboneImpl& backbone, const std::filesystem::path& path) {
  std::vector<TensorBlob> blobs;
  auto add = [&](const std::string& name, const torch::Tensor& t) {
    const bool integral = t.scalar_type() == torch::kInt64;
    auto c = t.detach().contiguous();
    TensorBlob b{name, integral ? DType::I64 : DType::F32,
                 std::vector<std::int64_t>(c.sizes().begin(), c.sizes().end()), {}};
    b.data.resize(static_cast<std::size_t>(c.numel()) * dtype_size(b.dtype));
    std::memcpy(b.data.data(), c.data_ptr(), b.data.size());
    blobs.push_back(std::move(b));
  };
  for (const auto& p : backbone.named_parameters()) add(p.key(), p.value());
  for (const auto& p : backbone.named_buffers()) add(p.key(), p.value());
  write_safetensors(path, blobs);
}

TEST(Weights, PretrainedFileIsLoadedDeterministically) {
  testing::TempDir dir;
  auto source = build_model(random_spec(BackboneName::DenseNet201, 77), {32, 0.1},
                            TrainMode::FeatureExtract, 3);
  export_backbone(source.backbone(), dir / "densenet201.safetensors");

  auto spec = BackboneSpec::of(BackboneName::DenseNet201, true);
  spec.weights = dir / "densenet201.safetensors";
  auto a = build_model(spec, {32, 0.1}, TrainMode::FeatureExtract, 3);
  auto b = build_model(spec, {32, 0.1}, TrainMode::FeatureExtract, 3);
  EXPECT_EQ(a.backbone_checksum(), source.backbone_checksum());
  Rng rng(2);
  std::vector<PixelImage> batch = {random_image(rng, 120, 80, 3), random_image(rng, 64, 64, 3)};
  EXPECT_EQ(a.predict(batch), b.predict(batch));
  EXPECT_EQ(a.predict(batch), source.predict(batch));

  // Weights directory fallback.
  auto by_dir = BackboneSpec::of(BackboneName::DenseNet201, true);
  ::setenv("ECGCLS_WEIGHTS_DIR", dir.path().c_str(), 1);
  EXPECT_EQ(resolve_weights_path(by_dir), dir / "densenet201.safetensors");
  ::setenv("ECGCLS_WEIGHTS_DIR", (dir / "nowhere").c_str(), 1);
  EXPECT_EQ(code_of([&] { build_model(by_dir, {32, 0.1}, TrainMode::FeatureExtract); }),
            Errc::WeightsUnavailable);
  ::unsetenv("ECGCLS_WEIGHTS_DIR");
}

TEST(Weights, WrongArchitectureIsRejected) {
  testing::TempDir dir;
  auto source = build_model(random_spec(BackboneName::DenseNet201), {16, 0.1},
                            TrainMode::FeatureExtract);
  export_backbone(source.backbone(), dir / "w.safetensors");
  auto spec = BackboneSpec::of(BackboneName::ResNet50, true);
  spec.weights = dir / "w.safetensors";
  EXPECT_EQ(code_of([&] { build_model(spec, {16, 0.1}, TrainMode::FeatureExtract); }),
            Errc::WeightsUnavailable);
}

TEST(Head, Validation) {
  EXPECT_EQ(code_of([] { HeadConfig{0, 0.1}.validate(); }), Errc::ConfigInvalid);
  EXPECT_EQ(code_of([] { HeadConfig{16, 1.0}.validate(); }), Errc::ConfigInvalid);
  EXPECT_EQ(code_of([] {
              build_model(random_spec(BackboneName::DenseNet201), {16, -0.1},
                          TrainMode::FeatureExtract);
            }),
            Errc::ConfigInvalid);
}

// -------------------------------------------------------------- checkpoints

TEST(Checkpoint, RoundTrip) {
  testing::TempDir dir;
  auto model = build_model(random_spec(BackboneName::DenseNet201, 4), {16, 0.2},
                           TrainMode::FineTune, 6);
  model.provenance.manifest_hash = "00ff00ff00ff00ff";
  model.provenance.params = HyperParams{3, 8, 0.2, 16, 0.001};
  model.provenance.seed = 6;
  model.provenance.trained_on = {"a.png", "b.png"};
  // Perturb the head so the checkpoint is not just a re-initialization.
  {
    torch::NoGradGuard guard;
    model.head().fc2->bias.add_(0.25);
  }
  save_checkpoint(dir / "ckpt", model);
  EXPECT_TRUE(std::filesystem::exists(dir / "ckpt" / "metadata.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "ckpt" / "weights.safetensors"));

  auto loaded = load_checkpoint(dir / "ckpt");
  EXPECT_EQ(loaded.backbone_spec().name, BackboneName::DenseNet201);
  EXPECT_EQ(loaded.head_config().neurons, 16);
  EXPECT_EQ(loaded.head_config().dropout, 0.2);
  EXPECT_EQ(loaded.mode(), TrainMode::FineTune);
  EXPECT_EQ(loaded.policy(), model.policy());
  EXPECT_EQ(loaded.trainable_param_count(), model.trainable_param_count());
  EXPECT_EQ(loaded.backbone_checksum(), model.backbone_checksum());
  EXPECT_EQ(loaded.head_checksum(), model.head_checksum());
  EXPECT_EQ(loaded.provenance.manifest_hash, "00ff00ff00ff00ff");
  EXPECT_EQ(loaded.provenance.params, model.provenance.params);
  EXPECT_EQ(loaded.provenance.trained_on, model.provenance.trained_on);
  Rng rng(1);
  std::vector<PixelImage> batch = {random_image(rng, 90, 70, 3)};
  EXPECT_EQ(loaded.predict(batch), model.predict(batch));

  EXPECT_THROW(load_checkpoint(dir / "missing"), Error);
}

}  // namespace
}  // namespace ecgcls
