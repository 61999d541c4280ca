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

#include <fstream>

#include "ecgcls/config.hpp"
#include "ecgcls/error.hpp"
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

TEST(Config, EmptyDocumentKeepsDefaults) {
  const auto cfg = parse_config("");
  EXPECT_EQ(config_to_yaml(cfg), config_to_yaml(RunConfig{}));
  EXPECT_EQ(cfg.train, (HyperParams{25, 32, 0.1, 32, 0.001}));
  EXPECT_EQ(cfg.search.grid.size(), 54u);
  EXPECT_EQ(cfg.threshold, 0.5);
}

TEST(Config, ReadsEverySection) {
  const auto cfg = parse_config(R"(
seed: 7
log_level: debug
data_root: /data/ecg
ingest:
  labels: covid=COVID,normal=NON_COVID,other=SKIP
  ratios: [0.6, 0.2, 0.2]
  k: 3
preprocess:
  crop: [10, 20, 300, 200]
  threshold: 0.4
  target: [224, 224]
  interpolation: nearest
  normalize: unit_range
  density: red_channel
augment:
  brightness: "-0.1:0.1"
  zoom: [0.9, 1.1]
  mirror_horizontal: true
  copies: 2
  seed: 5
model:
  backbone: densenet201
  init: random
  init_seed: 3
  mode: fine_tune
  policy: last_n_layers:4
train:
  epochs: 3
  batch_size: 8
gridsearch:
  epochs: 25
  batch_size: [16, 32]
  k: 4
  workers: 2
evaluate:
  threshold: 0.6
)");
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.log_level, "debug");
  EXPECT_EQ(cfg.data_root, std::filesystem::path("/data/ecg"));
  EXPECT_EQ(cfg.ingest.k, 3);
  EXPECT_EQ(cfg.ingest.ratios, (SplitRatios{0.6, 0.2, 0.2}));
  ASSERT_TRUE(cfg.preprocess.crop_rect);
  EXPECT_EQ(*cfg.preprocess.crop_rect, (Rect{10, 20, 300, 200}));
  EXPECT_EQ(cfg.preprocess.target.width, 224);
  EXPECT_EQ(cfg.preprocess.interpolation, Interpolation::Nearest);
  EXPECT_EQ(cfg.preprocess.normalize, Normalize::UnitRange);
  EXPECT_EQ(cfg.preprocess.density_mode, DensityMode::RedChannel);
  EXPECT_EQ(cfg.augment.brightness, (Range{-0.1, 0.1}));
  EXPECT_EQ(cfg.augment.zoom, (Range{0.9, 1.1}));
  EXPECT_TRUE(cfg.augment.mirror_horizontal);
  EXPECT_FALSE(cfg.augment.mirror_vertical);
  EXPECT_EQ(cfg.augment.copies_per_image, 2);
  EXPECT_EQ(cfg.model.backbone, "densenet201");
  EXPECT_FALSE(cfg.model.pretrained);
  EXPECT_EQ(cfg.model.init_seed, 3u);
  EXPECT_EQ(cfg.model.policy, "last_n_layers:4");
  EXPECT_EQ(cfg.train.epochs, 3);
  EXPECT_EQ(cfg.train.batch_size, 8);
  EXPECT_EQ(cfg.train.dropout, 0.1);
  EXPECT_EQ(cfg.search.grid.epochs_set, std::vector<int>{25});
  EXPECT_EQ(cfg.search.grid.batch_set, (std::vector<int>{16, 32}));
  EXPECT_EQ(cfg.search.grid.neurons_set, (std::vector<int>{16, 32, 64}));
  EXPECT_EQ(cfg.search.k, 4);
  EXPECT_EQ(cfg.search.workers, 2);
  EXPECT_EQ(cfg.threshold, 0.6);

  // The emitted YAML reads back to the same configuration.
  EXPECT_EQ(config_to_yaml(parse_config(config_to_yaml(cfg))), config_to_yaml(cfg));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  for (const char* doc : {"sede: 1", "train:\n  epoch: 3", "model:\n  init: imagenet",
                          "ingest:\n  ratios: [0.5, 0.5]", "preprocess:\n  target: 224",
                          "augment:\n  zoom: {a: 1}", "seed: [1, 2", "- 1\n- 2",
                          "preprocess:\n  interpolation: cubic"}) {
    EXPECT_EQ(code_of([&] { parse_config(doc); }), Errc::ConfigInvalid) << doc;
  }
}

TEST(Config, HashTracksContent) {
  RunConfig a;
  RunConfig b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.train.dropout = 0.2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, LoadFromFile) {
  testing::TempDir dir;
  { std::ofstream(dir / "c.yaml") << "seed: 11\n"; }
  EXPECT_EQ(load_config(dir / "c.yaml").seed, 11u);
  EXPECT_EQ(code_of([&] { load_config(dir / "none.yaml"); }), Errc::IoError);
}

}  // namespace
}  // namespace ecgcls
