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

// Cross-checks the C++ backbones against the reference Python
// implementations (torchvision / timm): identical parameter names and
// shapes, and matching features for a seeded random network and input.
// Skipped when python3 with torch/torchvision/timm/safetensors is absent.

#include <gtest/gtest.h>

#include <cstdlib>

#include "ecgcls/backbones.hpp"
#include "test_support.hpp"

namespace ecgcls {
namespace {

torch::Tensor to_tensor(const TensorBlob& blob) {
  return torch::from_blob(const_cast<std::byte*>(blob.data.data()), blob.shape, torch::kFloat32)
      .clone();
}

const TensorBlob& find(const SafetensorsFile& file, const std::string& name) {
  for (const auto& t : file.tensors) {
    if (t.name == name) return t;
  }
  throw std::runtime_error("missing " + name);
}

bool python_available() {
  return std::system("python3 -c 'import torch, torchvision, timm, safetensors' >/dev/null 2>&1") == 0;
}

class BackboneOracle : public ::testing::TestWithParam<BackboneName> {};

TEST_P(BackboneOracle, MatchesReferenceImplementation) {
  if (!python_available()) GTEST_SKIP() << "python reference stack not installed";
  const std::string name(to_string(GetParam()));
  testing::TempDir dir;
  const auto weights = dir / "w.safetensors";
  const auto reference = dir / "ref.safetensors";
  const std::string cmd = std::string("python3 ") + ECGCLS_EXPORT_SCRIPT + " --backbone " + name +
                          " --random 11 --out " + weights.string() + " --reference " +
                          reference.string();
  ASSERT_EQ(std::system(cmd.c_str()), 0) << cmd;

  auto backbone = make_backbone(GetParam());
  const auto file = read_safetensors(weights);
  ASSERT_NO_THROW(load_named_tensors(*backbone, file.tensors));

  // Every learned parameter in the file (minus classifier remnants that the
  // reference keeps as Identity) is consumed by the C++ module.
  std::size_t matched = 0;
  const auto params = backbone->named_parameters(true);
  for (const auto& t : file.tensors) {
    if (params.find(t.name) != nullptr) ++matched;
  }
  EXPECT_EQ(matched, params.size());

  backbone->eval();
  const auto ref = read_safetensors(reference);
  torch::NoGradGuard no_grad;
  const auto out = backbone->forward(to_tensor(find(ref, "input")));
  const auto expected = to_tensor(find(ref, "features"));
  ASSERT_EQ(out.sizes(), expected.sizes());
  EXPECT_EQ(out.size(1), backbone->feature_dim());
  const double scale = expected.abs().max().item<double>();
  const double diff = (out - expected).abs().max().item<double>();
  EXPECT_LE(diff, 1e-4 * std::max(1.0, scale)) << "scale " << scale;
}

INSTANTIATE_TEST_SUITE_P(AllBackbones, BackboneOracle,
                         ::testing::ValuesIn(std::vector<BackboneName>(all_backbones().begin(),
                                                                       all_backbones().end())),
                         [](const auto& info) { return std::string(to_string(info.param)); });

}  // namespace
}  // namespace ecgcls
