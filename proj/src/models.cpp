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

#include "ecgcls/models.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "ecgcls/error.hpp"
#include "ecgcls/hash.hpp"
#include "ecgcls/safetensors.hpp"
#include "ecgcls/version.hpp"
#include "json.hpp"

namespace ecgcls {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kInferenceChunk = 8;

torch::Generator make_generator(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

std::int64_t count(const std::vector<torch::Tensor>& tensors, bool trainable_only) {
  std::int64_t n = 0;
  for (const auto& t : tensors) {
    if (!trainable_only || t.requires_grad()) n += t.numel();
  }
  return n;
}

void hash_tensor(Fnv1a& h, const torch::Tensor& t) {
  const auto c = t.contiguous();
  h.update(std::string_view(static_cast<const char*>(c.data_ptr()),
                            static_cast<std::size_t>(c.numel()) * c.element_size()));
}

std::uint64_t module_checksum(const torch::nn::Module& m) {
  Fnv1a h;
  for (const auto& p : m.named_parameters(true)) hash_tensor(h, p.value());
  for (const auto& b : m.named_buffers(true)) hash_tensor(h, b.value());
  return h.digest();
}

Head make_head(std::int64_t feature_dim, const HeadConfig& config, std::uint64_t seed) {
  Head head(feature_dim, config);
  // Keras Dense defaults: Glorot-uniform kernel, zero bias. A random output
  // bias would have to be unlearned at the grid's small learning rate.
  auto gen = make_generator(derive_seed(seed, "head"));
  torch::NoGradGuard no_grad;
  for (auto* fc : {head->fc1.get(), head->fc2.get()}) {
    const auto fan_out = static_cast<double>(fc->weight.size(0));
    const auto fan_in = static_cast<double>(fc->weight.size(1));
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    fc->weight.uniform_(-bound, bound, gen);
    fc->bias.zero_();
  }
  return head;
}

cv::Mat to_mat(const PixelImage& image) {
  const int type = image.channels() == 1 ? CV_32FC1 : CV_32FC3;
  return cv::Mat(image.height(), image.width(), type, const_cast<float*>(image.data().data()));
}

json params_to_json(const HyperParams& p) {
  return {{"epochs", p.epochs},   {"batch_size", p.batch_size},
          {"dropout", p.dropout}, {"neurons", p.neurons},
          {"learning_rate", p.learning_rate}};
}

HyperParams params_from_json(const json& j) {
  HyperParams p;
  p.epochs = j.at("epochs").get<int>();
  p.batch_size = j.at("batch_size").get<int>();
  p.dropout = j.at("dropout").get<double>();
  p.neurons = j.at("neurons").get<int>();
  p.learning_rate = j.at("learning_rate").get<double>();
  return p;
}

DType blob_dtype(const torch::Tensor& t) {
  switch (t.scalar_type()) {
    case torch::kFloat32: return DType::F32;
    case torch::kFloat64: return DType::F64;
    case torch::kInt32: return DType::I32;
    case torch::kInt64: return DType::I64;
    default: throw Error(Errc::IoError, "unsupported tensor dtype in checkpoint");
  }
}

void collect_blobs(const torch::nn::Module& m, const std::string& prefix,
                   std::vector<TensorBlob>& out) {
  auto add = [&](const std::string& name, const torch::Tensor& t) {
    const auto c = t.detach().contiguous();
    TensorBlob blob;
    blob.name = prefix + name;
    blob.dtype = blob_dtype(c);
    blob.shape.assign(c.sizes().begin(), c.sizes().end());
    blob.data.resize(static_cast<std::size_t>(c.numel()) * c.element_size());
    std::memcpy(blob.data.data(), c.data_ptr(), blob.data.size());
    out.push_back(std::move(blob));
  };
  for (const auto& p : m.named_parameters(true)) add(p.key(), p.value());
  for (const auto& b : m.named_buffers(true)) add(b.key(), b.value());
}

}  // namespace

// ---------------------------------------------------------------- head

void HeadConfig::validate() const {
  if (neurons <= 0) throw Error(Errc::ConfigInvalid, "head neurons must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw Error(Errc::ConfigInvalid, "head dropout must lie in [0, 1)");
  }
}

std::int64_t HeadConfig::parameter_count(std::int64_t feature_dim, int neurons) {
  return (feature_dim + 1) * neurons + (neurons + 1);
}

HeadImpl::HeadImpl(std::int64_t feature_dim, const HeadConfig& config)
    : dropout(config.dropout),
      fc1(register_module("fc1", torch::nn::Linear(feature_dim, config.neurons))),
      fc2(register_module("fc2", torch::nn::Linear(config.neurons, 1))) {}

torch::Tensor HeadImpl::forward(const torch::Tensor& features, torch::Generator* dropout_gen) {
  auto h = torch::relu(fc1(features));
  if (dropout_gen != nullptr && dropout > 0.0) {
    // Inverted dropout with an explicit generator so masks are seeded.
    const auto keep = torch::empty_like(h).bernoulli_(1.0 - dropout, *dropout_gen);
    h = h * keep / (1.0 - dropout);
  }
  return fc2(h).squeeze(1);
}

// -------------------------------------------------------------- policy

FineTunePolicy FineTunePolicy::parse(std::string_view text) {
  FineTunePolicy p;
  if (text == "none") return p;
  if (text == "last_block") {
    p.kind = Kind::LastBlock;
    return p;
  }
  if (text == "all") {
    p.kind = Kind::All;
    return p;
  }
  constexpr std::string_view kPrefix = "last_n_layers:";
  if (text.substr(0, kPrefix.size()) == kPrefix) {
    const std::string n(text.substr(kPrefix.size()));
    char* end = nullptr;
    const long v = std::strtol(n.c_str(), &end, 10);
    if (!n.empty() && *end == '\0' && v >= 0) {
      p.kind = Kind::LastNLayers;
      p.layers = static_cast<int>(v);
      return p;
    }
  }
  throw Error(Errc::PolicyInvalid, "unknown fine-tune policy '" + std::string(text) +
                                       "' (none, last_block, last_n_layers:N, all)");
}

std::string FineTunePolicy::str() const {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::LastBlock: return "last_block";
    case Kind::LastNLayers: return "last_n_layers:" + std::to_string(layers);
    case Kind::All: return "all";
  }
  return "none";
}

// --------------------------------------------------------------- model

TrainableModel::TrainableModel(BackboneSpec spec, HeadConfig head,
                               std::shared_ptr<BackboneImpl> backbone, Head head_module)
    : spec_(std::move(spec)),
      head_config_(head),
      backbone_(std::move(backbone)),
      head_(std::move(head_module)) {
  // Batch-norm statistics stay frozen: the backbone always runs in
  // inference mode, even when some of its layers are being optimized.
  backbone_->eval();
}

std::int64_t TrainableModel::total_param_count() const {
  return count(backbone_->parameters(), false) + count(head_->parameters(), false);
}

std::int64_t TrainableModel::trainable_param_count() const {
  return count(backbone_->parameters(), true) + count(head_->parameters(), true);
}

std::int64_t TrainableModel::head_param_count() const {
  return count(head_->parameters(), false);
}

std::vector<torch::Tensor> TrainableModel::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : backbone_->parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  for (const auto& p : head_->parameters()) out.push_back(p);
  return out;
}

bool TrainableModel::backbone_frozen() const {
  for (const auto& p : backbone_->parameters()) {
    if (p.requires_grad()) return false;
  }
  return true;
}

std::uint64_t TrainableModel::backbone_checksum() const { return module_checksum(*backbone_); }
std::uint64_t TrainableModel::head_checksum() const { return module_checksum(*head_); }

torch::Tensor TrainableModel::to_input(std::span<const PixelImage> images) const {
  const auto [w, h, c] = spec_.native_input;
  (void)c;
  const auto norm = backbone_->normalization();
  auto input = torch::empty({static_cast<std::int64_t>(images.size()), 3, h, w});
  auto acc = input.accessor<float, 4>();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const PixelImage& image = images[i];
    if (image.empty() || (image.channels() != 1 && image.channels() != 3)) {
      throw Error(Errc::ShapeMismatch, "model input must be a non-empty gray or RGB image");
    }
    cv::Mat resized;
    const bool shrink = image.width() >= w && image.height() >= h;
    cv::resize(to_mat(image), resized, cv::Size(w, h), 0, 0,
               shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
    const int ch = image.channels();
    const auto idx = static_cast<std::int64_t>(i);
    for (int y = 0; y < h; ++y) {
      const float* row = resized.ptr<float>(y);
      for (int x = 0; x < w; ++x) {
        for (int k = 0; k < 3; ++k) {
          const float v = row[x * ch + (ch == 1 ? 0 : k)];
          acc[idx][k][y][x] = (v - norm.mean[static_cast<std::size_t>(k)]) /
                              norm.std[static_cast<std::size_t>(k)];
        }
      }
    }
  }
  return input;
}

torch::Tensor TrainableModel::features(const torch::Tensor& input) {
  if (backbone_frozen()) {
    torch::NoGradGuard no_grad;
    return backbone_->forward(input);
  }
  return backbone_->forward(input);
}

std::vector<double> TrainableModel::predict_features(const torch::Tensor& features) {
  torch::NoGradGuard no_grad;
  const auto probs = torch::sigmoid(head_->forward(features)).to(torch::kFloat64).contiguous();
  const double* p = probs.data_ptr<double>();
  return {p, p + probs.numel()};
}

std::vector<double> TrainableModel::predict(std::span<const PixelImage> images) {
  std::vector<double> out;
  out.reserve(images.size());
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < images.size(); i += kInferenceChunk) {
    const auto chunk = images.subspan(i, std::min<std::size_t>(kInferenceChunk, images.size() - i));
    const auto probs = predict_features(backbone_->forward(to_input(chunk)));
    out.insert(out.end(), probs.begin(), probs.end());
  }
  return out;
}

void TrainableModel::set_head_dropout(double dropout) {
  HeadConfig next = head_config_;
  next.dropout = dropout;
  next.validate();
  head_config_ = next;
  head_->dropout = dropout;
}

TrainableModel& set_fine_tune_policy(TrainableModel& model, const FineTunePolicy& policy) {
  auto layers = model.backbone_->layers();
  std::size_t first = layers.size();
  switch (policy.kind) {
    case FineTunePolicy::Kind::None: break;
    case FineTunePolicy::Kind::All: first = 0; break;
    case FineTunePolicy::Kind::LastBlock: {
      const int block = model.backbone_->last_conv_block();
      for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].block >= block) {
          first = i;
          break;
        }
      }
      break;
    }
    case FineTunePolicy::Kind::LastNLayers:
      if (policy.layers < 0 || static_cast<std::size_t>(policy.layers) > layers.size()) {
        throw Error(Errc::PolicyInvalid,
                    "cannot unfreeze " + std::to_string(policy.layers) + " layers; " +
                        std::string(to_string(model.spec_.name)) + " has " +
                        std::to_string(layers.size()));
      }
      first = layers.size() - static_cast<std::size_t>(policy.layers);
      break;
  }
  for (auto& p : model.backbone_->parameters()) p.requires_grad_(false);
  for (std::size_t i = first; i < layers.size(); ++i) {
    for (auto& p : layers[i].parameters) p.requires_grad_(true);
  }
  model.policy_ = policy;
  model.mode_ = model.backbone_frozen() ? TrainMode::FeatureExtract : TrainMode::FineTune;
  return model;
}

TrainableModel build_model(const BackboneSpec& spec, const HeadConfig& head, TrainMode mode,
                           std::uint64_t seed) {
  head.validate();
  auto backbone = make_backbone(spec.name);
  if (spec.pretrained) {
    const auto file = read_safetensors(resolve_weights_path(spec));
    load_named_tensors(*backbone, file.tensors);
  } else {
    auto gen = make_generator(spec.init_seed);
    init_backbone(*backbone, gen, spec.native_input);
  }
  TrainableModel model(spec, head, backbone, make_head(backbone->feature_dim(), head, seed));
  model.provenance.seed = seed;
  FineTunePolicy policy;
  if (mode == TrainMode::FineTune) policy.kind = FineTunePolicy::Kind::LastBlock;
  set_fine_tune_policy(model, policy);
  return model;
}

// ---------------------------------------------------------- checkpoint

void save_checkpoint(const fs::path& dir, TrainableModel& model) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string());

  std::vector<TensorBlob> blobs;
  collect_blobs(model.backbone(), "backbone.", blobs);
  collect_blobs(model.head(), "head.", blobs);
  write_safetensors(dir / "weights.safetensors", blobs);

  const auto& spec = model.backbone_spec();
  const auto& prov = model.provenance;
  json meta;
  meta["format"] = "ecgcls-checkpoint";
  meta["tool_version"] = std::string(kToolVersion);
  meta["backbone"] = {{"name", std::string(to_string(spec.name))},
                      {"pretrained", spec.pretrained},
                      {"init_seed", spec.init_seed},
                      {"native_input",
                       {{"width", spec.native_input.width},
                        {"height", spec.native_input.height},
                        {"channels", spec.native_input.channels}}}};
  if (spec.weights) meta["backbone"]["weights"] = spec.weights->string();
  meta["head"] = {{"neurons", model.head_config().neurons},
                  {"dropout", model.head_config().dropout}};
  meta["mode"] = std::string(to_string(model.mode()));
  meta["policy"] = model.policy().str();
  meta["feature_dim"] = model.feature_dim();
  meta["total_param_count"] = model.total_param_count();
  meta["trainable_param_count"] = model.trainable_param_count();
  meta["provenance"] = {
      {"manifest_hash", prov.manifest_hash},
      {"seed", prov.seed},
      {"config_hash", prov.config_hash},
      {"trained_on", prov.trained_on},
      {"backend", "libtorch-cpu"},
      {"backend_note",
       "training results are reproducible for a fixed seed on the same libtorch build and "
       "thread count"}};
  if (prov.params) meta["provenance"]["params"] = params_to_json(*prov.params);

  std::ofstream out(dir / "metadata.json");
  out << meta.dump(2) << "\n";
  if (!out) throw Error(Errc::IoError, "cannot write " + (dir / "metadata.json").string());
}

TrainableModel load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "metadata.json");
  if (!in) throw Error(Errc::IoError, "no checkpoint metadata in " + dir.string());
  json meta;
  try {
    in >> meta;
    BackboneSpec spec = BackboneSpec::of(parse_backbone(meta.at("backbone").at("name").get<std::string>()),
                                         meta.at("backbone").at("pretrained").get<bool>());
    spec.init_seed = meta.at("backbone").value("init_seed", std::uint64_t{0});
    if (meta["backbone"].contains("weights")) {
      spec.weights = meta["backbone"]["weights"].get<std::string>();
    }
    HeadConfig head;
    head.neurons = meta.at("head").at("neurons").get<int>();
    head.dropout = meta.at("head").at("dropout").get<double>();
    head.validate();

    auto backbone = make_backbone(spec.name);
    TrainableModel model(spec, head, backbone, Head(backbone->feature_dim(), head));
    const auto file = read_safetensors(dir / "weights.safetensors");
    load_named_tensors(model.backbone(), file.tensors, "backbone.");
    load_named_tensors(model.head(), file.tensors, "head.");
    set_fine_tune_policy(model, FineTunePolicy::parse(meta.at("policy").get<std::string>()));

    const auto& prov = meta.at("provenance");
    model.provenance.manifest_hash = prov.value("manifest_hash", "");
    model.provenance.seed = prov.value("seed", std::uint64_t{0});
    model.provenance.config_hash = prov.value("config_hash", "");
    model.provenance.trained_on = prov.value("trained_on", std::vector<std::string>{});
    if (prov.contains("params")) model.provenance.params = params_from_json(prov["params"]);
    return model;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, "bad checkpoint metadata: " + std::string(e.what()));
  }
}

}  // namespace ecgcls
