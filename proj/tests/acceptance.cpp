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

// Acceptance runner: one PASS/FAIL/SKIP line per criterion. Exits non-zero
// if any required criterion (1-6) fails; criterion 7 is informational.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "ecgcls/dataset.hpp"
#include "ecgcls/hypersearch.hpp"
#include "ecgcls/metrics.hpp"
#include "ecgcls/models.hpp"
#include "ecgcls/preprocess.hpp"
#include "ecgcls/random.hpp"
#include "ecgcls/synthetic.hpp"
#include "reference_grid_results.hpp"
#include "test_support.hpp"

namespace ecgcls {
namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome check(bool ok, std::string d) { return {ok ? Status::Pass : Status::Fail, std::move(d)}; }

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

struct Run {
  int status = -1;
  std::string output;
};

Run run(const std::string& cmd) {
  Run r;
  FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }
std::string cli(const std::string& args) { return std::string(ECGCLS_BIN) + " " + args; }

// Runs CLI steps in order; returns the first failure.
std::optional<std::string> run_steps(const std::vector<std::string>& steps) {
  for (const auto& s : steps) {
    const auto r = run(cli(s));
    if (r.status != 0) {
      return "`ecgcls " + s.substr(0, s.find(' ')) + "` exited " + std::to_string(r.status) +
             ": " + r.output.substr(0, 300);
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

Outcome ac1() {
  const auto t = Clock::now();
  const auto a = enumerate_grid(HyperGrid::reference());
  const auto b = enumerate_grid(HyperGrid::reference());
  const double secs = since(t);
  std::set<std::string> unique;
  for (const auto& p : a) unique.insert(p.canonical());
  const bool ok = a.size() == 54 && unique.size() == 54 && a == b && secs < 1.0;
  return check(ok, fmt("%zu combinations, %zu unique, deterministic=%s, %.4f s (< 1 s)", a.size(),
                       unique.size(), a == b ? "yes" : "no", secs));
}

Outcome ac2() {
  const auto t = Clock::now();
  testing::TempDir dir;
  Manifest m;
  m.ratios = SplitRatios{};
  for (int i = 0; i < 20; ++i) {
    ImageRecord r;
    r.id = "r" + std::to_string(i);
    r.label = i % 2 ? Label::Covid : Label::NonCovid;
    r.split = Split::Train;
    m.records.push_back(r);
  }
  const auto out = run_grid_search(HyperGrid::reference(), "vgg16", m, 5, 1,
                                   testing::published_stub_trainer(),
                                   {.workers = 1, .store = dir / "trials.jsonl"});
  const auto report = run(cli("gridsearch report --store " + q(dir / "trials.jsonl")));
  if (report.status != 0) return fail("gridsearch report exited " + std::to_string(report.status));
  std::istringstream in(report.output);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.find(" | ") != std::string::npos) rows.push_back(line);
  }
  const std::vector<std::string> columns = {"Epoch", "Batch Size", "Dropout", "Layer Neurons",
                                            "Accuracy", "Error"};
  bool header_ok = !rows.empty();
  if (header_ok) {
    std::istringstream h(rows[0]);
    std::vector<std::string> cells;
    for (std::string cell; std::getline(h, cell, '|');) {
      cell.erase(0, cell.find_first_not_of(' '));
      cell.erase(cell.find_last_not_of(' ') + 1);
      cells.push_back(cell);
    }
    header_ok = cells == columns;
  }
  const auto best = rank_trials(out.results).front();
  const bool best_ok = best.params == HyperParams{25, 32, 0.1, 32, 0.001} &&
                       std::abs(best.mean_accuracy - 0.8139) < 1e-9 &&
                       std::abs(best.mean_error - 0.4263) < 1e-9;
  const double secs = since(t);
  const std::size_t data_rows = rows.empty() ? 0 : rows.size() - 1;
  return check(header_ok && data_rows == 54 && best_ok && secs < 10.0,
               fmt("header %s, %zu rows, best (%d, %d, %g, %d) acc %.4f err %.4f, %.2f s (< 10 s)",
                   header_ok ? "ok" : "WRONG", data_rows, best.params.epochs,
                   best.params.batch_size, best.params.dropout, best.params.neurons,
                   best.mean_accuracy, best.mean_error, secs));
}

Outcome ac3() {
  const auto t = Clock::now();
  SheetSpec spec;
  spec.size = {1000, 700};
  spec.trace_density = 0.9;
  spec.grid_density = 0.3;
  const auto sheet = generate_sheet(spec, 2026);
  PreprocessConfig cfg;
  cfg.density_threshold = 0.5;
  const auto out = remove_gridlines(sheet.image, cfg);
  std::size_t grid = 0, removed = 0, trace = 0, kept = 0;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      bool white = true, same = true;
      for (int c = 0; c < out.channels(); ++c) {
        white &= out.at(x, y, c) == 1.0f;
        same &= out.at(x, y, c) == sheet.image.at(x, y, c);
      }
      if (sheet.class_at(x, y) == PixelClass::Grid) {
        ++grid;
        removed += white;
      } else if (sheet.class_at(x, y) == PixelClass::Trace) {
        ++trace;
        kept += same;
      }
    }
  }
  testing::TempDir dir;
  save_png(dir / "once.png", out);
  save_png(dir / "twice.png", remove_gridlines(load_image(dir / "once.png"), cfg));
  auto bytes = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  const bool idempotent = bytes(dir / "once.png") == bytes(dir / "twice.png");
  const double secs = since(t);
  const double grid_frac = grid ? static_cast<double>(removed) / grid : 0.0;
  const double trace_frac = trace ? static_cast<double>(kept) / trace : 0.0;
  return check(grid_frac >= 0.99 && trace_frac >= 0.99 && idempotent && secs < 5.0,
               fmt("grid removed %.4f (%zu px), trace kept %.4f (%zu px), PNG idempotent=%s, "
                   "%.2f s (< 5 s)",
                   grid_frac, grid, trace_frac, trace, idempotent ? "yes" : "no", secs));
}

Outcome ac4() {
  const auto t = Clock::now();
  // Each suite holds its module's property tests (randomized manifests,
  // k-fold exactness, augmentation determinism, threshold monotonicity,
  // resume equivalence) next to the example-based ones.
  const std::vector<std::pair<const char*, const char*>> suites = {
      {"dataset", ECGCLS_TEST_DATASET},
      {"preprocess", ECGCLS_TEST_PREPROCESS},
      {"augment", ECGCLS_TEST_AUGMENT},
      {"hypersearch", ECGCLS_TEST_HYPERSEARCH}};
  std::string failed;
  for (const auto& [name, path] : suites) {
    const auto r = run(std::string("'") + path + "' --gtest_brief=1");
    if (r.status != 0) failed += std::string(failed.empty() ? "" : ", ") + name;
  }
  const double secs = since(t);
  return check(failed.empty() && secs < 60.0,
               fmt("suites dataset/preprocess/augment/hypersearch %s, %.2f s (< 60 s)",
                   failed.empty() ? "green" : ("FAILED: " + failed).c_str(), secs));
}

Outcome ac5() {
  const auto t = Clock::now();
  std::string detail;
  bool ok = true;
  Rng rng(5);
  std::vector<PixelImage> batch;
  for (int i = 0; i < 4; ++i) {
    PixelImage img(96, 64, 3);
    for (float& v : img.data()) v = static_cast<float>(rng.uniform());
    batch.push_back(img);
  }
  const auto labels = torch::tensor({1.f, 0.f, 1.f, 0.f});
  for (auto name : all_backbones()) {
    auto spec = BackboneSpec::of(name, false);
    spec.init_seed = 1;
    auto model = build_model(spec, {32, 0.1}, TrainMode::FeatureExtract, 1);
    const auto backbone_before = model.backbone_checksum();
    const auto head_before = model.head_checksum();
    torch::optim::Adam opt(model.trainable_parameters(), torch::optim::AdamOptions(1e-3));
    const auto logits = model.head().forward(model.features(model.to_input(batch)));
    opt.zero_grad();
    torch::binary_cross_entropy_with_logits(logits, labels).backward();
    opt.step();
    const std::int64_t formula = (model.feature_dim() + 1) * 32 + (32 + 1) * 1;
    const bool frozen = model.backbone_checksum() == backbone_before;
    const bool head_moved = model.head_checksum() != head_before;
    const bool count = model.trainable_param_count() == formula;
    ok &= frozen && head_moved && count;
    detail += fmt("%s%s %s/%s/%lld", detail.empty() ? "" : ", ", std::string(to_string(name)).c_str(),
                  frozen ? "frozen" : "MOVED", head_moved ? "head-moved" : "HEAD-STILL",
                  static_cast<long long>(model.trainable_param_count()));
    if (!count) detail += fmt("!=%lld", static_cast<long long>(formula));
  }
  const double secs = since(t);
  return check(ok && secs < 120.0, detail + fmt("; %.1f s for all six (< 120 s)", secs));
}

Outcome ac6() {
  const auto t = Clock::now();
  testing::TempDir dir;
  const std::string model =
      " --backbone densenet201 --init random --init-seed 1 --mode feature_extract --seed 7";
  const auto err = run_steps({
      "demo --out " + q(dir / "raw") + " --count 40 --seed 1",
      "ingest --root " + q(dir / "raw") + " --seed 1 --out " + q(dir / "manifest.jsonl"),
      "preprocess --manifest " + q(dir / "manifest.jsonl") + " --out-dir " + q(dir / "clean"),
      "augment --manifest " + q(dir / "clean" / "manifest.jsonl") +
          " --copies 1 --hflip --brightness=-0.05:0.05 --zoom 0.95:1.05 --seed 1 --out-dir " +
          q(dir / "aug"),
      "train --manifest " + q(dir / "aug" / "manifest.jsonl") + model +
          " --epochs 3 --batch 8 --dropout 0.1 --neurons 32 --lr 0.001 --checkpoint " +
          q(dir / "ckpt"),
      "evaluate --checkpoint " + q(dir / "ckpt") + " --manifest " +
          q(dir / "aug" / "manifest.jsonl") + " --report " + q(dir / "report.json"),
  });
  if (err) return fail(*err);
  const auto report = read_report(dir / "report.json");
  const double secs = since(t);
  return check(report.accuracy >= 0.9 && secs < 300.0,
               fmt("40 sheets, densenet201 feature_extract 3 epochs: test accuracy %.4f on %zu "
                   "(>= 0.9), %.1f s (< 300 s)",
                   report.accuracy, report.n_test, secs));
}

Outcome ac7() {
  const char* root = std::getenv("ECGCLS_DATA_ROOT");
  if (!root || !*root) return {Status::Skip, "set ECGCLS_DATA_ROOT to the ECG image corpus to run"};
  auto vgg = BackboneSpec::of(BackboneName::Vgg16, true);
  try {
    resolve_weights_path(vgg);
  } catch (const std::exception&) {
    return {Status::Skip, "needs vgg16.safetensors in ECGCLS_WEIGHTS_DIR"};
  }
  testing::TempDir dir;
  const char* labels = std::getenv("ECGCLS_LABELS");
  const std::string hp = " --epochs 25 --batch 32 --dropout 0.1 --neurons 32 --lr 0.001 --seed 1";
  const auto manifest = q(dir / "aug" / "manifest.jsonl");
  const auto err = run_steps({
      "ingest --root " + q(root) + (labels ? std::string(" --labels ") + labels : "") +
          " --seed 1 --out " + q(dir / "manifest.jsonl"),
      "preprocess --manifest " + q(dir / "manifest.jsonl") + " --out-dir " + q(dir / "clean"),
      "augment --manifest " + q(dir / "clean" / "manifest.jsonl") +
          " --copies 3 --hflip --brightness=-0.1:0.1 --zoom 0.9:1.1 --seed 1 --out-dir " +
          q(dir / "aug"),
      "train --manifest " + manifest + " --backbone vgg16 --mode feature_extract" + hp +
          " --checkpoint " + q(dir / "fe"),
      "evaluate --checkpoint " + q(dir / "fe") + " --manifest " + manifest + " --report " +
          q(dir / "fe.json"),
      "train --manifest " + manifest + " --backbone vgg16 --mode fine_tune" + hp +
          " --checkpoint " + q(dir / "ft"),
      "evaluate --checkpoint " + q(dir / "ft") + " --manifest " + manifest + " --report " +
          q(dir / "ft.json"),
  });
  if (err) return fail(*err);
  const double fe = read_report(dir / "fe.json").accuracy;
  const double ft = read_report(dir / "ft.json").accuracy;
  return check(std::abs(fe - 0.8139) <= 0.05 && std::abs(ft - 0.8592) <= 0.05,
               fmt("vgg16 feature_extract %.4f (0.8139 +- 0.05), fine_tune %.4f (0.8592 +- 0.05)",
                   fe, ft));
}

}  // namespace
}  // namespace ecgcls

int main() {
  using namespace ecgcls;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"AC1 grid enumeration", ac1},   {"AC2 grid report", ac2},
      {"AC3 gridline oracle", ac3},    {"AC4 property suite", ac4},
      {"AC5 freeze contract", ac5},    {"AC6 end-to-end demo", ac6},
      {"AC7 corpus accuracy", ac7}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    std::cout << "[" << tag << "] " << criteria[i].first << (i == 6 ? " (informational)" : "")
              << ": " << o.detail << std::endl;
    if (o.status == Status::Fail && i < 6) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
