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

// ecgcls: command-line front end for the ECG-sheet classification pipeline.
//
//   ecgcls demo       --out DIR
//   ecgcls ingest     --root DIR --out manifest.jsonl
//   ecgcls preprocess --manifest m.jsonl --out-dir DIR
//   ecgcls augment    --manifest m.jsonl --out-dir DIR
//   ecgcls train      --manifest m.jsonl --backbone vgg16 --checkpoint DIR
//   ecgcls gridsearch --manifest m.jsonl --backbone vgg16 --store trials.jsonl
//   ecgcls gridsearch report --store trials.jsonl
//   ecgcls evaluate   --checkpoint DIR --manifest m.jsonl --report out.json
//   ecgcls compare    --reports a.json b.json --out fig.csv   (alias: report)
//
// Exit codes: 0 success, 1 domain error ("error: <Code>: message" on
// stderr), 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecgcls/augment.hpp"
#include "ecgcls/config.hpp"
#include "ecgcls/dataset.hpp"
#include "ecgcls/error.hpp"
#include "ecgcls/hypersearch.hpp"
#include "ecgcls/log.hpp"
#include "ecgcls/metrics.hpp"
#include "ecgcls/models.hpp"
#include "ecgcls/preprocess.hpp"
#include "ecgcls/synthetic.hpp"
#include "ecgcls/train_eval.hpp"
#include "ecgcls/version.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace ecgcls;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flag values that need parsing or that override config entries only when
// given on the command line.
struct Flags {
  fs::path config_path;
  bool print_config = false;
  bool json = false;

  // demo
  fs::path demo_out;
  int demo_count = 40;
  std::string demo_size = "400x300";

  // ingest
  fs::path root;
  std::string ratios;
  fs::path out;

  // preprocess / augment
  fs::path out_dir;
  std::string crop;
  std::string target;
  std::string interpolation;
  std::string normalize;
  std::string density;
  std::string brightness;
  std::string zoom;

  // train / gridsearch / evaluate
  std::string init;
  fs::path checkpoint;
  fs::path store;
  fs::path report;
  std::vector<int> grid_epochs;
  std::vector<int> grid_batch;
  std::vector<double> grid_dropout;
  std::vector<int> grid_neurons;
  std::vector<double> grid_lr;

  // compare
  std::vector<fs::path> reports;
};

ManifestProvenance provenance(const RunConfig& cfg) {
  return {std::string(kToolVersion), config_hash(cfg)};
}

Size parse_size(const std::string& text) {
  int w = 0;
  int h = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%dx%d%c", &w, &h, &tail) != 2) {
    throw UsageError("expected WxH, got '" + text + "'");
  }
  return {w, h};
}

Rect parse_rect(const std::string& text) {
  Rect r;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d,%d%c", &r.x, &r.y, &r.w, &r.h, &tail) != 4) {
    throw UsageError("expected x,y,w,h, got '" + text + "'");
  }
  return r;
}

SplitRatios parse_ratios(const std::string& text) {
  SplitRatios r;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf%c", &r.train, &r.test, &r.val, &tail) != 3) {
    throw UsageError("expected train,test,val ratios, got '" + text + "'");
  }
  return r;
}

fs::path require_manifest(const RunConfig& cfg) {
  if (!cfg.manifest) throw UsageError("--manifest is required");
  return *cfg.manifest;
}

BackboneSpec backbone_spec(const RunConfig& cfg) {
  auto spec = BackboneSpec::of(parse_backbone(cfg.model.backbone), cfg.model.pretrained);
  spec.weights = cfg.model.weights;
  spec.init_seed = cfg.model.init_seed;
  return spec;
}

std::optional<FineTunePolicy> policy_of(const RunConfig& cfg) {
  if (!cfg.model.policy) return std::nullopt;
  return FineTunePolicy::parse(*cfg.model.policy);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
}

// ------------------------------------------------------------ commands

int run_demo(const RunConfig& cfg, const Flags& f) {
  if (f.demo_out.empty()) throw UsageError("--out is required");
  const auto paths = write_demo_corpus(f.demo_out, f.demo_count, cfg.seed, parse_size(f.demo_size));
  log::info(log::cat("wrote ", paths.size(), " synthetic sheets under ", f.demo_out.string()));
  return 0;
}

int run_ingest(RunConfig& cfg, const Flags& f) {
  fs::path root = f.root;
  if (root.empty() && cfg.data_root) root = *cfg.data_root;
  if (root.empty()) {
    if (const char* env = std::getenv("ECGCLS_DATA_ROOT"); env && *env) root = env;
  }
  if (root.empty()) throw UsageError("--root is required (or set ECGCLS_DATA_ROOT)");
  if (f.out.empty()) throw UsageError("--out is required");
  cfg.data_root = root;

  auto manifest = ingest_dataset(root, parse_label_rule(cfg.ingest.labels));
  for (const auto& w : manifest.warnings) log::warn(w);
  manifest = assign_splits(manifest, cfg.ingest.ratios, cfg.seed);
  manifest = apply_folds(manifest, kfold_partition(manifest, cfg.ingest.k, cfg.seed));
  write_manifest(f.out, manifest, provenance(cfg));
  auto counts = manifest.class_counts();
  log::info(log::cat(manifest.records.size(), " images (COVID ", counts[Label::Covid],
                     ", NON_COVID ", counts[Label::NonCovid], "): train ",
                     manifest.count(Split::Train), ", test ", manifest.count(Split::Test),
                     ", val ", manifest.count(Split::Val), "; k = ", cfg.ingest.k));
  return 0;
}

int run_preprocess(const RunConfig& cfg, const Flags& f) {
  if (f.out_dir.empty()) throw UsageError("--out-dir is required");
  cfg.preprocess.validate();
  auto manifest = read_manifest(require_manifest(cfg));
  std::set<fs::path> written;
  for (auto& r : manifest.records) {
    const auto image = preprocess_pipeline(load_image(r.path), cfg.preprocess);
    const auto path = f.out_dir / fs::path(r.id).replace_extension(".png");
    if (!written.insert(path).second) {
      throw Error(Errc::IoError, "two records map to " + path.string());
    }
    save_png(path, image);
    r.path = fs::absolute(path);
    r.width = image.width();
    r.height = image.height();
  }
  const auto out = f.out.empty() ? f.out_dir / "manifest.jsonl" : f.out;
  write_manifest(out, manifest, provenance(cfg));
  log::info(log::cat("preprocessed ", manifest.records.size(), " images into ", f.out_dir.string()));
  return 0;
}

int run_augment(const RunConfig& cfg, const Flags& f) {
  if (f.out_dir.empty()) throw UsageError("--out-dir is required");
  const auto manifest = read_manifest(require_manifest(cfg));
  const auto out_dir = fs::absolute(f.out_dir);
  const auto augmented = augment_split(manifest, cfg.augment, disk_loader(), png_sink(out_dir));
  const auto out = f.out.empty() ? f.out_dir / "manifest.jsonl" : f.out;
  write_manifest(out, augmented, provenance(cfg));
  log::info(log::cat("added ", augmented.records.size() - manifest.records.size(),
                     " augmented TRAIN images"));
  return 0;
}

nlohmann::json history_json(const TrainHistory& h) {
  return {{"epochs_run", h.epochs_run},       {"train_loss", h.train_loss},
          {"train_accuracy", h.train_accuracy}, {"val_loss", h.val_loss},
          {"val_accuracy", h.val_accuracy}};
}

int run_train(const RunConfig& cfg, const Flags& f) {
  if (f.checkpoint.empty()) throw UsageError("--checkpoint is required");
  const auto manifest = read_manifest(require_manifest(cfg));
  auto model = build_model(backbone_spec(cfg), HeadConfig{cfg.train.neurons, cfg.train.dropout},
                           parse_train_mode(cfg.model.mode), cfg.seed);
  if (auto policy = policy_of(cfg)) set_fine_tune_policy(model, *policy);
  log::info(log::cat(cfg.model.backbone, " ", to_string(model.mode()), " (",
                     model.policy().str(), "): ", model.trainable_param_count(), " of ",
                     model.total_param_count(), " parameters trainable"));

  TrainOptions options;
  options.on_epoch = [](int epoch, const TrainHistory& h) {
    const auto e = static_cast<std::size_t>(epoch);
    char line[160];
    std::snprintf(line, sizeof(line), "epoch %d: loss %.4f acc %.4f", epoch + 1, h.train_loss[e],
                  h.train_accuracy[e]);
    std::string msg = line;
    if (!h.val_loss.empty()) {
      std::snprintf(line, sizeof(line), " | val loss %.4f acc %.4f", h.val_loss[e],
                    h.val_accuracy[e]);
      msg += line;
    }
    log::info(msg);
  };
  const auto history = train(model, manifest, cfg.train, cfg.seed, options);
  model.provenance.config_hash = config_hash(cfg);
  save_checkpoint(f.checkpoint, model);
  write_text(f.checkpoint / "history.json", history_json(history).dump(2) + "\n");
  write_text(f.checkpoint / "config.yaml", config_to_yaml(cfg));
  if (f.json) std::cout << history_json(history).dump(2) << "\n";
  return 0;
}

int run_gridsearch(RunConfig& cfg, const Flags& f, bool k_given) {
  auto& grid = cfg.search.grid;
  if (!f.grid_epochs.empty()) grid.epochs_set = f.grid_epochs;
  if (!f.grid_batch.empty()) grid.batch_set = f.grid_batch;
  if (!f.grid_dropout.empty()) grid.dropout_set = f.grid_dropout;
  if (!f.grid_neurons.empty()) grid.neurons_set = f.grid_neurons;
  if (!f.grid_lr.empty()) grid.lr_set = f.grid_lr;
  const auto manifest = read_manifest(require_manifest(cfg));
  if (!k_given && manifest.k) cfg.search.k = *manifest.k;

  SearchOptions options;
  options.workers = cfg.search.workers;
  if (!f.store.empty()) options.store = f.store;
  const auto trainer = make_model_trainer(backbone_spec(cfg), parse_train_mode(cfg.model.mode),
                                          policy_of(cfg));
  const auto outcome = run_grid_search(grid, cfg.model.backbone, manifest, cfg.search.k, cfg.seed,
                                       trainer, options);
  log::info(log::cat(outcome.results.size(), " trials (", outcome.resumed, " resumed, ",
                     outcome.executed, " executed)"));
  if (f.json) {
    std::cout << trials_to_json(outcome.results) << "\n";
  } else {
    std::cout << format_trial_table(outcome.results);
    if (outcome.best) std::cout << "best: " << outcome.best->canonical() << "\n";
  }
  return 0;
}

int run_gridsearch_report(const Flags& f) {
  if (f.store.empty()) throw UsageError("--store is required");
  if (!fs::exists(f.store)) throw Error(Errc::IoError, "no trial store at " + f.store.string());
  auto trials = TrialStore(f.store).load_all();
  if (trials.empty()) throw Error(Errc::EmptyResults, "trial store is empty");
  std::stable_sort(trials.begin(), trials.end(),
                   [](const TrialResult& a, const TrialResult& b) { return a.index < b.index; });
  if (f.json) {
    std::cout << trials_to_json(trials) << "\n";
  } else {
    std::cout << format_trial_table(trials);
    const auto ranked = rank_trials(trials);
    if (ranked.front().status == TrialStatus::Ok) {
      std::cout << "best: " << ranked.front().params.canonical() << "\n";
    }
  }
  return 0;
}

int run_evaluate(const RunConfig& cfg, const Flags& f) {
  if (f.checkpoint.empty()) throw UsageError("--checkpoint is required");
  const auto manifest = read_manifest(require_manifest(cfg));
  auto model = load_checkpoint(f.checkpoint);
  auto report = evaluate(model, manifest, cfg.threshold);
  report.config_hash = config_hash(cfg);
  report.tool_version = std::string(kToolVersion);
  if (!f.report.empty()) write_report(f.report, report);
  if (f.json) {
    std::cout << report_to_json(report) << "\n";
  } else {
    std::printf("%s %s: accuracy %.4f loss %.4f (n = %zu; tp %zu fp %zu fn %zu tn %zu)\n",
                report.model_id.c_str(), std::string(to_string(report.mode)).c_str(),
                report.accuracy, report.loss, report.n_test, report.confusion.tp,
                report.confusion.fp, report.confusion.fn, report.confusion.tn);
  }
  return 0;
}

int run_compare(const Flags& f) {
  if (f.reports.empty()) throw UsageError("--reports is required");
  std::vector<EvalReport> reports;
  for (const auto& p : f.reports) reports.push_back(read_report(p));
  const auto comparison = compare_models(std::move(reports));
  if (!f.out.empty()) write_comparison(f.out, comparison);
  std::cout << (f.json ? comparison.plot_json() + "\n" : comparison.csv());
  return 0;
}

void configure_logging(const std::string& level) {
  if (!log::set_level(level)) throw UsageError("unknown log level '" + level + "'");
}

// Finds --config before full parsing so that file values become the
// defaults that command-line flags override.
std::optional<fs::path> prescan_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return fs::path(argv[i + 1]);
    if (a.rfind("--config=", 0) == 0) return fs::path(a.substr(9));
  }
  return std::nullopt;
}

int dispatch(int argc, char** argv) {
  RunConfig cfg;
  if (auto path = prescan_config(argc, argv)) cfg = load_config(*path);
  Flags f;

  CLI::App app{"Classify paper-ECG sheet images as COVID / NON_COVID with transfer learning."};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  app.add_option("--config", f.config_path, "YAML run configuration; flags override it");
  app.add_option("--log-level", cfg.log_level, "trace, debug, info, warn, error, off");
  app.add_flag("--print-config", f.print_config, "Print the effective configuration and exit");

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Global seed");
  };
  auto add_manifest = [&](CLI::App* sub) {
    sub->add_option("--manifest", cfg.manifest, "Input manifest (JSON Lines)");
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--backbone", cfg.model.backbone,
                    "vgg16, vgg19, resnet50, densenet201, inception_v3, inception_resnet_v2");
    sub->add_option("--mode", cfg.model.mode, "feature_extract or fine_tune");
    sub->add_option("--policy", cfg.model.policy,
                    "Fine-tune policy: none, last_block, last_n_layers:N, all");
    sub->add_option("--init", f.init, "pretrained (default) or random");
    sub->add_option("--weights", cfg.model.weights, "Pretrained backbone weights (.safetensors)");
    sub->add_option("--init-seed", cfg.model.init_seed, "Seed for random backbone initialization");
  };

  auto* demo = app.add_subcommand("demo", "Write the synthetic two-class demo corpus");
  demo->add_option("--out", f.demo_out, "Output directory");
  demo->add_option("--count", f.demo_count, "Number of sheets")->check(CLI::PositiveNumber);
  demo->add_option("--size", f.demo_size, "Sheet size WxH");
  add_seed(demo);

  auto* ingest = app.add_subcommand("ingest", "Scan a labeled image tree, split and fold it");
  ingest->add_option("--root", f.root, "Dataset root (default $ECGCLS_DATA_ROOT)");
  ingest->add_option("--labels", cfg.ingest.labels, "Directory-to-label rule, e.g. covid=COVID,normal=NON_COVID");
  ingest->add_option("--ratios", f.ratios, "train,test,val fractions (default 0.7,0.2,0.1)");
  ingest->add_option("--k", cfg.ingest.k, "Cross-validation folds over TRAIN");
  ingest->add_option("--out", f.out, "Output manifest");
  add_seed(ingest);

  auto* pre = app.add_subcommand("preprocess", "Crop, remove gridlines and resize");
  add_manifest(pre);
  pre->add_option("--out-dir", f.out_dir, "Directory for cleaned PNGs and manifest.jsonl");
  pre->add_option("--out", f.out, "Output manifest (default OUT_DIR/manifest.jsonl)");
  pre->add_option("--crop", f.crop, "Frame rectangle x,y,w,h");
  pre->add_option("--threshold", cfg.preprocess.density_threshold, "Density threshold");
  pre->add_option("--target", f.target, "Output size WxH (default 987x987)");
  pre->add_option("--interpolation", f.interpolation, "bilinear or nearest");
  pre->add_option("--normalize", f.normalize, "none or unit_range");
  pre->add_option("--density", f.density, "luminance or red_channel");

  auto* aug = app.add_subcommand("augment", "Add augmented copies of TRAIN images");
  add_manifest(aug);
  aug->add_option("--out-dir", f.out_dir, "Directory for augmented PNGs and manifest.jsonl");
  aug->add_option("--out", f.out, "Output manifest (default OUT_DIR/manifest.jsonl)");
  aug->add_option("--copies", cfg.augment.copies_per_image, "Copies per TRAIN image");
  aug->add_option("--brightness", f.brightness, "Additive brightness range lo:hi");
  aug->add_option("--zoom", f.zoom, "Zoom range lo:hi");
  aug->add_flag("--hflip", cfg.augment.mirror_horizontal, "Random horizontal mirroring");
  aug->add_flag("--vflip", cfg.augment.mirror_vertical, "Random vertical mirroring");
  aug->add_option("--seed", cfg.augment.seed, "Augmentation seed");

  auto* tr = app.add_subcommand("train", "Train a model and save a checkpoint");
  add_manifest(tr);
  add_model(tr);
  add_seed(tr);
  tr->add_option("--epochs", cfg.train.epochs);
  tr->add_option("--batch", cfg.train.batch_size);
  tr->add_option("--dropout", cfg.train.dropout);
  tr->add_option("--neurons", cfg.train.neurons);
  tr->add_option("--lr", cfg.train.learning_rate);
  tr->add_option("--checkpoint", f.checkpoint, "Checkpoint directory");
  tr->add_flag("--json", f.json, "Print the training history as JSON");

  auto* gs = app.add_subcommand("gridsearch", "Exhaustive k-fold grid search");
  gs->require_subcommand(0, 1);
  add_manifest(gs);
  add_model(gs);
  add_seed(gs);
  gs->add_option("--epochs", f.grid_epochs)->delimiter(',');
  gs->add_option("--batch", f.grid_batch)->delimiter(',');
  gs->add_option("--dropout", f.grid_dropout)->delimiter(',');
  gs->add_option("--neurons", f.grid_neurons)->delimiter(',');
  gs->add_option("--lr", f.grid_lr)->delimiter(',');
  auto* k_opt = gs->add_option("--k", cfg.search.k, "Folds (default: the manifest's)");
  gs->add_option("--workers", cfg.search.workers)->check(CLI::PositiveNumber);
  gs->add_option("--store", f.store, "Append-only trial store (JSON Lines)");
  gs->add_flag("--json", f.json, "Print results as JSON");
  auto* gs_report = gs->add_subcommand("report", "Print a stored search as a table");
  gs_report->add_option("--store", f.store, "Trial store")->required();
  gs_report->add_flag("--json", f.json, "Print results as JSON");

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on the TEST split");
  add_manifest(ev);
  ev->add_option("--checkpoint", f.checkpoint, "Checkpoint directory");
  ev->add_option("--report", f.report, "Output report JSON");
  ev->add_option("--threshold", cfg.threshold, "Decision threshold");
  ev->add_flag("--json", f.json, "Print the report as JSON");

  auto* cmp = app.add_subcommand("compare", "Rank evaluation reports and emit plot data");
  cmp->alias("report");
  cmp->add_option("--reports", f.reports, "Report JSON files")->expected(1, -1);
  cmp->add_option("--out", f.out, "Comparison CSV (plus .json and .png siblings)");
  cmp->add_flag("--json", f.json, "Print plot data as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    configure_logging(cfg.log_level);
    if (!f.ratios.empty()) cfg.ingest.ratios = parse_ratios(f.ratios);
    if (!f.crop.empty()) cfg.preprocess.crop_rect = parse_rect(f.crop);
    if (!f.target.empty()) cfg.preprocess.target = parse_size(f.target);
    if (!f.interpolation.empty() || !f.normalize.empty() || !f.density.empty()) {
      // Round-trip through the config parser for enum names.
      std::string yaml = "preprocess:\n";
      if (!f.interpolation.empty()) yaml += "  interpolation: " + f.interpolation + "\n";
      if (!f.normalize.empty()) yaml += "  normalize: " + f.normalize + "\n";
      if (!f.density.empty()) yaml += "  density: " + f.density + "\n";
      const auto parsed = parse_config(yaml).preprocess;
      if (!f.interpolation.empty()) cfg.preprocess.interpolation = parsed.interpolation;
      if (!f.normalize.empty()) cfg.preprocess.normalize = parsed.normalize;
      if (!f.density.empty()) cfg.preprocess.density_mode = parsed.density_mode;
    }
    if (!f.brightness.empty()) cfg.augment.brightness = parse_range(f.brightness);
    if (!f.zoom.empty()) cfg.augment.zoom = parse_range(f.zoom);
    if (!f.init.empty()) {
      if (f.init != "pretrained" && f.init != "random") {
        throw UsageError("--init must be pretrained or random");
      }
      cfg.model.pretrained = f.init == "pretrained";
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  if (f.print_config) {
    std::cout << config_to_yaml(cfg);
    return 0;
  }

  try {
    if (demo->parsed()) return run_demo(cfg, f);
    if (ingest->parsed()) return run_ingest(cfg, f);
    if (pre->parsed()) return run_preprocess(cfg, f);
    if (aug->parsed()) return run_augment(cfg, f);
    if (tr->parsed()) return run_train(cfg, f);
    if (gs_report->parsed()) return run_gridsearch_report(f);
    if (gs->parsed()) return run_gridsearch(cfg, f, k_opt->count() > 0);
    if (ev->parsed()) return run_evaluate(cfg, f);
    if (cmp->parsed()) return run_compare(f);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const Error& e) {
    // Config file problems surface before any subcommand runs.
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
}
