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

#include "ecgcls/hypersearch.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "ecgcls/error.hpp"
#include "ecgcls/hash.hpp"
#include "json.hpp"

namespace ecgcls {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <typename T>
bool has_duplicates(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) != v.end();
}

}  // namespace

void HyperParams::validate() const {
  if (epochs <= 0 || batch_size <= 0 || neurons <= 0) {
    throw Error(Errc::ConfigInvalid, "epochs, batch size and neurons must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw Error(Errc::ConfigInvalid, "dropout must lie in [0, 1)");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(Errc::ConfigInvalid, "learning rate must be positive");
  }
}

std::string HyperParams::canonical() const {
  return "epochs=" + std::to_string(epochs) + ";batch_size=" + std::to_string(batch_size) +
         ";dropout=" + shortest(dropout) + ";neurons=" + std::to_string(neurons) +
         ";learning_rate=" + shortest(learning_rate);
}

std::string HyperParams::key() const { return to_hex(fnv1a(canonical())); }

std::size_t HyperGrid::size() const {
  return epochs_set.size() * batch_set.size() * dropout_set.size() * neurons_set.size() *
         lr_set.size();
}

void HyperGrid::validate() const {
  if (size() == 0) throw Error(Errc::EmptyGrid, "every hyperparameter set needs a value");
  if (has_duplicates(epochs_set) || has_duplicates(batch_set) || has_duplicates(dropout_set) ||
      has_duplicates(neurons_set) || has_duplicates(lr_set)) {
    throw Error(Errc::ConfigInvalid, "hyperparameter sets must not repeat values");
  }
  for (int e : epochs_set)
    for (int b : batch_set)
      for (double d : dropout_set)
        for (int n : neurons_set)
          for (double lr : lr_set) HyperParams{e, b, d, n, lr}.validate();
}

HyperGrid HyperGrid::reference() {
  return HyperGrid{{25, 50}, {16, 32, 64}, {0.1, 0.2, 0.5}, {16, 32, 64}, {0.001}};
}

std::vector<HyperParams> enumerate_grid(const HyperGrid& grid) {
  grid.validate();
  std::vector<HyperParams> out;
  out.reserve(grid.size());
  for (int e : grid.epochs_set)
    for (int b : grid.batch_set)
      for (double d : grid.dropout_set)
        for (int n : grid.neurons_set)
          for (double lr : grid.lr_set) out.push_back({e, b, d, n, lr});
  return out;
}

std::uint64_t trial_seed(std::uint64_t seed, const HyperParams& params) {
  return derive_seed(seed, params.canonical());
}

std::vector<FoldSplit> fold_splits(const Manifest& manifest) {
  if (!manifest.k) throw Error(Errc::NotSplit, "manifest has no fold assignment");
  const int k = *manifest.k;
  std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
  for (const auto& r : manifest.records) {
    if (r.split != Split::Train) continue;
    if (!r.fold) throw Error(Errc::NotSplit, "TRAIN record " + r.id + " has no fold");
    for (int f = 0; f < k; ++f) {
      if (*r.fold == f) {
        if (!r.augmented()) folds[static_cast<std::size_t>(f)].val.push_back(r);
      } else {
        folds[static_cast<std::size_t>(f)].train.push_back(r);
      }
    }
  }
  for (const auto& fold : folds) {
    std::set<std::string> held_out;
    for (const auto& r : fold.val) held_out.insert(r.id);
    for (const auto& r : fold.train) {
      if (held_out.count(r.id) || (r.parent && held_out.count(*r.parent))) {
        throw Error(Errc::DataLeak, "record " + r.id + " leaks into its validation fold");
      }
    }
  }
  return folds;
}

namespace {

json params_json(const HyperParams& p) {
  return {{"epochs", p.epochs},
          {"batch_size", p.batch_size},
          {"dropout", p.dropout},
          {"neurons", p.neurons},
          {"learning_rate", p.learning_rate}};
}

HyperParams params_from_json(const json& j) {
  return {j.at("epochs").get<int>(), j.at("batch_size").get<int>(), j.at("dropout").get<double>(),
          j.at("neurons").get<int>(), j.at("learning_rate").get<double>()};
}

json context_json(const SearchContext& c) {
  return {{"backbone", c.backbone}, {"k", c.k}, {"seed", c.seed},
          {"manifest_hash", c.manifest_hash}};
}

json trial_json(const TrialResult& r) {
  json j;
  j["key"] = r.params.key();
  j["index"] = r.index;
  j["params"] = params_json(r.params);
  j["status"] = r.status == TrialStatus::Ok ? "ok" : "failed";
  j["fold_accuracies"] = r.fold_accuracies;
  j["fold_errors"] = r.fold_errors;
  j["mean_accuracy"] = r.mean_accuracy;
  j["mean_error"] = r.mean_error;
  j["wall_time"] = r.wall_time;
  j["trial_seed"] = r.seed;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

TrialResult trial_from_json(const json& j) {
  TrialResult r;
  r.params = params_from_json(j.at("params"));
  r.index = j.at("index").get<std::size_t>();
  r.status = j.at("status").get<std::string>() == "ok" ? TrialStatus::Ok : TrialStatus::Failed;
  r.fold_accuracies = j.at("fold_accuracies").get<std::vector<double>>();
  r.fold_errors = j.at("fold_errors").get<std::vector<double>>();
  r.mean_accuracy = j.at("mean_accuracy").get<double>();
  r.mean_error = j.at("mean_error").get<double>();
  r.wall_time = j.at("wall_time").get<double>();
  r.seed = j.at("trial_seed").get<std::uint64_t>();
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  return r;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TrialStore::TrialStore(fs::path path) : path_(std::move(path)) {}

namespace {

template <typename Fn>
void for_each_store_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) continue;
    try {
      fn(j);
    } catch (const json::exception&) {
      // Malformed but parseable line; skip like a torn write.
    }
  }
}

}  // namespace

std::vector<TrialResult> TrialStore::load(const SearchContext& context) const {
  const json want = context_json(context);
  std::map<std::string, TrialResult> by_key;
  for_each_store_line(path_, [&](const json& j) {
    if (j.at("context") != want) return;
    by_key[j.at("key").get<std::string>()] = trial_from_json(j);
  });
  std::vector<TrialResult> out;
  for (auto& [key, r] : by_key) out.push_back(std::move(r));
  std::sort(out.begin(), out.end(),
            [](const TrialResult& a, const TrialResult& b) { return a.index < b.index; });
  return out;
}

std::vector<TrialResult> TrialStore::load_all() const {
  std::map<std::pair<std::string, std::string>, TrialResult> by_key;
  for_each_store_line(path_, [&](const json& j) {
    by_key[{j.at("context").dump(), j.at("key").get<std::string>()}] = trial_from_json(j);
  });
  std::vector<TrialResult> out;
  for (auto& [key, r] : by_key) out.push_back(std::move(r));
  std::stable_sort(out.begin(), out.end(),
                   [](const TrialResult& a, const TrialResult& b) { return a.index < b.index; });
  return out;
}

void TrialStore::append(const TrialResult& result, const SearchContext& context) {
  std::error_code ec;
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path(), ec);
  bool needs_newline = false;
  {
    std::ifstream in(path_, std::ios::binary | std::ios::ate);
    if (in && in.tellg() > 0) {
      in.seekg(-1, std::ios::end);
      needs_newline = in.get() != '\n';
    }
  }
  json j = trial_json(result);
  j["context"] = context_json(context);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw Error(Errc::IoError, "cannot append to " + path_.string());
  if (needs_newline) out << '\n';
  out << j.dump() << '\n';
  out.flush();
  if (!out) throw Error(Errc::IoError, "write failed for " + path_.string());
}

GridSearchOutcome run_grid_search(const HyperGrid& grid, std::string_view backbone,
                                  const Manifest& manifest, int k, std::uint64_t seed,
                                  const Trainer& trainer, const SearchOptions& options) {
  const auto points = enumerate_grid(grid);
  Manifest folded = manifest;
  if (!folded.k) {
    folded = apply_folds(manifest, kfold_partition(manifest, k, seed));
  } else if (*folded.k != k) {
    throw Error(Errc::ConfigInvalid, "manifest folds use k=" + std::to_string(*folded.k) +
                                         " but the search asked for k=" + std::to_string(k));
  }
  const auto folds = fold_splits(folded);

  const SearchContext context{std::string(backbone), k, seed, manifest_hash(folded)};
  std::optional<TrialStore> store;
  std::map<std::string, TrialResult> done;
  if (options.store) {
    store.emplace(*options.store);
    for (auto& r : store->load(context)) done[r.params.key()] = std::move(r);
  }

  GridSearchOutcome outcome;
  outcome.results.resize(points.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (auto it = done.find(points[i].key()); it != done.end()) {
      outcome.results[i] = it->second;
      outcome.results[i].index = i;
      ++outcome.resumed;
    } else {
      pending.push_back(i);
    }
  }

  std::mutex store_mutex;
  std::atomic<std::size_t> next{0};
  auto run_one = [&](std::size_t i) {
    const HyperParams& params = points[i];
    TrialResult r;
    r.params = params;
    r.index = i;
    r.seed = trial_seed(seed, params);
    const auto start = std::chrono::steady_clock::now();
    try {
      for (std::size_t f = 0; f < folds.size(); ++f) {
        const FoldMetrics m = trainer(params, folds[f].train, folds[f].val,
                                      derive_seed(r.seed, "fold" + std::to_string(f)));
        r.fold_accuracies.push_back(m.accuracy);
        r.fold_errors.push_back(m.error);
      }
      r.mean_accuracy = mean(r.fold_accuracies);
      r.mean_error = mean(r.fold_errors);
    } catch (const std::exception& e) {
      r.status = TrialStatus::Failed;
      r.error = e.what();
      r.fold_accuracies.clear();
      r.fold_errors.clear();
      r.mean_accuracy = 0.0;
      r.mean_error = 0.0;
    }
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::lock_guard lock(store_mutex);
    if (store) store->append(r, context);
    outcome.results[i] = std::move(r);
  };
  auto worker = [&] {
    for (std::size_t j = next++; j < pending.size(); j = next++) run_one(pending[j]);
  };
  const int workers = std::clamp(options.workers, 1, static_cast<int>(std::max<std::size_t>(pending.size(), 1)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  outcome.executed = pending.size();

  const TrialResult* best = nullptr;
  for (const auto& r : outcome.results) {
    if (r.status == TrialStatus::Ok && (!best || r.mean_accuracy > best->mean_accuracy)) best = &r;
  }
  if (best) outcome.best = best->params;
  return outcome;
}

std::vector<TrialResult> rank_trials(std::vector<TrialResult> results) {
  if (results.empty()) throw Error(Errc::EmptyResults, "no trials to rank");
  std::stable_sort(results.begin(), results.end(), [](const TrialResult& a, const TrialResult& b) {
    const bool a_ok = a.status == TrialStatus::Ok;
    const bool b_ok = b.status == TrialStatus::Ok;
    if (a_ok != b_ok) return a_ok;
    if (a.mean_accuracy != b.mean_accuracy) return a.mean_accuracy > b.mean_accuracy;
    if (a.mean_error != b.mean_error) return a.mean_error < b.mean_error;
    return a.index < b.index;
  });
  return results;
}

std::string format_trial_table(std::span<const TrialResult> results) {
  std::set<double> lrs;
  for (const auto& r : results) lrs.insert(r.params.learning_rate);
  const bool with_lr = lrs.size() > 1;

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Epoch", "Batch Size", "Dropout", "Layer Neurons"};
  if (with_lr) header.push_back("Learning Rate");
  header.push_back("Accuracy");
  header.push_back("Error");
  rows.push_back(header);
  auto fixed4 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
  };
  std::vector<const TrialResult*> ordered;
  for (const auto& r : results) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const TrialResult* a, const TrialResult* b) { return a->index < b->index; });
  for (const TrialResult* r : ordered) {
    std::vector<std::string> row = {std::to_string(r->params.epochs),
                                    std::to_string(r->params.batch_size),
                                    shortest(r->params.dropout), std::to_string(r->params.neurons)};
    if (with_lr) row.push_back(shortest(r->params.learning_rate));
    if (r->status == TrialStatus::Ok) {
      row.push_back(fixed4(r->mean_accuracy));
      row.push_back(fixed4(r->mean_error));
    } else {
      row.push_back("FAILED");
      row.push_back("-");
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << " | ";
      out << row[c];
      if (c + 1 < row.size()) out << std::string(widths[c] - row[c].size(), ' ');
    }
    out << '\n';
  }
  return out.str();
}

std::string trials_to_json(std::span<const TrialResult> results) {
  json arr = json::array();
  for (const auto& r : results) arr.push_back(trial_json(r));
  return arr.dump(2);
}

}  // namespace ecgcls
