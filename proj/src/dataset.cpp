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

#include "ecgcls/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ecgcls/error.hpp"
#include "ecgcls/hash.hpp"
#include "ecgcls/image.hpp"
#include "ecgcls/random.hpp"
#include "ecgcls/version.hpp"
#include "json.hpp"

namespace ecgcls {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

bool is_image_file(const fs::path& p) {
  const std::string ext = upper(p.extension().string());
  return ext == ".PNG" || ext == ".JPG" || ext == ".JPEG";
}

}  // namespace

std::string_view to_string(Label label) {
  return label == Label::Covid ? "COVID" : "NON_COVID";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "TRAIN";
    case Split::Test: return "TEST";
    case Split::Val: return "VAL";
    case Split::Unassigned: return "UNASSIGNED";
  }
  return "UNASSIGNED";
}

Label parse_label(std::string_view text) {
  const std::string u = upper(trim(text));
  if (u == "COVID") return Label::Covid;
  if (u == "NON_COVID") return Label::NonCovid;
  throw Error(Errc::ParseError, "unknown label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  const std::string u = upper(trim(text));
  if (u == "TRAIN") return Split::Train;
  if (u == "TEST") return Split::Test;
  if (u == "VAL") return Split::Val;
  if (u == "UNASSIGNED") return Split::Unassigned;
  throw Error(Errc::ParseError, "unknown split '" + std::string(text) + "'");
}

void SplitRatios::validate() const {
  for (double r : {train, test, val}) {
    if (!(r >= 0.0) || !std::isfinite(r)) {
      throw Error(Errc::RatioInvalid, "split fractions must be >= 0");
    }
  }
  if (std::abs(train + test + val - 1.0) > 1e-9) {
    throw Error(Errc::RatioInvalid, "split fractions must sum to 1");
  }
}

std::map<Label, std::size_t> Manifest::class_counts() const {
  std::map<Label, std::size_t> counts{{Label::Covid, 0}, {Label::NonCovid, 0}};
  for (const auto& r : records) ++counts[r.label];
  return counts;
}

std::size_t Manifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(),
      [split](const ImageRecord& r) { return r.split == split; }));
}

bool Manifest::is_split() const {
  return !records.empty() &&
         std::none_of(records.begin(), records.end(), [](const ImageRecord& r) {
           return r.split == Split::Unassigned;
         });
}

LabelRule default_label_rule() {
  return {{"COVID", Label::Covid}, {"Normal", Label::NonCovid}};
}

LabelRule parse_label_rule(std::string_view spec) {
  LabelRule rule;
  std::stringstream ss{std::string(spec)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::ParseError, "label rule entry '" + item + "' lacks '='");
    }
    const std::string dir = trim(std::string_view(item).substr(0, eq));
    const std::string value = upper(trim(std::string_view(item).substr(eq + 1)));
    if (dir.empty()) throw Error(Errc::ParseError, "empty directory in label rule");
    if (value == "SKIP") {
      rule[dir] = std::nullopt;
    } else {
      rule[dir] = parse_label(value);
    }
  }
  if (rule.empty()) throw Error(Errc::ParseError, "empty label rule");
  return rule;
}

Manifest ingest_dataset(const fs::path& root, const LabelRule& rule) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(Errc::MissingRoot, root.string() + " is not a directory");
  }
  std::map<std::string, std::optional<Label>> by_upper;
  for (const auto& [dir, label] : rule) by_upper[upper(dir)] = label;

  Manifest manifest;
  manifest.source_root = fs::weakly_canonical(root);

  std::vector<std::pair<fs::path, Label>> candidates;
  for (const auto& entry : fs::directory_iterator(manifest.source_root)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    auto it = by_upper.find(upper(name));
    if (it == by_upper.end()) {
      manifest.warnings.push_back("skipping unmapped directory " + name);
      continue;
    }
    if (!it->second) continue;
    for (const auto& file : fs::recursive_directory_iterator(entry.path())) {
      if (file.is_regular_file() && is_image_file(file.path())) {
        candidates.emplace_back(file.path(), *it->second);
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const auto& a, const auto& b) {
              return a.first.generic_string() < b.first.generic_string();
            });

  for (const auto& [path, label] : candidates) {
    ImageRecord rec;
    rec.id = fs::relative(path, manifest.source_root).generic_string();
    rec.path = path;
    rec.label = label;
    try {
      const Size size = probe_image_size(path);
      rec.width = size.width;
      rec.height = size.height;
    } catch (const Error& e) {
      manifest.warnings.push_back(std::string("unreadable image: ") + e.what());
      continue;
    }
    manifest.records.push_back(std::move(rec));
  }
  if (manifest.records.empty()) {
    throw Error(Errc::NoLabeledImages,
                "no readable images under labeled directories of " + root.string());
  }
  return manifest;
}

namespace {

// Quota with products that should be integral snapped (0.7 * 10 etc).
double quota(double ratio, std::size_t n) {
  const double q = ratio * static_cast<double>(n);
  const double r = std::round(q);
  return std::abs(q - r) < 1e-9 ? r : q;
}

}  // namespace

std::array<std::size_t, 3> allocate_largest_remainder(std::size_t n,
                                                      const SplitRatios& ratios) {
  ratios.validate();
  const std::array<double, 3> r = {ratios.train, ratios.test, ratios.val};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double q = quota(r[s], n);
    counts[s] = static_cast<std::size_t>(std::floor(q));
    rem[s] = q - std::floor(q);
    assigned += counts[s];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % 3]];
  return counts;
}

Manifest assign_splits(const Manifest& manifest, const SplitRatios& ratios,
                       std::uint64_t seed) {
  ratios.validate();
  for (const auto& r : manifest.records) {
    if (r.split != Split::Unassigned) {
      throw Error(Errc::AlreadySplit, "record " + r.id + " already has a split");
    }
  }
  const std::array<double, 3> r = {ratios.train, ratios.test, ratios.val};
  const auto global = allocate_largest_remainder(manifest.records.size(), ratios);

  struct ClassAlloc {
    Label label;
    std::vector<std::size_t> members;
    std::array<std::size_t, 3> floors{};
    std::array<double, 3> rem{};
    int leftover = 0;
  };
  std::vector<ClassAlloc> classes;
  for (Label label : kLabels) {
    ClassAlloc c{label, {}, {}, {}, 0};
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      if (manifest.records[i].label == label) c.members.push_back(i);
    }
    std::size_t sum = 0;
    for (int s = 0; s < 3; ++s) {
      const double q = quota(r[s], c.members.size());
      c.floors[s] = static_cast<std::size_t>(std::floor(q));
      c.rem[s] = q - std::floor(q);
      sum += c.floors[s];
    }
    c.leftover = static_cast<int>(c.members.size() - sum);
    classes.push_back(std::move(c));
  }

  // Each class hands its leftover records to distinct splits; pick the
  // combination that reproduces the global allocation and maximizes the
  // total fractional remainder (first in enumeration order on ties).
  std::array<long, 3> deficit{};
  for (int s = 0; s < 3; ++s) {
    long used = 0;
    for (const auto& c : classes) used += static_cast<long>(c.floors[s]);
    deficit[s] = static_cast<long>(global[s]) - used;
  }
  auto masks_for = [](int leftover) {
    std::vector<int> masks;
    for (int m = 0; m < 8; ++m) {
      if (std::popcount(static_cast<unsigned>(m)) == leftover) masks.push_back(m);
    }
    return masks;
  };
  const auto masks0 = masks_for(classes[0].leftover);
  const auto masks1 = masks_for(classes[1].leftover);
  int best0 = -1, best1 = -1;
  double best_score = -1.0;
  for (int m0 : masks0) {
    for (int m1 : masks1) {
      bool ok = true;
      double score = 0.0;
      for (int s = 0; s < 3 && ok; ++s) {
        const long extra = ((m0 >> s) & 1) + ((m1 >> s) & 1);
        ok = extra == deficit[s];
        score += ((m0 >> s) & 1) * classes[0].rem[s] + ((m1 >> s) & 1) * classes[1].rem[s];
      }
      if (ok && score > best_score + 1e-12) {
        best_score = score;
        best0 = m0;
        best1 = m1;
      }
    }
  }
  if (best0 < 0) {
    // Unreachable for two classes; fall back to per-class largest remainder.
    for (auto& c : classes) {
      auto counts = allocate_largest_remainder(c.members.size(), ratios);
      for (int s = 0; s < 3; ++s) c.floors[s] = counts[s];
      c.leftover = 0;
    }
    best0 = best1 = 0;
  }
  const std::array<int, 2> chosen = {best0, best1};

  Manifest out = manifest;
  out.seed = seed;
  out.ratios = ratios;
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    auto& c = classes[ci];
    std::array<std::size_t, 3> counts = c.floors;
    for (int s = 0; s < 3; ++s) counts[s] += (chosen[ci] >> s) & 1;
    Rng rng(derive_seed(seed, std::string("split:") + std::string(to_string(c.label))));
    rng.shuffle(std::span<std::size_t>(c.members));
    std::size_t pos = 0;
    const std::array<Split, 3> splits = {Split::Train, Split::Test, Split::Val};
    for (int s = 0; s < 3; ++s) {
      for (std::size_t j = 0; j < counts[s]; ++j) {
        out.records[c.members[pos++]].split = splits[s];
      }
    }
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(k, 0)), 0);
  for (const auto& [id, f] : fold_of) ++sizes[static_cast<std::size_t>(f)];
  return sizes;
}

FoldAssignment kfold_partition(const Manifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::ConfigInvalid, "k must be at least 2");
  if (!manifest.is_split()) throw Error(Errc::NotSplit, "manifest has no split assignment");

  FoldAssignment folds;
  folds.k = k;
  std::vector<std::string> order;
  for (Label label : kLabels) {
    std::vector<std::string> ids;
    for (const auto& r : manifest.records) {
      if (r.split == Split::Train && !r.augmented() && r.label == label) ids.push_back(r.id);
    }
    Rng rng(derive_seed(seed, std::string("fold:") + std::string(to_string(label))));
    rng.shuffle(std::span<std::string>(ids));
    order.insert(order.end(), ids.begin(), ids.end());
  }
  if (order.size() < static_cast<std::size_t>(k)) {
    throw Error(Errc::KTooLarge, "k=" + std::to_string(k) + " exceeds the " +
                                     std::to_string(order.size()) + " TRAIN records");
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    folds.fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return folds;
}

Manifest apply_folds(const Manifest& manifest, const FoldAssignment& folds) {
  Manifest out = manifest;
  out.k = folds.k;
  for (auto& r : out.records) {
    r.fold.reset();
    if (r.split != Split::Train) continue;
    const std::string& key = r.augmented() ? *r.parent : r.id;
    if (auto it = folds.fold_of.find(key); it != folds.fold_of.end()) r.fold = it->second;
  }
  return out;
}

namespace {

json header_json(const Manifest& m) {
  json h;
  h["seed"] = m.seed;
  h["source_root"] = m.source_root.generic_string();
  h["k"] = m.k ? json(*m.k) : json(nullptr);
  if (m.ratios) {
    h["ratios"] = {{"train", m.ratios->train}, {"test", m.ratios->test}, {"val", m.ratios->val}};
  } else {
    h["ratios"] = nullptr;
  }
  return h;
}

json record_json(const ImageRecord& r) {
  json j;
  j["id"] = r.id;
  j["path"] = r.path.generic_string();
  j["label"] = to_string(r.label);
  j["width"] = r.width;
  j["height"] = r.height;
  j["split"] = to_string(r.split);
  j["fold"] = r.fold ? json(*r.fold) : json(nullptr);
  if (r.parent) j["parent"] = *r.parent;
  return j;
}

}  // namespace

std::string serialize_manifest(const Manifest& manifest,
                               const ManifestProvenance& provenance) {
  json h = header_json(manifest);
  h["tool_version"] = provenance.tool_version.empty() ? std::string(kToolVersion)
                                                      : provenance.tool_version;
  if (!provenance.config_hash.empty()) h["config_hash"] = provenance.config_hash;
  h["manifest_hash"] = manifest_hash(manifest);
  std::string out = h.dump() + "\n";
  for (const auto& r : manifest.records) out += record_json(r).dump() + "\n";
  return out;
}

std::string manifest_hash(const Manifest& manifest) {
  Fnv1a h;
  h.update(header_json(manifest).dump());
  for (const auto& r : manifest.records) h.update(record_json(r).dump()).update("\n");
  return to_hex(h.digest());
}

void write_manifest(const fs::path& path, const Manifest& manifest,
                    const ManifestProvenance& provenance) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << serialize_manifest(manifest, provenance);
  if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path.string());
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      const json j = json::parse(line);
      if (lineno == 1) {
        m.seed = j.at("seed").get<std::uint64_t>();
        m.source_root = j.at("source_root").get<std::string>();
        if (!j.at("k").is_null()) m.k = j.at("k").get<int>();
        if (!j.at("ratios").is_null()) {
          const auto& r = j.at("ratios");
          m.ratios = SplitRatios{r.at("train").get<double>(), r.at("test").get<double>(),
                                 r.at("val").get<double>()};
        }
        continue;
      }
      ImageRecord r;
      r.id = j.at("id").get<std::string>();
      r.path = j.at("path").get<std::string>();
      r.label = parse_label(j.at("label").get<std::string>());
      r.width = j.at("width").get<int>();
      r.height = j.at("height").get<int>();
      r.split = parse_split(j.at("split").get<std::string>());
      if (!j.at("fold").is_null()) r.fold = j.at("fold").get<int>();
      if (j.contains("parent")) r.parent = j.at("parent").get<std::string>();
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError,
                path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
  if (lineno == 0) throw Error(Errc::ParseError, path.string() + " is empty");
  return m;
}

}  // namespace ecgcls
