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
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ecgcls {

enum class Label { Covid, NonCovid };
enum class Split { Train, Test, Val, Unassigned };

inline constexpr std::array<Label, 2> kLabels = {Label::Covid, Label::NonCovid};

std::string_view to_string(Label label);
std::string_view to_string(Split split);
/// Accepts COVID / NON_COVID (case-insensitive). Throws Error{ParseError}.
Label parse_label(std::string_view text);
/// Accepts TRAIN / TEST / VAL / UNASSIGNED (case-insensitive).
Split parse_split(std::string_view text);

/// One labeled ECG scan.
struct ImageRecord {
  std::string id;  ///< unique within a manifest (source-relative path)
  std::filesystem::path path;
  Label label = Label::NonCovid;
  int width = 0;
  int height = 0;
  Split split = Split::Unassigned;
  std::optional<int> fold;
  std::optional<std::string> parent;  ///< set on augmented copies

  bool augmented() const { return parent.has_value(); }

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct SplitRatios {
  double train = 0.7;
  double test = 0.2;
  double val = 0.1;

  /// Throws Error{RatioInvalid} unless all fractions are >= 0 and sum to 1.
  void validate() const;

  friend bool operator==(const SplitRatios&, const SplitRatios&) = default;
};

struct Manifest {
  std::vector<ImageRecord> records;
  std::filesystem::path source_root;
  std::uint64_t seed = 0;
  std::optional<SplitRatios> ratios;
  std::optional<int> k;
  /// Files that could not be decoded during ingest. Not serialized.
  std::vector<std::string> warnings;

  std::map<Label, std::size_t> class_counts() const;
  std::size_t count(Split split) const;
  /// True when every record has a split other than Unassigned.
  bool is_split() const;
};

/// Maps an immediate subdirectory name (matched case-insensitively) to a
/// label; std::nullopt marks the directory as skipped.
using LabelRule = std::map<std::string, std::optional<Label>>;

/// {COVID -> Covid, Normal -> NonCovid}; everything else is skipped.
LabelRule default_label_rule();

/// Parses "covid=COVID,normal=NON_COVID,other=SKIP".
LabelRule parse_label_rule(std::string_view spec);

/// Scans `root` for PNG/JPEG files under labeled subdirectories (recursively)
/// and returns them ordered by path. Undecodable files are listed in
/// Manifest::warnings. Throws MissingRoot or NoLabeledImages.
Manifest ingest_dataset(const std::filesystem::path& root, const LabelRule& rule);

/// Largest-remainder allocation of n items over (train, test, val); ties
/// on the fractional part go to train, then test, then val.
std::array<std::size_t, 3> allocate_largest_remainder(std::size_t n,
                                                      const SplitRatios& ratios);

/// Stratified, seeded split assignment. Global split sizes follow
/// allocate_largest_remainder over all records; each class receives the
/// floor or ceiling of its own quota per split. Returns a new manifest.
/// Throws AlreadySplit or RatioInvalid.
Manifest assign_splits(const Manifest& manifest, const SplitRatios& ratios,
                       std::uint64_t seed);

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of;  ///< record id -> fold in [0, k)

  std::vector<std::size_t> fold_sizes() const;
};

/// Stratified k-fold partition of the original (non-augmented) TRAIN records.
/// Throws NotSplit, KTooLarge, or ConfigInvalid (k < 2).
FoldAssignment kfold_partition(const Manifest& manifest, int k,
                               std::uint64_t seed);

/// Writes fold indices into the manifest. Augmented records inherit the
/// fold of their parent; non-TRAIN records carry no fold.
Manifest apply_folds(const Manifest& manifest, const FoldAssignment& folds);

struct ManifestProvenance {
  std::string tool_version;
  std::string config_hash;
};

/// JSON Lines: one header object, then one object per record.
std::string serialize_manifest(const Manifest& manifest,
                               const ManifestProvenance& provenance = {});
void write_manifest(const std::filesystem::path& path, const Manifest& manifest,
                    const ManifestProvenance& provenance = {});
/// Throws Error{IoError} or Error{ParseError}.
Manifest read_manifest(const std::filesystem::path& path);

/// Fingerprint of the manifest content (header and records, provenance
/// excluded), as 16 hex digits.
std::string manifest_hash(const Manifest& manifest);

}  // namespace ecgcls
