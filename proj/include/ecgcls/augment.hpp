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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string_view>

#include "ecgcls/dataset.hpp"
#include "ecgcls/image.hpp"
#include "ecgcls/random.hpp"

namespace ecgcls {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  friend bool operator==(const Range&, const Range&) = default;
};

/// Parses "lo:hi" (a single number means lo == hi).
Range parse_range(std::string_view text);

struct AugmentationSpec {
  Range brightness{0.0, 0.0};  ///< additive, intensity units
  Range zoom{1.0, 1.0};        ///< scale factor, > 0
  bool mirror_horizontal = false;
  bool mirror_vertical = false;
  int copies_per_image = 3;
  std::uint64_t seed = 0;

  /// Throws Error{SpecInvalid}.
  void validate() const;
};

/// Concrete transform parameters for one augmented copy.
struct AugmentDraw {
  double brightness = 0.0;
  double zoom = 1.0;
  bool flip_horizontal = false;
  bool flip_vertical = false;
};

/// Brightness and zoom are uniform over their ranges; each enabled mirror
/// fires with probability 1/2.
AugmentDraw draw_augmentation(const AugmentationSpec& spec, Rng& rng);

/// zoom (center-anchored) -> mirrors -> brightness, clamped to [0, 1].
/// zoom > 1 crops the center and scales it back up; zoom < 1 scales down and
/// pads with white. Output dimensions always equal input dimensions.
PixelImage apply_augmentation(const PixelImage& image, const AugmentDraw& draw);

PixelImage augment_image(const PixelImage& image, const AugmentationSpec& spec, Rng& rng);

/// Per-record generator derived from (spec seed, record id), so batch
/// augmentation has no ordering dependence.
Rng record_rng(std::uint64_t seed, std::string_view record_id);

using ImageLoader = std::function<PixelImage(const ImageRecord&)>;
/// Persists an augmented image for `child` and returns the stored path.
using ImageSink =
    std::function<std::filesystem::path(const ImageRecord& child, const PixelImage&)>;

ImageLoader disk_loader();
/// Writes `<dir>/<child id>.png`.
ImageSink png_sink(const std::filesystem::path& dir);

/// Appends copies_per_image augmented records after each TRAIN record's
/// originals (ids `<parent>__aug<i>`), carrying the parent's label and fold.
/// TEST and VAL records are untouched. Throws NotSplit or SpecInvalid.
Manifest augment_split(const Manifest& manifest, const AugmentationSpec& spec,
                       const ImageLoader& load, const ImageSink& store);

}  // namespace ecgcls
