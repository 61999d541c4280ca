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

#include <optional>
#include <vector>

#include "ecgcls/image.hpp"

namespace ecgcls {

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  friend bool operator==(const Rect&, const Rect&) = default;
};

enum class Interpolation { Nearest, Bilinear };
enum class Normalize { None, UnitRange };

/// How ink density is derived from pixel values.
/// Luminance: 1 - Rec.601 luma (or 1 - gray). RedChannel: 1 - R, which maps
/// red/pink gridlines to ~0 while dark traces stay near 1.
enum class DensityMode { Luminance, RedChannel };

struct PreprocessConfig {
  std::optional<Rect> crop_rect;
  double density_threshold = 0.5;
  Size target{987, 987};
  Interpolation interpolation = Interpolation::Bilinear;
  Normalize normalize = Normalize::None;
  DensityMode density_mode = DensityMode::Luminance;

  /// Throws Error{ConfigInvalid} (threshold) or Error{BadTarget}.
  void validate() const;
};

/// Single-channel per-pixel ink density in [0, 1].
struct DensityField {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  float at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

/// Exact sub-image, no resampling. Throws Error{RectOutOfBounds}.
PixelImage crop_frame(const PixelImage& image, const Rect& rect);

DensityField density_map(const PixelImage& image,
                         DensityMode mode = DensityMode::Luminance);

/// Pixels with density below the threshold become white; others are kept
/// unchanged. Idempotent for a fixed config.
PixelImage remove_gridlines(const PixelImage& image, const PreprocessConfig& cfg);

/// Bilinear uses half-pixel centers with edge clamping. Throws Error{BadTarget}.
PixelImage resize(const PixelImage& image, Size target, Interpolation interpolation);

/// UnitRange stretches [min, max] to [0, 1]; a constant image is unchanged.
PixelImage normalize_intensity(const PixelImage& image, Normalize mode);

/// crop (if configured) -> remove_gridlines -> resize -> normalize.
PixelImage preprocess_pipeline(const PixelImage& image, const PreprocessConfig& cfg);

}  // namespace ecgcls
