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

#include "ecgcls/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecgcls/error.hpp"

namespace ecgcls {

void PreprocessConfig::validate() const {
  if (!(density_threshold >= 0.0 && density_threshold <= 1.0)) {
    throw Error(Errc::ConfigInvalid, "density threshold must lie in [0, 1]");
  }
  if (target.width <= 0 || target.height <= 0) {
    throw Error(Errc::BadTarget, "target size must be positive");
  }
  if (crop_rect && (crop_rect->w <= 0 || crop_rect->h <= 0)) {
    throw Error(Errc::RectOutOfBounds, "crop rectangle must have positive extent");
  }
}

PixelImage crop_frame(const PixelImage& image, const Rect& rect) {
  if (rect.w <= 0 || rect.h <= 0 || rect.x < 0 || rect.y < 0 ||
      rect.x + rect.w > image.width() || rect.y + rect.h > image.height()) {
    throw Error(Errc::RectOutOfBounds,
                "crop (" + std::to_string(rect.x) + "," + std::to_string(rect.y) + "," +
                    std::to_string(rect.w) + "," + std::to_string(rect.h) +
                    ") outside " + std::to_string(image.width()) + "x" +
                    std::to_string(image.height()));
  }
  const int c = image.channels();
  PixelImage out(rect.w, rect.h, c);
  auto dst = out.data();
  auto src = image.data();
  for (int y = 0; y < rect.h; ++y) {
    const auto* row = src.data() + (static_cast<std::size_t>(rect.y + y) * image.width() + rect.x) * c;
    std::copy(row, row + static_cast<std::size_t>(rect.w) * c,
              dst.data() + static_cast<std::size_t>(y) * rect.w * c);
  }
  return out;
}

namespace {

float pixel_density(const float* px, int channels, DensityMode mode) {
  float v;
  if (channels == 1) {
    v = px[0];
  } else if (mode == DensityMode::RedChannel) {
    v = px[0];
  } else {
    v = 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
  }
  return std::clamp(1.0f - v, 0.0f, 1.0f);
}

}  // namespace

DensityField density_map(const PixelImage& image, DensityMode mode) {
  DensityField field{image.width(), image.height(), {}};
  const int c = image.channels();
  const auto src = image.data();
  field.values.resize(static_cast<std::size_t>(image.width()) * image.height());
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    field.values[i] = pixel_density(src.data() + i * c, c, mode);
  }
  return field;
}

PixelImage remove_gridlines(const PixelImage& image, const PreprocessConfig& cfg) {
  const auto threshold = static_cast<float>(cfg.density_threshold);
  PixelImage out = image;
  const int c = image.channels();
  auto dst = out.data();
  const std::size_t n = static_cast<std::size_t>(image.width()) * image.height();
  for (std::size_t i = 0; i < n; ++i) {
    float* px = dst.data() + i * c;
    if (pixel_density(px, c, cfg.density_mode) < threshold) {
      std::fill(px, px + c, 1.0f);
    }
  }
  return out;
}

PixelImage resize(const PixelImage& image, Size target, Interpolation interpolation) {
  if (target.width <= 0 || target.height <= 0) {
    throw Error(Errc::BadTarget, "target size must be positive");
  }
  if (image.empty()) throw Error(Errc::BadTarget, "cannot resize an empty image");
  const int c = image.channels();
  const int sw = image.width();
  const int sh = image.height();
  PixelImage out(target.width, target.height, c);
  auto dst = out.data();
  const auto src = image.data();
  const double sx = static_cast<double>(sw) / target.width;
  const double sy = static_cast<double>(sh) / target.height;

  if (interpolation == Interpolation::Nearest) {
    for (int y = 0; y < target.height; ++y) {
      const int yy = std::min(static_cast<int>(std::floor((y + 0.5) * sy)), sh - 1);
      for (int x = 0; x < target.width; ++x) {
        const int xx = std::min(static_cast<int>(std::floor((x + 0.5) * sx)), sw - 1);
        const float* s = src.data() + (static_cast<std::size_t>(yy) * sw + xx) * c;
        std::copy(s, s + c, dst.data() + (static_cast<std::size_t>(y) * target.width + x) * c);
      }
    }
    return out;
  }

  for (int y = 0; y < target.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, sh - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int x = 0; x < target.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(sw - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, sw - 1);
      const float wx = static_cast<float>(fx - x0);
      float* d = dst.data() + (static_cast<std::size_t>(y) * target.width + x) * c;
      for (int ch = 0; ch < c; ++ch) {
        const float top = image.at(x0, y0, ch) + wx * (image.at(x1, y0, ch) - image.at(x0, y0, ch));
        const float bot = image.at(x0, y1, ch) + wx * (image.at(x1, y1, ch) - image.at(x0, y1, ch));
        d[ch] = std::clamp(top + wy * (bot - top), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

PixelImage normalize_intensity(const PixelImage& image, Normalize mode) {
  if (mode == Normalize::None || image.empty()) return image;
  const auto [lo_it, hi_it] = std::minmax_element(image.data().begin(), image.data().end());
  const float lo = *lo_it;
  const float hi = *hi_it;
  if (hi <= lo) return image;
  PixelImage out = image;
  for (float& v : out.data()) v = std::clamp((v - lo) / (hi - lo), 0.0f, 1.0f);
  return out;
}

PixelImage preprocess_pipeline(const PixelImage& image, const PreprocessConfig& cfg) {
  cfg.validate();
  PixelImage out = cfg.crop_rect ? crop_frame(image, *cfg.crop_rect) : image;
  out = remove_gridlines(out, cfg);
  out = resize(out, cfg.target, cfg.interpolation);
  return normalize_intensity(out, cfg.normalize);
}

}  // namespace ecgcls
