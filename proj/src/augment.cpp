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

#include "ecgcls/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecgcls/error.hpp"
#include "ecgcls/hash.hpp"
#include "ecgcls/preprocess.hpp"

namespace ecgcls {

Range parse_range(std::string_view text) {
  const std::string s(text);
  try {
    const auto colon = s.find(':', 1);
    if (colon == std::string::npos) {
      const double v = std::stod(s);
      return {v, v};
    }
    return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(Errc::ParseError, "bad range '" + s + "', expected lo:hi");
  }
}

void AugmentationSpec::validate() const {
  if (!(zoom.lo > 0.0) || zoom.hi < zoom.lo) {
    throw Error(Errc::SpecInvalid, "zoom range must be positive with lo <= hi");
  }
  if (brightness.lo < -1.0 || brightness.hi > 1.0 || brightness.hi < brightness.lo) {
    throw Error(Errc::SpecInvalid, "brightness range must lie within [-1, 1]");
  }
  if (copies_per_image < 0) {
    throw Error(Errc::SpecInvalid, "copies_per_image must be >= 0");
  }
}

AugmentDraw draw_augmentation(const AugmentationSpec& spec, Rng& rng) {
  AugmentDraw d;
  d.brightness = rng.uniform(spec.brightness.lo, spec.brightness.hi);
  d.zoom = rng.uniform(spec.zoom.lo, spec.zoom.hi);
  // Coin flips are drawn unconditionally so that toggling a mirror does not
  // shift the remaining draws.
  const bool h = rng.bernoulli(0.5);
  const bool v = rng.bernoulli(0.5);
  d.flip_horizontal = spec.mirror_horizontal && h;
  d.flip_vertical = spec.mirror_vertical && v;
  return d;
}

namespace {

PixelImage zoom_center(const PixelImage& image, double zoom) {
  const int w = image.width();
  const int h = image.height();
  if (zoom > 1.0) {
    const int cw = std::clamp(static_cast<int>(std::lround(w / zoom)), 1, w);
    const int ch = std::clamp(static_cast<int>(std::lround(h / zoom)), 1, h);
    const Rect r{(w - cw) / 2, (h - ch) / 2, cw, ch};
    return resize(crop_frame(image, r), image.size(), Interpolation::Bilinear);
  }
  const int sw = std::clamp(static_cast<int>(std::lround(w * zoom)), 1, w);
  const int sh = std::clamp(static_cast<int>(std::lround(h * zoom)), 1, h);
  const PixelImage small = resize(image, {sw, sh}, Interpolation::Bilinear);
  PixelImage out(w, h, image.channels(), 1.0f);
  const int ox = (w - sw) / 2;
  const int oy = (h - sh) / 2;
  for (int y = 0; y < sh; ++y) {
    for (int x = 0; x < sw; ++x) {
      for (int c = 0; c < image.channels(); ++c) out.at(ox + x, oy + y, c) = small.at(x, y, c);
    }
  }
  return out;
}

}  // namespace

PixelImage apply_augmentation(const PixelImage& image, const AugmentDraw& draw) {
  PixelImage out = draw.zoom == 1.0 ? image : zoom_center(image, draw.zoom);
  const int w = out.width();
  const int h = out.height();
  const int c = out.channels();
  if (draw.flip_horizontal) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w / 2; ++x) {
        for (int ch = 0; ch < c; ++ch) std::swap(out.at(x, y, ch), out.at(w - 1 - x, y, ch));
      }
    }
  }
  if (draw.flip_vertical) {
    for (int y = 0; y < h / 2; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < c; ++ch) std::swap(out.at(x, y, ch), out.at(x, h - 1 - y, ch));
      }
    }
  }
  if (draw.brightness != 0.0) {
    const auto delta = static_cast<float>(draw.brightness);
    for (float& v : out.data()) v = std::clamp(v + delta, 0.0f, 1.0f);
  }
  return out;
}

PixelImage augment_image(const PixelImage& image, const AugmentationSpec& spec, Rng& rng) {
  spec.validate();
  return apply_augmentation(image, draw_augmentation(spec, rng));
}

Rng record_rng(std::uint64_t seed, std::string_view record_id) {
  return Rng(derive_seed(seed, record_id));
}

ImageLoader disk_loader() {
  return [](const ImageRecord& r) { return load_image(r.path); };
}

ImageSink png_sink(const std::filesystem::path& dir) {
  return [dir](const ImageRecord& child, const PixelImage& image) {
    const auto path = dir / (child.id + ".png");
    save_png(path, image);
    return path;
  };
}

Manifest augment_split(const Manifest& manifest, const AugmentationSpec& spec,
                       const ImageLoader& load, const ImageSink& store) {
  spec.validate();
  if (!manifest.is_split()) throw Error(Errc::NotSplit, "augmentation needs split records");
  Manifest out = manifest;
  if (spec.copies_per_image == 0) return out;
  out.records.clear();
  for (const auto& rec : manifest.records) {
    out.records.push_back(rec);
    if (rec.split != Split::Train || rec.augmented()) continue;
    const PixelImage parent = load(rec);
    Rng rng = record_rng(spec.seed, rec.id);
    for (int i = 0; i < spec.copies_per_image; ++i) {
      ImageRecord child = rec;
      child.id = rec.id + "__aug" + std::to_string(i);
      child.parent = rec.id;
      const PixelImage img = augment_image(parent, spec, rng);
      child.width = img.width();
      child.height = img.height();
      child.path = store(child, img);
      out.records.push_back(std::move(child));
    }
  }
  return out;
}

}  // namespace ecgcls
