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

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace ecgcls {

struct Size {
  int width = 0;
  int height = 0;

  friend bool operator==(const Size&, const Size&) = default;
};

/// Row-major, channel-interleaved image with intensities in [0, 1].
/// Channels are 1 (gray) or 3 (RGB order).
class PixelImage {
 public:
  PixelImage() = default;
  PixelImage(int width, int height, int channels, float fill = 1.0f);
  PixelImage(int width, int height, int channels, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  Size size() const { return {width_, height_}; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  float at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  /// True when every value lies in [0, 1] and the buffer matches the shape.
  bool valid() const;

  friend bool operator==(const PixelImage&, const PixelImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// Reads PNG or JPEG. Alpha is dropped, 16-bit data is rescaled, and
/// grayscale files stay single-channel. Throws Error{UnreadableImage}.
PixelImage load_image(const std::filesystem::path& path);

/// Reads only the header to obtain dimensions; throws Error{UnreadableImage}.
Size probe_image_size(const std::filesystem::path& path);

/// Writes an 8-bit PNG (values rounded to the nearest of 256 levels).
/// Parent directories are created. Throws Error{IoError}.
void save_png(const std::filesystem::path& path, const PixelImage& image);

/// Quantizes to the 8-bit grid that save_png/load_image round-trip through.
PixelImage quantize8(const PixelImage& image);

}  // namespace ecgcls
