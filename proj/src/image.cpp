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

#include "ecgcls/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ecgcls/error.hpp"

namespace ecgcls {

PixelImage::PixelImage(int width, int height, int channels, float fill)
    : width_(width),
      height_(height),
      channels_(channels),
      data_(static_cast<std::size_t>(width) * height * channels, fill) {}

PixelImage::PixelImage(int width, int height, int channels,
                       std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {}

bool PixelImage::valid() const {
  if (width_ <= 0 || height_ <= 0) return false;
  if (channels_ != 1 && channels_ != 3) return false;
  if (data_.size() != static_cast<std::size_t>(width_) * height_ * channels_) {
    return false;
  }
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; });
}

namespace {

cv::Mat read_mat(const std::filesystem::path& path) {
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw Error(Errc::UnreadableImage, path.string() + ": " + e.what());
  }
  if (mat.empty()) {
    throw Error(Errc::UnreadableImage, path.string() + ": cannot decode");
  }
  return mat;
}

}  // namespace

PixelImage load_image(const std::filesystem::path& path) {
  cv::Mat mat = read_mat(path);
  if (mat.depth() != CV_8U && mat.depth() != CV_16U) {
    throw Error(Errc::UnreadableImage,
                path.string() + ": unsupported sample depth");
  }
  if (mat.channels() == 4) {
    cv::cvtColor(mat, mat, cv::COLOR_BGRA2RGB);
  } else if (mat.channels() == 3) {
    cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
  } else if (mat.channels() != 1) {
    throw Error(Errc::UnreadableImage,
                path.string() + ": unsupported channel count");
  }
  const int channels = mat.channels();
  const std::size_t row_len = static_cast<std::size_t>(mat.cols) * channels;
  std::vector<float> data(row_len * mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    float* out = data.data() + row_len * y;
    if (mat.depth() == CV_8U) {
      const auto* row = mat.ptr<unsigned char>(y);
      for (std::size_t i = 0; i < row_len; ++i) out[i] = row[i] / 255.0f;
    } else {
      const auto* row = mat.ptr<unsigned short>(y);
      for (std::size_t i = 0; i < row_len; ++i) out[i] = row[i] / 65535.0f;
    }
  }
  return PixelImage(mat.cols, mat.rows, channels, std::move(data));
}

Size probe_image_size(const std::filesystem::path& path) {
  cv::Mat mat = read_mat(path);
  return {mat.cols, mat.rows};
}

namespace {

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(
      std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

void save_png(const std::filesystem::path& path, const PixelImage& image) {
  if (image.empty()) throw Error(Errc::IoError, "refusing to write empty image");
  const int channels = image.channels();
  cv::Mat mat(image.height(), image.width(), CV_MAKETYPE(CV_8U, channels));
  auto src = image.data();
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<unsigned char>(y);
    for (int i = 0; i < image.width() * channels; ++i) {
      row[i] = to_byte(src[static_cast<std::size_t>(y) * image.width() * channels + i]);
    }
  }
  if (channels == 3) cv::cvtColor(mat, mat, cv::COLOR_RGB2BGR);
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat, {cv::IMWRITE_PNG_COMPRESSION, 6});
  } catch (const cv::Exception& e) {
    throw Error(Errc::IoError, path.string() + ": " + e.what());
  }
  if (!ok) throw Error(Errc::IoError, path.string() + ": write failed");
}

PixelImage quantize8(const PixelImage& image) {
  PixelImage out = image;
  for (float& v : out.data()) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

}  // namespace ecgcls
