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

#include "ecgcls/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ecgcls/error.hpp"
#include "ecgcls/hash.hpp"
#include "ecgcls/random.hpp"

namespace ecgcls {

std::size_t SyntheticSheet::count(PixelClass c) const {
  return static_cast<std::size_t>(std::count(classes.begin(), classes.end(), c));
}

namespace {

// One heartbeat on phase in [0, 1): P bump, QRS spike, T bump.
double beat(double phase) {
  auto bump = [](double x, double centre, double width) {
    const double d = (x - centre) / width;
    return std::exp(-d * d);
  };
  double qrs = 0.0;
  const double d = std::abs(phase - 0.30);
  if (d < 0.035) qrs = 1.0 - d / 0.035;
  const double q = std::abs(phase - 0.25);
  const double s = std::abs(phase - 0.35);
  double dips = 0.0;
  if (q < 0.015) dips -= 0.2 * (1.0 - q / 0.015);
  if (s < 0.015) dips -= 0.3 * (1.0 - s / 0.015);
  return qrs + dips + 0.15 * bump(phase, 0.12, 0.03) + 0.3 * bump(phase, 0.58, 0.05);
}

}  // namespace

SyntheticSheet generate_sheet(const SheetSpec& spec, std::uint64_t seed) {
  const int w = spec.size.width;
  const int h = spec.size.height;
  if (w <= 2 * spec.margin + 10 || h <= 2 * spec.margin + 10 || spec.margin < 0) {
    throw Error(Errc::ConfigInvalid, "sheet too small for its margin");
  }
  const int channels = spec.color ? 3 : 1;
  SyntheticSheet sheet;
  sheet.image = PixelImage(w, h, channels, 1.0f);
  sheet.frame = Rect{spec.margin, spec.margin, w - 2 * spec.margin, h - 2 * spec.margin};
  sheet.classes.assign(static_cast<std::size_t>(w) * h, PixelClass::Background);
  const Rect& f = sheet.frame;

  const float trace_value = static_cast<float>(1.0 - spec.trace_density);
  const float grid_gray = static_cast<float>(1.0 - spec.grid_density);
  // Red grid with the requested luma: R = 1, G = B chosen so that
  // 0.299 + 0.701 * g = 1 - density.
  const float grid_gb = static_cast<float>(
      std::clamp((1.0 - spec.grid_density - 0.299) / 0.701, 0.0, 1.0));
  const float ink_value = static_cast<float>(1.0 - spec.margin_ink_density);

  auto paint = [&](int x, int y, PixelClass cls) {
    float* px = sheet.image.data().data() + (static_cast<std::size_t>(y) * w + x) * channels;
    sheet.classes[static_cast<std::size_t>(y) * w + x] = cls;
    switch (cls) {
      case PixelClass::Grid:
        if (channels == 3) {
          px[0] = 1.0f;
          px[1] = px[2] = grid_gb;
        } else {
          px[0] = grid_gray;
        }
        break;
      case PixelClass::Trace:
        std::fill(px, px + channels, trace_value);
        break;
      case PixelClass::MarginInk:
        std::fill(px, px + channels, ink_value);
        break;
      case PixelClass::Background:
        std::fill(px, px + channels, 1.0f);
        break;
    }
  };

  // Grid: minor and major lines, all inside the frame.
  for (int y = f.y; y < f.y + f.h; ++y) {
    for (int x = f.x; x < f.x + f.w; ++x) {
      const int dx = x - f.x;
      const int dy = y - f.y;
      if (dx % spec.grid_minor == 0 || dy % spec.grid_minor == 0 ||
          dx % spec.grid_major == 1 || dy % spec.grid_major == 1) {
        paint(x, y, PixelClass::Grid);
      }
    }
  }

  Rng rng(mix_seed(seed));
  const int rows = std::max(spec.trace_rows, 1);
  const int x_begin = f.x + 4;
  const int x_end = f.x + f.w - 4;
  const double period = (x_end - x_begin) / std::max(spec.beats_per_row, 0.5);
  const int half = std::max(spec.thickness, 1) / 2;
  for (int r = 0; r < rows; ++r) {
    const double band = static_cast<double>(f.h) / rows;
    const double baseline = f.y + band * (r + 0.6);
    const double amp = spec.amplitude * band;
    const double phase0 = rng.uniform();
    const double jitter = 0.02 * amp;
    int prev_y = -1;
    for (int x = x_begin; x < x_end; ++x) {
      const double phase = std::fmod((x - x_begin) / period + phase0, 1.0);
      const double yv = baseline - amp * beat(phase) + rng.uniform(-jitter, jitter);
      const int y = std::clamp(static_cast<int>(std::lround(yv)), f.y + 1 + half,
                               f.y + f.h - 2 - half);
      const int y_lo = prev_y < 0 ? y : std::min(prev_y, y);
      const int y_hi = prev_y < 0 ? y : std::max(prev_y, y);
      for (int yy = y_lo - half; yy <= y_hi + half; ++yy) {
        for (int xx = x - half; xx <= x + half; ++xx) {
          if (xx >= f.x && xx < f.x + f.w && yy >= f.y && yy < f.y + f.h) {
            paint(xx, yy, PixelClass::Trace);
          }
        }
      }
      prev_y = y;
    }
  }

  // Printed header blocks in the top and bottom margins.
  if (spec.margin >= 12) {
    for (int band_y : {4, h - spec.margin + 4}) {
      int x = 8;
      while (x < w - 40) {
        const int bw = 10 + static_cast<int>(rng.below(40));
        const int bh = std::max(4, spec.margin - 12);
        for (int y = band_y; y < band_y + bh && y < h; ++y) {
          for (int xx = x; xx < std::min(x + bw, w - 8); ++xx) {
            if (y < f.y || y >= f.y + f.h) paint(xx, y, PixelClass::MarginInk);
          }
        }
        x += bw + 6 + static_cast<int>(rng.below(20));
      }
    }
  }
  return sheet;
}

SheetSpec demo_sheet_spec(Label label, Size size) {
  SheetSpec spec;
  spec.size = size;
  spec.margin = std::max(12, std::min(size.width, size.height) / 16);
  spec.grid_minor = std::max(4, size.width / 80);
  spec.grid_major = spec.grid_minor * 5;
  if (label == Label::Covid) {
    spec.trace_rows = 6;
    spec.amplitude = 0.45;
    spec.thickness = 5;
    spec.beats_per_row = 9.0;
  } else {
    spec.trace_rows = 2;
    spec.amplitude = 0.2;
    spec.thickness = 1;
    spec.beats_per_row = 4.0;
  }
  return spec;
}

std::vector<std::filesystem::path> write_demo_corpus(const std::filesystem::path& root,
                                                     int count, std::uint64_t seed,
                                                     Size size) {
  if (count < 2) throw Error(Errc::ConfigInvalid, "demo corpus needs at least 2 images");
  std::vector<std::filesystem::path> written;
  for (int i = 0; i < count; ++i) {
    const Label label = i % 2 == 0 ? Label::Covid : Label::NonCovid;
    const std::string dir = label == Label::Covid ? "covid" : "normal";
    char name[32];
    std::snprintf(name, sizeof(name), "sheet_%04d.png", i / 2);
    const auto path = root / dir / name;
    const auto sheet = generate_sheet(demo_sheet_spec(label, size),
                                      derive_seed(seed, path.filename().string() + dir));
    save_png(path, sheet.image);
    written.push_back(path);
  }
  return written;
}

}  // namespace ecgcls
