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

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "ecgcls/error.hpp"
#include "ecgcls/preprocess.hpp"
#include "ecgcls/random.hpp"
#include "ecgcls/synthetic.hpp"
#include "test_support.hpp"

namespace ecgcls {
namespace {

PixelImage random_image(Rng& rng, int w, int h, int c) {
  PixelImage img(w, h, c);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

PreprocessConfig threshold_only(double t) {
  PreprocessConfig cfg;
  cfg.density_threshold = t;
  return cfg;
}

// --------------------------------------------------------------- crop

TEST(Crop, FullExtentIsIdentity) {
  Rng rng(1);
  const auto img = random_image(rng, 30, 20, 3);
  EXPECT_EQ(crop_frame(img, {0, 0, 30, 20}), img);
}

TEST(Crop, IndexArithmetic) {
  Rng rng(2);
  const auto img = random_image(rng, 100, 100, 1);
  const auto out = crop_frame(img, {10, 10, 50, 40});
  ASSERT_EQ(out.width(), 50);
  ASSERT_EQ(out.height(), 40);
  EXPECT_EQ(out.at(0, 0), img.at(10, 10));
  EXPECT_EQ(out.at(49, 39), img.at(59, 49));
}

TEST(Crop, OutOfBounds) {
  const PixelImage img(10, 10, 1);
  for (Rect r : {Rect{-1, 0, 5, 5}, Rect{6, 0, 5, 5}, Rect{0, 0, 0, 5}, Rect{0, 8, 4, 3}}) {
    try {
      crop_frame(img, r);
      ADD_FAILURE() << "expected RectOutOfBounds";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::RectOutOfBounds);
    }
  }
}

TEST(Crop, FrameKeepsAllTraceAndNoMargin) {
  const auto sheet = generate_sheet(SheetSpec{}, 5);
  const Rect f = sheet.frame;
  ASSERT_GT(sheet.count(PixelClass::Trace), 0u);
  ASSERT_GT(sheet.count(PixelClass::MarginInk), 0u);
  std::size_t trace_inside = 0;
  std::size_t margin_inside = 0;
  for (int y = f.y; y < f.y + f.h; ++y) {
    for (int x = f.x; x < f.x + f.w; ++x) {
      trace_inside += sheet.class_at(x, y) == PixelClass::Trace;
      margin_inside += sheet.class_at(x, y) == PixelClass::MarginInk;
    }
  }
  EXPECT_EQ(trace_inside, sheet.count(PixelClass::Trace));
  EXPECT_EQ(margin_inside, 0u);
  const auto cropped = crop_frame(sheet.image, f);
  EXPECT_EQ(cropped.size(), (Size{f.w, f.h}));
}

// ------------------------------------------------------------ density

TEST(Density, WhiteAndBlackSaturate) {
  for (int c : {1, 3}) {
    for (float v : density_map(PixelImage(7, 5, c, 1.0f)).values) EXPECT_EQ(v, 0.0f);
    for (float v : density_map(PixelImage(7, 5, c, 0.0f)).values) EXPECT_EQ(v, 1.0f);
  }
}

TEST(Density, EveryTracePixelDenserThanEveryGridPixel) {
  for (auto mode : {DensityMode::Luminance, DensityMode::RedChannel}) {
    const auto sheet = generate_sheet(SheetSpec{}, 9);
    const auto d = density_map(sheet.image, mode);
    float min_trace = 1.0f;
    float max_grid = 0.0f;
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) {
        if (sheet.class_at(x, y) == PixelClass::Trace) min_trace = std::min(min_trace, d.at(x, y));
        if (sheet.class_at(x, y) == PixelClass::Grid) max_grid = std::max(max_grid, d.at(x, y));
      }
    }
    EXPECT_GT(min_trace, max_grid);
  }
}

// ---------------------------------------------------- gridline removal

TEST(RemoveGridlines, WhiteAndZeroThresholdAreNoOps) {
  const PixelImage white(20, 10, 3, 1.0f);
  EXPECT_EQ(remove_gridlines(white, threshold_only(0.7)), white);
  Rng rng(3);
  const auto img = random_image(rng, 20, 10, 3);
  EXPECT_EQ(remove_gridlines(img, threshold_only(0.0)), img);
}

TEST(RemoveGridlines, SyntheticSheetOracle) {
  const auto sheet = generate_sheet(SheetSpec{}, 11);  // 1000x700, trace .9, grid .3
  const auto out = remove_gridlines(sheet.image, threshold_only(0.5));
  std::size_t grid = 0, grid_removed = 0, trace = 0, trace_kept = 0;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      bool white = true;
      bool same = true;
      for (int c = 0; c < 3; ++c) {
        white &= out.at(x, y, c) == 1.0f;
        same &= out.at(x, y, c) == sheet.image.at(x, y, c);
      }
      if (sheet.class_at(x, y) == PixelClass::Grid) {
        ++grid;
        grid_removed += white;
      } else if (sheet.class_at(x, y) == PixelClass::Trace) {
        ++trace;
        trace_kept += same;
      }
    }
  }
  ASSERT_GT(grid, 0u);
  ASSERT_GT(trace, 0u);
  EXPECT_GE(static_cast<double>(grid_removed) / grid, 0.99);
  EXPECT_GE(static_cast<double>(trace_kept) / trace, 0.99);
}

TEST(RemoveGridlines, IdempotentInMemoryAndOnDisk) {
  testing::TempDir dir;
  const auto sheet = generate_sheet(SheetSpec{}, 12);
  const auto cfg = threshold_only(0.5);
  const auto once = remove_gridlines(sheet.image, cfg);
  EXPECT_EQ(remove_gridlines(once, cfg), once);

  save_png(dir / "once.png", once);
  save_png(dir / "twice.png", remove_gridlines(load_image(dir / "once.png"), cfg));
  EXPECT_EQ(file_bytes(dir / "once.png"), file_bytes(dir / "twice.png"));
}

TEST(RemoveGridlinesProperty, IdempotenceOnRandomImages) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto img = random_image(rng, 1 + static_cast<int>(rng.below(12)),
                                  1 + static_cast<int>(rng.below(12)), rng.bernoulli(0.5) ? 3 : 1);
    auto cfg = threshold_only(rng.uniform());
    cfg.density_mode = rng.bernoulli(0.5) ? DensityMode::Luminance : DensityMode::RedChannel;
    const auto once = remove_gridlines(img, cfg);
    ASSERT_EQ(remove_gridlines(once, cfg), once);
  }
}

// Raising the threshold never restores a removed pixel.
TEST(RemoveGridlinesProperty, RemovedSetMonotoneInThreshold) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const int c = rng.bernoulli(0.5) ? 3 : 1;
    const auto img = random_image(rng, 16, 12, c);
    double t1 = rng.uniform();
    double t2 = rng.uniform();
    if (t1 > t2) std::swap(t1, t2);
    const auto d = density_map(img);
    const auto lo = remove_gridlines(img, threshold_only(t1));
    const auto hi = remove_gridlines(img, threshold_only(t2));
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const bool removed_lo = d.at(x, y) < t1;
        const bool removed_hi = d.at(x, y) < t2;
        ASSERT_TRUE(!removed_lo || removed_hi);
        for (int k = 0; k < c; ++k) {
          if (removed_hi) ASSERT_EQ(hi.at(x, y, k), 1.0f);
          if (removed_lo) ASSERT_EQ(lo.at(x, y, k), 1.0f);
          if (!removed_hi) ASSERT_EQ(hi.at(x, y, k), img.at(x, y, k));
        }
      }
    }
  }
}

// -------------------------------------------------------------- resize

TEST(Resize, ScanToTargetSize) {
  const PixelImage scan(2213, 1572, 1, 0.25f);
  const auto out = resize(scan, {987, 987}, Interpolation::Bilinear);
  EXPECT_EQ(out.size(), (Size{987, 987}));
}

TEST(Resize, OwnSizeIsIdentity) {
  Rng rng(6);
  const auto img = random_image(rng, 33, 17, 3);
  EXPECT_EQ(resize(img, img.size(), Interpolation::Nearest), img);
  EXPECT_EQ(resize(img, img.size(), Interpolation::Bilinear), img);
}

TEST(Resize, ConstantStaysConstant) {
  for (auto interp : {Interpolation::Nearest, Interpolation::Bilinear}) {
    for (Size s : {Size{1, 1}, Size{5, 40}, Size{123, 77}}) {
      const auto out = resize(PixelImage(31, 19, 3, 0.375f), s, interp);
      ASSERT_EQ(out.size(), s);
      for (float v : out.data()) ASSERT_FLOAT_EQ(v, 0.375f);
    }
  }
}

TEST(Resize, RangePreservedAndBadTarget) {
  Rng rng(7);
  const auto img = random_image(rng, 40, 30, 1);
  EXPECT_TRUE(resize(img, {17, 61}, Interpolation::Bilinear).valid());
  try {
    resize(img, {0, 5}, Interpolation::Nearest);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadTarget);
  }
}

// ------------------------------------------------------------ pipeline

TEST(Pipeline, AllStagesIdentity) {
  Rng rng(8);
  const auto img = random_image(rng, 25, 14, 3);
  PreprocessConfig cfg;
  cfg.density_threshold = 0.0;
  cfg.target = img.size();
  cfg.interpolation = Interpolation::Nearest;
  EXPECT_EQ(preprocess_pipeline(img, cfg), img);
}

TEST(Pipeline, SyntheticSheetHasTargetSizeAndNoGrid) {
  const auto sheet = generate_sheet(SheetSpec{}, 13);
  PreprocessConfig cfg;
  cfg.crop_rect = sheet.frame;
  cfg.target = {sheet.frame.w, sheet.frame.h};
  cfg.interpolation = Interpolation::Nearest;
  const auto out = preprocess_pipeline(sheet.image, cfg);
  ASSERT_EQ(out.size(), cfg.target);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (sheet.class_at(x + sheet.frame.x, y + sheet.frame.y) != PixelClass::Grid) continue;
      for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(x, y, c), 1.0f);
    }
  }
  PreprocessConfig full;  // default 987x987 target
  full.crop_rect = sheet.frame;
  EXPECT_EQ(preprocess_pipeline(sheet.image, full).size(), (Size{987, 987}));
}

TEST(Pipeline, DeterministicAndInRange) {
  const auto sheet = generate_sheet(SheetSpec{}, 14);
  PreprocessConfig cfg;
  cfg.target = {300, 200};
  cfg.normalize = Normalize::UnitRange;
  const auto a = preprocess_pipeline(sheet.image, cfg);
  EXPECT_EQ(a, preprocess_pipeline(sheet.image, cfg));
  EXPECT_TRUE(a.valid());
}

TEST(Config, Validation) {
  PreprocessConfig cfg;
  cfg.density_threshold = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = PreprocessConfig{};
  cfg.target = {0, 10};
  try {
    cfg.validate();
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadTarget);
  }
}

}  // namespace
}  // namespace ecgcls
