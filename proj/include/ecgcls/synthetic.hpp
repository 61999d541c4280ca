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
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ecgcls/dataset.hpp"
#include "ecgcls/image.hpp"
#include "ecgcls/preprocess.hpp"

namespace ecgcls {

/// Generator for ECG-like paper sheets: white paper, a red calibration grid
/// inside a rectangular frame, dark traces over it, and printed "metadata"
/// blocks in the margin. Every pixel's class is recorded.
struct SheetSpec {
  Size size{1000, 700};
  int margin = 40;            ///< frame inset from every image border
  double trace_density = 0.9;
  double grid_density = 0.3;
  double margin_ink_density = 0.8;
  int grid_minor = 10;
  int grid_major = 50;
  int trace_rows = 3;
  double amplitude = 0.3;     ///< peak deflection as a fraction of row height
  int thickness = 2;
  double beats_per_row = 6.0;
  bool color = true;          ///< red grid when true, gray grid otherwise
};

enum class PixelClass : std::uint8_t { Background, Grid, Trace, MarginInk };

struct SyntheticSheet {
  PixelImage image;
  Rect frame;
  std::vector<PixelClass> classes;  ///< row-major, one per pixel

  PixelClass class_at(int x, int y) const {
    return classes[static_cast<std::size_t>(y) * image.width() + x];
  }
  std::size_t count(PixelClass c) const;
};

SyntheticSheet generate_sheet(const SheetSpec& spec, std::uint64_t seed);

/// Sheet parameters for the two toy classes: COVID sheets carry dense,
/// heavy traces and NON_COVID sheets sparse, thin ones, which makes the
/// demo task separable by ink mass.
SheetSpec demo_sheet_spec(Label label, Size size);

/// Writes `count` sheets (alternating classes) to root/covid and
/// root/normal as PNG. Returns the written paths.
std::vector<std::filesystem::path> write_demo_corpus(const std::filesystem::path& root,
                                                     int count, std::uint64_t seed,
                                                     Size size = {400, 300});

}  // namespace ecgcls
