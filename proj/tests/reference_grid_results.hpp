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

// Published grid-search results for VGG16, epoch-25 block, used as a
// keyed stub trainer. Rows whose cells are misaligned in the source table
// (batch 64, dropout 0.5, and the whole epoch-50 block) are left out; the
// stub answers those grid points with an uninformative predictor.

#include <array>
#include <cmath>
#include <optional>

#include "ecgcls/hypersearch.hpp"

namespace ecgcls::testing {

struct PublishedRow {
  int epochs;
  int batch;
  double dropout;
  int neurons;
  double accuracy;
  double error;
};

inline constexpr std::array<PublishedRow, 24> kPublishedRows = {{
    {25, 16, 0.1, 16, 0.5000, 0.6934},  // printed as "50"
    {25, 16, 0.1, 32, 0.6983, 0.5379},
    {25, 16, 0.1, 64, 0.7967, 0.4557},
    {25, 16, 0.2, 16, 0.7761, 0.4922},
    {25, 16, 0.2, 32, 0.7228, 0.5510},
    {25, 16, 0.2, 64, 0.7983, 0.4553},
    {25, 16, 0.5, 16, 0.7800, 0.4982},
    {25, 16, 0.5, 32, 0.7878, 0.4845},
    {25, 16, 0.5, 64, 0.5728, 0.9073},
    {25, 32, 0.1, 16, 0.7894, 0.4546},
    {25, 32, 0.1, 32, 0.8139, 0.4263},
    {25, 32, 0.1, 64, 0.7911, 0.4455},
    {25, 32, 0.2, 16, 0.7467, 0.4961},
    {25, 32, 0.2, 32, 0.5000, 0.6934},
    {25, 32, 0.2, 64, 0.7389, 0.4994},
    {25, 32, 0.5, 16, 0.6934, 0.5000},
    {25, 32, 0.5, 32, 0.7756, 0.4815},
    {25, 32, 0.5, 64, 0.7894, 0.4708},
    {25, 64, 0.1, 16, 0.5000, 0.6932},
    {25, 64, 0.1, 32, 0.7633, 0.4729},
    {25, 64, 0.1, 64, 0.8133, 0.4212},
    {25, 64, 0.2, 16, 0.5000, 0.6932},
    {25, 64, 0.2, 32, 0.5016, 0.6932},
    {25, 64, 0.2, 64, 0.8094, 0.4442},
}};

inline std::optional<PublishedRow> published_row(const HyperParams& p) {
  for (const auto& row : kPublishedRows) {
    if (row.epochs == p.epochs && row.batch == p.batch_size && row.dropout == p.dropout &&
        row.neurons == p.neurons) {
      return row;
    }
  }
  return std::nullopt;
}

/// Returns the published value for every fold; unpublished points score as
/// a coin flip with log(2) cross-entropy.
inline Trainer published_stub_trainer() {
  return [](const HyperParams& p, std::span<const ImageRecord>, std::span<const ImageRecord>,
            std::uint64_t) {
    if (auto row = published_row(p)) return FoldMetrics{row->accuracy, row->error};
    return FoldMetrics{0.5, std::log(2.0)};
  };
}

}  // namespace ecgcls::testing
