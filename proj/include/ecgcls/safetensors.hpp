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
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ecgcls {

enum class DType { F32, F64, I32, I64 };

std::size_t dtype_size(DType dtype);

/// One named tensor in a safetensors file (little-endian, row-major).
struct TensorBlob {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::vector<std::byte> data;

  std::int64_t numel() const;
};

struct SafetensorsFile {
  std::vector<TensorBlob> tensors;  ///< ordered by data offset
  std::map<std::string, std::string> metadata;
};

/// Throws Error{IoError} or Error{ParseError}. Unsupported dtypes are a
/// ParseError.
SafetensorsFile read_safetensors(const std::filesystem::path& path);

void write_safetensors(const std::filesystem::path& path, std::span<const TensorBlob> tensors,
                       const std::map<std::string, std::string>& metadata = {});

}  // namespace ecgcls
