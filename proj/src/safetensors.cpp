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

#include "ecgcls/safetensors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "ecgcls/error.hpp"
#include "json.hpp"

namespace ecgcls {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "safetensors IO assumes a little-endian host");

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::I32: return 4;
    case DType::I64: return 8;
  }
  return 0;
}

std::int64_t TensorBlob::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

const char* dtype_name(DType d) {
  switch (d) {
    case DType::F32: return "F32";
    case DType::F64: return "F64";
    case DType::I32: return "I32";
    case DType::I64: return "I64";
  }
  return "?";
}

DType parse_dtype(const std::string& s) {
  if (s == "F32") return DType::F32;
  if (s == "F64") return DType::F64;
  if (s == "I32") return DType::I32;
  if (s == "I64") return DType::I64;
  throw Error(Errc::ParseError, "unsupported safetensors dtype " + s);
}

}  // namespace

SafetensorsFile read_safetensors(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path.string());
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), 8);
  if (!in || header_len > (100u << 20)) {
    throw Error(Errc::ParseError, path.string() + ": bad safetensors header length");
  }
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw Error(Errc::ParseError, path.string() + ": truncated header");
  const auto data_start = static_cast<std::uint64_t>(8 + header_len);
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());

  SafetensorsFile file;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  try {
    const json j = json::parse(header);
    for (const auto& [name, entry] : j.items()) {
      if (name == "__metadata__") {
        for (const auto& [k, v] : entry.items()) file.metadata[k] = v.get<std::string>();
        continue;
      }
      TensorBlob blob;
      blob.name = name;
      blob.dtype = parse_dtype(entry.at("dtype").get<std::string>());
      blob.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offsets = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offsets.size() != 2 || offsets[1] < offsets[0] ||
          data_start + offsets[1] > file_size ||
          offsets[1] - offsets[0] != static_cast<std::uint64_t>(blob.numel()) * dtype_size(blob.dtype)) {
        throw Error(Errc::ParseError, path.string() + ": bad offsets for " + name);
      }
      ranges.emplace_back(offsets[0], offsets[1]);
      file.tensors.push_back(std::move(blob));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  std::vector<std::size_t> order(file.tensors.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ranges[a].first < ranges[b].first; });
  std::vector<TensorBlob> sorted;
  sorted.reserve(order.size());
  for (std::size_t i : order) {
    TensorBlob& blob = file.tensors[i];
    blob.data.resize(ranges[i].second - ranges[i].first);
    in.seekg(static_cast<std::streamoff>(data_start + ranges[i].first));
    in.read(reinterpret_cast<char*>(blob.data.data()), static_cast<std::streamsize>(blob.data.size()));
    if (!in) throw Error(Errc::ParseError, path.string() + ": truncated data for " + blob.name);
    sorted.push_back(std::move(blob));
  }
  file.tensors = std::move(sorted);
  return file;
}

void write_safetensors(const fs::path& path, std::span<const TensorBlob> tensors,
                       const std::map<std::string, std::string>& metadata) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    if (t.data.size() != static_cast<std::size_t>(t.numel()) * dtype_size(t.dtype)) {
      throw Error(Errc::IoError, "tensor " + t.name + " has inconsistent byte size");
    }
    header[t.name] = {{"dtype", dtype_name(t.dtype)},
                      {"shape", t.shape},
                      {"data_offsets", {offset, offset + t.data.size()}}};
    offset += t.data.size();
  }
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::string text = header.dump();
  while ((8 + text.size()) % 8 != 0) text.push_back(' ');

  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size()));
  }
  if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

}  // namespace ecgcls
