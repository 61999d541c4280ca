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

#include <cstdlib>
#include <cstring>
#include <fstream>

#include "ecgcls/error.hpp"
#include "ecgcls/safetensors.hpp"
#include "test_support.hpp"

namespace ecgcls {
namespace {

template <typename T>
TensorBlob blob(std::string name, DType dtype, std::vector<std::int64_t> shape,
                const std::vector<T>& values) {
  TensorBlob b{std::move(name), dtype, std::move(shape), {}};
  b.data.resize(values.size() * sizeof(T));
  std::memcpy(b.data.data(), values.data(), b.data.size());
  return b;
}

void write_raw(const std::filesystem::path& path, const std::string& header,
               const std::string& payload) {
  std::ofstream out(path, std::ios::binary);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out << header << payload;
}

Errc read_error(const std::filesystem::path& path) {
  try {
    read_safetensors(path);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "read should fail";
  return Errc::IoError;
}

// Layout written by hand from the format definition: u64 little-endian
// header length, JSON header, then the raw buffer.
TEST(Safetensors, ReadsHandBuiltFile) {
  testing::TempDir dir;
  const float f[] = {1.5f, -2.0f};
  const std::int64_t i[] = {7};
  std::string payload(reinterpret_cast<const char*>(i), 8);
  payload.append(reinterpret_cast<const char*>(f), 8);
  write_raw(dir / "a.safetensors",
            R"({"w":{"dtype":"F32","shape":[2,1],"data_offsets":[8,16]},)"
            R"("n":{"dtype":"I64","shape":[],"data_offsets":[0,8]},)"
            R"("__metadata__":{"format":"pt"}})",
            payload);
  const auto file = read_safetensors(dir / "a.safetensors");
  ASSERT_EQ(file.tensors.size(), 2u);
  EXPECT_EQ(file.tensors[0].name, "n");  // ordered by offset
  EXPECT_EQ(file.tensors[0].numel(), 1);
  EXPECT_EQ(file.tensors[1].name, "w");
  EXPECT_EQ(file.tensors[1].shape, (std::vector<std::int64_t>{2, 1}));
  float back[2];
  std::memcpy(back, file.tensors[1].data.data(), 8);
  EXPECT_EQ(back[0], 1.5f);
  EXPECT_EQ(back[1], -2.0f);
  EXPECT_EQ(file.metadata.at("format"), "pt");
}

TEST(Safetensors, RoundTrip) {
  testing::TempDir dir;
  const std::vector<TensorBlob> tensors = {
      blob<float>("a.weight", DType::F32, {2, 3}, {1, 2, 3, 4, 5, 6}),
      blob<double>("b", DType::F64, {1}, {0.25}),
      blob<std::int32_t>("c", DType::I32, {0}, {}),
      blob<std::int64_t>("d", DType::I64, {}, {-3})};
  write_safetensors(dir / "t.safetensors", tensors, {{"k", "v"}});
  // Data must start on an 8-byte boundary.
  std::ifstream in(dir / "t.safetensors", std::ios::binary);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  EXPECT_EQ(len % 8, 0u);

  const auto file = read_safetensors(dir / "t.safetensors");
  ASSERT_EQ(file.tensors.size(), tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    EXPECT_EQ(file.tensors[i].name, tensors[i].name);
    EXPECT_EQ(file.tensors[i].dtype, tensors[i].dtype);
    EXPECT_EQ(file.tensors[i].shape, tensors[i].shape);
    EXPECT_EQ(file.tensors[i].data, tensors[i].data);
  }
  EXPECT_EQ(file.metadata.at("k"), "v");
}

TEST(Safetensors, RejectsMalformedFiles) {
  testing::TempDir dir;
  EXPECT_EQ(read_error(dir / "missing"), Errc::IoError);
  write_raw(dir / "json", "{not json", "");
  EXPECT_EQ(read_error(dir / "json"), Errc::ParseError);
  write_raw(dir / "dtype", R"({"x":{"dtype":"BF16","shape":[1],"data_offsets":[0,2]}})",
            std::string(2, '\0'));
  EXPECT_EQ(read_error(dir / "dtype"), Errc::ParseError);
  write_raw(dir / "short", R"({"x":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}})",
            std::string(8, '\0'));
  EXPECT_EQ(read_error(dir / "short"), Errc::ParseError);
  write_raw(dir / "size", R"({"x":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}})",
            std::string(8, '\0'));
  EXPECT_EQ(read_error(dir / "size"), Errc::ParseError);
  { std::ofstream(dir / "tiny", std::ios::binary) << "abc"; }
  EXPECT_EQ(read_error(dir / "tiny"), Errc::ParseError);

  TensorBlob bad = blob<float>("x", DType::F32, {3}, {1, 2});
  EXPECT_THROW(write_safetensors(dir / "bad", std::span(&bad, 1)), Error);
}

// Files must be readable by the reference Python implementation.
TEST(Safetensors, ReadableByReferenceImplementation) {
  if (std::system("python3 -c 'import safetensors.numpy' >/dev/null 2>&1") != 0) {
    GTEST_SKIP() << "python safetensors not installed";
  }
  testing::TempDir dir;
  const std::vector<TensorBlob> tensors = {
      blob<float>("w", DType::F32, {2, 2}, {1, 2, 3, 4.5f}),
      blob<std::int64_t>("n", DType::I64, {1}, {42})};
  write_safetensors(dir / "t.safetensors", tensors, {{"format", "pt"}});
  const std::string cmd =
      "python3 -c \"import sys, numpy as np; from safetensors.numpy import load_file; "
      "t = load_file(sys.argv[1]); "
      "assert t['w'].dtype == np.float32 and t['w'].tolist() == [[1, 2], [3, 4.5]]; "
      "assert t['n'].tolist() == [42]\" " +
      (dir / "t.safetensors").string();
  EXPECT_EQ(std::system(cmd.c_str()), 0);
}

}  // namespace
}  // namespace ecgcls
