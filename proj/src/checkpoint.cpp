// saf/checkpoint.cpp
//
// Copyright 2026 The saf authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "saf/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace saf {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'F', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  SAF_CHECK(in.good(), "checkpoint ", path, ": truncated file");
  return v;
}

}  // namespace

uint64_t fnv1a64(const void* bytes, size_t len, uint64_t seed) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary);
  SAF_CHECK(out.good(), "cannot create checkpoint file: ", path);

  out.write(kMagic, 8);
  put<uint32_t>(out, kVersion);
  put<uint32_t>(out, static_cast<uint32_t>(data.config_text.size()));
  out.write(data.config_text.data(), static_cast<std::streamsize>(data.config_text.size()));
  put<uint32_t>(out, static_cast<uint32_t>(data.arrays.size()));

  uint64_t checksum = 0xCBF29CE484222325ULL;
  for (const auto& arr : data.arrays) {
    int64_t expect = 1;
    for (int64_t d : arr.shape) expect *= d;
    SAF_CHECK(expect == static_cast<int64_t>(arr.data.size()), "checkpoint: array ", arr.name,
              " shape/data mismatch");
    put<uint32_t>(out, static_cast<uint32_t>(arr.name.size()));
    out.write(arr.name.data(), static_cast<std::streamsize>(arr.name.size()));
    put<uint32_t>(out, static_cast<uint32_t>(arr.shape.size()));
    for (int64_t d : arr.shape) put<int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(arr.data.data()),
              static_cast<std::streamsize>(arr.data.size() * sizeof(float)));
    checksum = fnv1a64(arr.data.data(), arr.data.size() * sizeof(float), checksum);
  }
  put<uint64_t>(out, checksum);
  SAF_CHECK(out.good(), "failed writing checkpoint: ", path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SAF_CHECK(in.good(), "cannot open checkpoint file: ", path);

  char magic[8];
  in.read(magic, 8);
  SAF_CHECK(in.good() && std::memcmp(magic, kMagic, 8) == 0, "checkpoint ", path,
            ": bad magic (not a checkpoint file)");
  const uint32_t version = take<uint32_t>(in, path);
  SAF_CHECK(version == kVersion, "checkpoint ", path, ": unsupported format version ", version);

  CheckpointData data;
  const uint32_t cfg_len = take<uint32_t>(in, path);
  data.config_text.resize(cfg_len);
  in.read(data.config_text.data(), cfg_len);
  SAF_CHECK(in.good(), "checkpoint ", path, ": truncated config block");

  const uint32_t count = take<uint32_t>(in, path);
  uint64_t checksum = 0xCBF29CE484222325ULL;
  data.arrays.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedArray& arr = data.arrays[i];
    const uint32_t name_len = take<uint32_t>(in, path);
    arr.name.resize(name_len);
    in.read(arr.name.data(), name_len);
    const uint32_t rank = take<uint32_t>(in, path);
    SAF_CHECK(rank <= 8, "checkpoint ", path, ": implausible rank ", rank);
    arr.shape.resize(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      arr.shape[d] = take<int64_t>(in, path);
      SAF_CHECK(arr.shape[d] > 0, "checkpoint ", path, ": bad extent");
      numel *= arr.shape[d];
    }
    arr.data.resize(static_cast<size_t>(numel));
    in.read(reinterpret_cast<char*>(arr.data.data()),
            static_cast<std::streamsize>(arr.data.size() * sizeof(float)));
    SAF_CHECK(in.good(), "checkpoint ", path, ": truncated payload for ", arr.name);
    checksum = fnv1a64(arr.data.data(), arr.data.size() * sizeof(float), checksum);
  }
  const uint64_t stored = take<uint64_t>(in, path);
  SAF_CHECK(stored == checksum, "checkpoint ", path, ": payload checksum mismatch");
  return data;
}

}  // namespace saf
