// saf/checkpoint.hpp
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
//
// Binary parameter container. Layout (little endian):
//   magic "SAFCKPT1" | u32 version | u32 config_len | config text
//   u32 array_count
//   per array: u32 name_len | name | u32 rank | i64 extents[rank] | f32 data
//   u64 fnv1a checksum over all payload bytes, in file order
// Round trips are bit-exact.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saf/common.hpp"

namespace saf {

struct NamedArray {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> data;
};

struct CheckpointData {
  std::string config_text;
  std::vector<NamedArray> arrays;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

uint64_t fnv1a64(const void* bytes, size_t len, uint64_t seed = 0xCBF29CE484222325ULL);

}  // namespace saf
