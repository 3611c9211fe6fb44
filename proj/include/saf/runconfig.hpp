// saf/runconfig.hpp
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
// The merged model+training configuration the CLI works with: a flat
// key=value file, overridable from the command line, validated against the
// known key set (unknown keys are rejected).

#pragma once

#include <string>

#include "saf/model.hpp"
#include "saf/training.hpp"

namespace saf {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  // Applies one key=value assignment; throws SafError on unknown keys or
  // unparsable values.
  void apply(const std::string& key, const std::string& value);

  // Reads a flat key=value file ('#' comments, blank lines allowed).
  void load_file(const std::string& path);

  std::string echo() const { return model.to_key_values() + train.to_key_values(); }

  void validate() const {
    model.validate();
    train.validate();
  }
};

}  // namespace saf
