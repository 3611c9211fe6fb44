// saf/enhance.hpp
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

#pragma once

#include "saf/model.hpp"

namespace saf {

// Full enhancement path: pad, analyze, run the model, recombine, decompress,
// synthesize, trim. One hop of leading zeros plus tail padding to a whole
// frame grid means every input sample is exactly representable, so the
// output length always equals the input length.
AudioClip enhance_clip(Model<float>& model, const AudioClip& input);

}  // namespace saf
