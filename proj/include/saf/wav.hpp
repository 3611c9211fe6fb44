// saf/wav.hpp
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

#include <string>
#include <vector>

#include "saf/dsp.hpp"

namespace saf {

// Reads a mono PCM-16 or float-32 WAV at 16 or 48 kHz; 48 kHz input is
// resampled to 16 kHz. Stereo and other rates are rejected.
AudioClip read_wav(const std::string& path);

// Writes mono PCM-16 at 16 kHz, round-to-nearest with clamping.
void write_wav(const std::string& path, const AudioClip& clip);

// Rational polyphase resampler (windowed-sinc prototype, Kaiser window).
// Output length is ceil(n * up / down); group delay is compensated.
std::vector<double> resample_polyphase(const std::vector<double>& x, int up, int down);

}  // namespace saf
