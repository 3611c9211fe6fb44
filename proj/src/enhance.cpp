// saf/enhance.cpp
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

#include "saf/enhance.hpp"

namespace saf {

AudioClip enhance_clip(Model<float>& model, const AudioClip& input) {
  SAF_CHECK(!input.samples.empty(), "enhance: empty input clip");
  SAF_CHECK(input.sample_rate == kSampleRate, "enhance: expected ", kSampleRate, " Hz input");
  const int64_t n = input.size();

  AudioClip padded;
  padded.sample_rate = kSampleRate;
  const int64_t covered = stft_padded_length(kHopLen + n);
  padded.samples.assign(static_cast<size_t>(covered), 0.0);
  std::copy(input.samples.begin(), input.samples.end(), padded.samples.begin() + kHopLen);

  SpectraBundle bundle = make_bundle(padded);
  auto bt = bundle_to_tensors<float>(bundle);
  auto fwd = model.forward(bt);

  Grid enh_r = tensor_to_grid(fwd.enhanced.s_r);
  Grid enh_i = tensor_to_grid(fwd.enhanced.s_i);
  ComplexSpectrogram spec = spectra_to_complex(enh_r, enh_i);
  AudioClip synth = istft(spec, covered);

  AudioClip out;
  out.sample_rate = kSampleRate;
  out.samples.assign(synth.samples.begin() + kHopLen, synth.samples.begin() + kHopLen + n);
  return out;
}

}  // namespace saf
