// saf/dsp.hpp
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
// Waveform <-> spectra conversion. Analysis settings are fixed for the whole
// pipeline: 16 kHz audio, 320-sample periodic Hann window, 160-sample hop,
// 320-point FFT, 161 one-sided bins, magnitudes power-compressed with
// exponent 0.5. Everything here is double precision and purely functional.

#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "saf/common.hpp"

namespace saf {

inline constexpr int kSampleRate = 16000;
inline constexpr int kWindowLen = 320;
inline constexpr int kHopLen = 160;
inline constexpr int kFftLen = 320;
inline constexpr int kFreqBins = kFftLen / 2 + 1;  // 161
inline constexpr double kCompressExp = 0.5;

struct AudioClip {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate = kSampleRate;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

// Complex T x F grid, row-major, frame-major.
struct ComplexSpectrogram {
  std::vector<std::complex<double>> data;
  int64_t frames = 0;
  int bins = kFreqBins;

  std::complex<double>& at(int64_t t, int f) { return data[static_cast<size_t>(t * bins + f)]; }
  const std::complex<double>& at(int64_t t, int f) const {
    return data[static_cast<size_t>(t * bins + f)];
  }
};

// Real T x F grid.
struct Grid {
  std::vector<double> data;
  int64_t frames = 0;
  int bins = kFreqBins;

  static Grid zeros(int64_t frames, int bins = kFreqBins) {
    Grid g;
    g.frames = frames;
    g.bins = bins;
    g.data.assign(static_cast<size_t>(frames * bins), 0.0);
    return g;
  }
  double& at(int64_t t, int f) { return data[static_cast<size_t>(t * bins + f)]; }
  double at(int64_t t, int f) const { return data[static_cast<size_t>(t * bins + f)]; }
};

// The four input views of one noisy clip, all on the same T x F grid and all
// in the compressed magnitude domain: M >= 0, theta in (-pi, pi],
// S_r = M cos(theta), S_i = M sin(theta) by construction.
struct SpectraBundle {
  Grid mag;        // M
  Grid theta;      // phase
  Grid real_part;  // S_r
  Grid imag_part;  // S_i
  int64_t frames = 0;
  int bins = kFreqBins;
  int window_len = kWindowLen;
  int hop_len = kHopLen;
  int fft_len = kFftLen;
};

// Clean-speech targets on the grid of the paired noisy bundle.
struct TargetSpectra {
  Grid mag;        // M*
  Grid real_part;  // S*_r
  Grid imag_part;  // S*_i
  int64_t frames = 0;
  int bins = kFreqBins;
};

// Number of analysis frames for a clip of n samples (no centering; the first
// frame starts at sample 0). Requires n >= window.
int64_t stft_frame_count(int64_t n);

// Samples covered when padding so every input sample falls inside a frame.
int64_t stft_padded_length(int64_t n);

ComplexSpectrogram stft(const AudioClip& clip);

// Weighted overlap-add inverse with window-sum normalization; reproduces the
// analysis input exactly on the interior. `length` trims/extends the output.
AudioClip istft(const ComplexSpectrogram& spec, int64_t length);

// Element-wise magnitude compression mag^c and its inverse. Rejects negative
// input.
Grid compress(const Grid& mag, double c = kCompressExp);
Grid decompress(const Grid& mag, double c = kCompressExp);

SpectraBundle make_bundle(const AudioClip& clip);

// Clean-speech spectra for loss targets; same compression domain as bundles.
TargetSpectra make_targets(const AudioClip& clean);

struct MixResult {
  AudioClip noisy;
  AudioClip clean;     // scaled identically if peak normalization fired
  double noise_gain;   // g applied to the noise
  double peak_scale;   // 1.0 unless |sample| would exceed 1
};

// noisy = clean + g*noise with g chosen so the mean-power ratio hits snr_db.
// Noise is looped or cropped to the clean length.
MixResult mix_at_snr(const AudioClip& clean, const AudioClip& noise, double snr_db);

// Rebuild a complex spectrogram from enhanced compressed-domain RI grids:
// decompress the magnitude, keep the implied phase.
ComplexSpectrogram spectra_to_complex(const Grid& real_part, const Grid& imag_part,
                                      double c = kCompressExp);

}  // namespace saf
