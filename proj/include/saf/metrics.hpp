// saf/metrics.hpp
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

// Short-time objective intelligibility, the 2011 reference procedure:
// resample to 10 kHz, drop frames more than 40 dB below the loudest clean
// frame, 15 one-third-octave bands from 150 Hz on 256/512-point spectra,
// 30-frame segments with band-energy normalization and a -15 dB SDR clip,
// averaged correlation. Inputs must be equal length, 16 kHz, and leave at
// least 384 ms of active signal.
double stoi(const AudioClip& clean, const AudioClip& processed);

// Segmental SNR over 32 ms frames with 16 ms hop; per-frame ratios clamped
// to [-10, 35] dB; frames quieter than -40 dBFS (clean) are skipped.
double ssnr_db(const AudioClip& clean, const AudioClip& processed);

// Scale-invariant SDR with the optimal scaling projection, capped at 60 dB.
double si_sdr_db(const AudioClip& clean, const AudioClip& processed);

struct ClipScores {
  std::string id;
  double stoi = 0;
  double ssnr = 0;
  double si_sdr = 0;
};

struct EvalReport {
  std::vector<ClipScores> clips;
  ClipScores aggregate;  // arithmetic means, id "mean"

  void finalize();  // fills aggregate
  void write_tsv(const std::string& path) const;
  void write_json(const std::string& path) const;
};

}  // namespace saf
