// saf/dsp.cpp
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

#include "saf/dsp.hpp"

#include <algorithm>
#include <cmath>

#include "saf/fft.hpp"

namespace saf {

namespace {

// Periodic Hann, w[n] = 0.5 (1 - cos(2 pi n / N)).
const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kWindowLen);
    for (int n = 0; n < kWindowLen; ++n) {
      v[static_cast<size_t>(n)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * n / kWindowLen));
    }
    return v;
  }();
  return w;
}

const FftPlan& plan320() {
  static const FftPlan plan(kFftLen);
  return plan;
}

}  // namespace

int64_t stft_frame_count(int64_t n) {
  SAF_CHECK(n >= kWindowLen, "clip of ", n, " samples is shorter than one ", kWindowLen,
            "-sample analysis window");
  return (n - kWindowLen) / kHopLen + 1;
}

int64_t stft_padded_length(int64_t n) {
  const int64_t full = std::max<int64_t>(n, kWindowLen);
  const int64_t t = (full - kWindowLen + kHopLen - 1) / kHopLen + 1;
  return kWindowLen + (t - 1) * kHopLen;
}

ComplexSpectrogram stft(const AudioClip& clip) {
  SAF_CHECK(!clip.samples.empty(), "stft: empty clip");
  SAF_CHECK(clip.sample_rate == kSampleRate, "stft: expected ", kSampleRate, " Hz, got ",
            clip.sample_rate);
  const int64_t n = clip.size();
  const int64_t t = stft_frame_count(n);

  ComplexSpectrogram spec;
  spec.frames = t;
  spec.bins = kFreqBins;
  spec.data.resize(static_cast<size_t>(t * kFreqBins));

  const auto& win = hann_window();
  std::vector<std::complex<double>> frame(kFftLen), transformed(kFftLen);
  for (int64_t ti = 0; ti < t; ++ti) {
    const double* src = clip.samples.data() + ti * kHopLen;
    for (int i = 0; i < kWindowLen; ++i) {
      frame[static_cast<size_t>(i)] = src[i] * win[static_cast<size_t>(i)];
    }
    plan320().forward(frame.data(), transformed.data());
    for (int f = 0; f < kFreqBins; ++f) spec.at(ti, f) = transformed[static_cast<size_t>(f)];
  }
  return spec;
}

AudioClip istft(const ComplexSpectrogram& spec, int64_t length) {
  SAF_CHECK(spec.bins == kFreqBins, "istft: grid has ", spec.bins, " bins, expected ", kFreqBins);
  SAF_CHECK(spec.frames >= 1, "istft: empty spectrogram");
  const int64_t covered = kWindowLen + (spec.frames - 1) * kHopLen;

  std::vector<double> acc(static_cast<size_t>(covered), 0.0);
  std::vector<double> wsum(static_cast<size_t>(covered), 0.0);
  const auto& win = hann_window();

  std::vector<std::complex<double>> full(kFftLen), time_frame(kFftLen);
  for (int64_t ti = 0; ti < spec.frames; ++ti) {
    for (int f = 0; f < kFreqBins; ++f) full[static_cast<size_t>(f)] = spec.at(ti, f);
    for (int f = kFreqBins; f < kFftLen; ++f) {
      full[static_cast<size_t>(f)] = std::conj(spec.at(ti, kFftLen - f));
    }
    plan320().inverse(full.data(), time_frame.data());
    double* dst = acc.data() + ti * kHopLen;
    double* wdst = wsum.data() + ti * kHopLen;
    for (int i = 0; i < kWindowLen; ++i) {
      const double w = win[static_cast<size_t>(i)];
      dst[i] += w * time_frame[static_cast<size_t>(i)].real();
      wdst[i] += w * w;
    }
  }

  AudioClip out;
  out.sample_rate = kSampleRate;
  out.samples.assign(static_cast<size_t>(length), 0.0);
  const int64_t copy = std::min(length, covered);
  for (int64_t i = 0; i < copy; ++i) {
    const double w = wsum[static_cast<size_t>(i)];
    out.samples[static_cast<size_t>(i)] = w > 1e-12 ? acc[static_cast<size_t>(i)] / w : 0.0;
  }
  return out;
}

Grid compress(const Grid& mag, double c) {
  Grid out = Grid::zeros(mag.frames, mag.bins);
  for (size_t i = 0; i < mag.data.size(); ++i) {
    SAF_CHECK(mag.data[i] >= 0.0, "compress: negative magnitude ", mag.data[i]);
    out.data[i] = std::pow(mag.data[i], c);
  }
  return out;
}

Grid decompress(const Grid& mag, double c) {
  Grid out = Grid::zeros(mag.frames, mag.bins);
  for (size_t i = 0; i < mag.data.size(); ++i) {
    SAF_CHECK(mag.data[i] >= 0.0, "decompress: negative magnitude ", mag.data[i]);
    out.data[i] = std::pow(mag.data[i], 1.0 / c);
  }
  return out;
}

SpectraBundle make_bundle(const AudioClip& clip) {
  const ComplexSpectrogram spec = stft(clip);
  SpectraBundle b;
  b.frames = spec.frames;
  b.bins = spec.bins;
  b.mag = Grid::zeros(spec.frames, spec.bins);
  b.theta = Grid::zeros(spec.frames, spec.bins);
  b.real_part = Grid::zeros(spec.frames, spec.bins);
  b.imag_part = Grid::zeros(spec.frames, spec.bins);
  for (int64_t t = 0; t < spec.frames; ++t) {
    for (int f = 0; f < spec.bins; ++f) {
      const std::complex<double> v = spec.at(t, f);
      const double m_lin = std::abs(v);
      const double m = std::pow(m_lin, kCompressExp);
      const double th = m_lin > 0.0 ? std::atan2(v.imag(), v.real()) : 0.0;
      b.mag.at(t, f) = m;
      b.theta.at(t, f) = th;
      b.real_part.at(t, f) = m * std::cos(th);
      b.imag_part.at(t, f) = m * std::sin(th);
    }
  }
  return b;
}

TargetSpectra make_targets(const AudioClip& clean) {
  const SpectraBundle b = make_bundle(clean);
  TargetSpectra t;
  t.frames = b.frames;
  t.bins = b.bins;
  t.mag = b.mag;
  t.real_part = b.real_part;
  t.imag_part = b.imag_part;
  return t;
}

MixResult mix_at_snr(const AudioClip& clean, const AudioClip& noise, double snr_db) {
  SAF_CHECK(!clean.samples.empty(), "mix_at_snr: empty clean clip");
  SAF_CHECK(!noise.samples.empty(), "mix_at_snr: empty noise clip");
  const int64_t n = clean.size();

  // Loop or crop the noise to the clean length.
  std::vector<double> noise_fit(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    noise_fit[static_cast<size_t>(i)] =
        noise.samples[static_cast<size_t>(i % noise.size())];
  }

  double p_clean = 0, p_noise = 0;
  for (double v : clean.samples) p_clean += v * v;
  for (double v : noise_fit) p_noise += v * v;
  p_clean /= static_cast<double>(n);
  p_noise /= static_cast<double>(n);
  SAF_CHECK(p_clean > 0.0, "mix_at_snr: clean clip has zero power");
  SAF_CHECK(p_noise > 0.0, "mix_at_snr: noise clip has zero power");

  const double g = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));

  MixResult r;
  r.noise_gain = g;
  r.peak_scale = 1.0;
  r.clean = clean;
  r.noisy.sample_rate = clean.sample_rate;
  r.noisy.samples.resize(static_cast<size_t>(n));
  double peak = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double v = clean.samples[static_cast<size_t>(i)] + g * noise_fit[static_cast<size_t>(i)];
    r.noisy.samples[static_cast<size_t>(i)] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 1.0) {
    // Keep the pair aligned: the same scale goes on mixture and target.
    r.peak_scale = 1.0 / peak;
    for (auto& v : r.noisy.samples) v *= r.peak_scale;
    for (auto& v : r.clean.samples) v *= r.peak_scale;
  }
  return r;
}

ComplexSpectrogram spectra_to_complex(const Grid& real_part, const Grid& imag_part, double c) {
  SAF_CHECK(real_part.frames == imag_part.frames && real_part.bins == imag_part.bins,
            "spectra_to_complex: grid mismatch");
  ComplexSpectrogram spec;
  spec.frames = real_part.frames;
  spec.bins = real_part.bins;
  spec.data.resize(static_cast<size_t>(spec.frames * spec.bins));
  for (int64_t t = 0; t < spec.frames; ++t) {
    for (int f = 0; f < spec.bins; ++f) {
      const double re = real_part.at(t, f);
      const double im = imag_part.at(t, f);
      const double m_comp = std::sqrt(re * re + im * im);
      const double m_lin = std::pow(m_comp, 1.0 / c);
      if (m_comp > 0.0) {
        const double s = m_lin / m_comp;
        spec.at(t, f) = {re * s, im * s};
      } else {
        spec.at(t, f) = {0.0, 0.0};
      }
    }
  }
  return spec;
}

}  // namespace saf
