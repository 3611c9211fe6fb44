// saf/wav.cpp
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

#include "saf/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace saf {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

template <class T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

template <class T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

double i0(double x) {  // modified Bessel, series form
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

}  // namespace

std::vector<double> resample_polyphase(const std::vector<double>& x, int up, int down) {
  SAF_CHECK(up >= 1 && down >= 1, "resample: factors must be positive");
  if (up == down) return x;
  const int64_t n = static_cast<int64_t>(x.size());
  const int64_t out_n = (n * up + down - 1) / down;

  // Windowed-sinc prototype at the up-sampled rate. Cutoff at the narrower
  // Nyquist; Kaiser beta 9 gives ~90 dB stopband.
  const int max_ud = std::max(up, down);
  const int half = 16 * max_ud;           // zero crossings * max factor
  const int taps = 2 * half + 1;
  const double cutoff = 0.5 / max_ud;     // cycles per upsampled sample
  const double beta = 9.0;
  const double i0b = i0(beta);
  std::vector<double> h(static_cast<size_t>(taps));
  for (int i = 0; i < taps; ++i) {
    const double m = static_cast<double>(i - half);
    const double sinc = m == 0.0 ? 2.0 * cutoff
                                 : std::sin(2.0 * M_PI * cutoff * m) / (M_PI * m);
    const double r = m / static_cast<double>(half);
    const double w = i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[static_cast<size_t>(i)] = static_cast<double>(up) * sinc * w;
  }

  // y[m] = sum_k h[k] x_up[m*down - k + half], where x_up has up-1 zeros
  // between input samples; only indices divisible by `up` contribute.
  std::vector<double> out(static_cast<size_t>(out_n), 0.0);
  for (int64_t m = 0; m < out_n; ++m) {
    const int64_t center = m * down;  // position at the upsampled rate
    double acc = 0.0;
    // x_up index j = center - k + half must satisfy j = i*up
    const int64_t j_lo = center - half < 0 ? 0 : center - half;
    const int64_t j_hi = center + half;
    int64_t i = (j_lo + up - 1) / up;  // first input index in range
    for (int64_t j = i * up; j <= j_hi; j += up, ++i) {
      if (i >= n) break;
      const int64_t k = center - j + half;
      if (k < 0 || k >= taps) continue;
      acc += h[static_cast<size_t>(k)] * x[static_cast<size_t>(i)];
    }
    out[static_cast<size_t>(m)] = acc;
  }
  return out;
}

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SAF_CHECK(in.good(), "cannot open WAV file: ", path);

  char riff[4], wave[4];
  in.read(riff, 4);
  (void)read_le<uint32_t>(in);
  in.read(wave, 4);
  SAF_CHECK(in.good() && std::memcmp(riff, "RIFF", 4) == 0 && std::memcmp(wave, "WAVE", 4) == 0,
            path, ": not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<char> payload;
  bool have_fmt = false, have_data = false;

  while (in.good()) {
    char id[4];
    in.read(id, 4);
    if (!in.good()) break;
    const uint32_t size = read_le<uint32_t>(in);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = read_le<uint16_t>(in);
      channels = read_le<uint16_t>(in);
      rate = read_le<uint32_t>(in);
      (void)read_le<uint32_t>(in);  // byte rate
      (void)read_le<uint16_t>(in);  // block align
      bits = read_le<uint16_t>(in);
      int64_t remaining = static_cast<int64_t>(size) - 16;
      if (format == kFormatExtensible && remaining >= 8) {
        (void)read_le<uint16_t>(in);                     // extension size
        (void)read_le<uint16_t>(in);                     // valid bits
        (void)read_le<uint32_t>(in);                     // channel mask
        format = read_le<uint16_t>(in);                  // subformat GUID leads with the tag
        remaining -= 10;
      }
      if (remaining > 0) in.seekg(remaining, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      payload.resize(size);
      in.read(payload.data(), static_cast<std::streamsize>(size));
      have_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
    if (have_fmt && have_data) break;
  }

  SAF_CHECK(have_fmt && have_data, path, ": missing fmt or data chunk");
  SAF_CHECK(channels == 1, path, ": expected mono audio, got ", channels, " channels");
  SAF_CHECK(rate == 16000 || rate == 48000, path, ": unsupported sample rate ", rate,
            " (need 16000 or 48000)");

  std::vector<double> samples;
  if (format == kFormatPcm && bits == 16) {
    const size_t count = payload.size() / 2;
    samples.resize(count);
    const int16_t* src = reinterpret_cast<const int16_t*>(payload.data());
    for (size_t i = 0; i < count; ++i) samples[i] = static_cast<double>(src[i]) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    const size_t count = payload.size() / 4;
    samples.resize(count);
    const float* src = reinterpret_cast<const float*>(payload.data());
    for (size_t i = 0; i < count; ++i) samples[i] = static_cast<double>(src[i]);
  } else {
    fail(path, ": unsupported WAV encoding (format ", format, ", ", bits,
         " bits); need PCM-16 or float-32");
  }
  SAF_CHECK(!samples.empty(), path, ": empty audio payload");

  AudioClip clip;
  clip.sample_rate = kSampleRate;
  if (rate == 48000) {
    clip.samples = resample_polyphase(samples, 1, 3);
  } else {
    clip.samples = std::move(samples);
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  SAF_CHECK(clip.sample_rate == kSampleRate, "write_wav: expected ", kSampleRate, " Hz");
  SAF_CHECK(!clip.samples.empty(), "write_wav: empty clip");
  std::ofstream out(path, std::ios::binary);
  SAF_CHECK(out.good(), "cannot create WAV file: ", path);

  const uint32_t data_bytes = static_cast<uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  write_le<uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<uint32_t>(out, 16);
  write_le<uint16_t>(out, kFormatPcm);
  write_le<uint16_t>(out, 1);
  write_le<uint32_t>(out, kSampleRate);
  write_le<uint32_t>(out, kSampleRate * 2);
  write_le<uint16_t>(out, 2);
  write_le<uint16_t>(out, 16);
  out.write("data", 4);
  write_le<uint32_t>(out, data_bytes);
  for (double v : clip.samples) {
    const double scaled = std::round(v * 32768.0);
    const int32_t clamped = static_cast<int32_t>(std::min(32767.0, std::max(-32768.0, scaled)));
    write_le<int16_t>(out, static_cast<int16_t>(clamped));
  }
  SAF_CHECK(out.good(), "failed writing WAV file: ", path);
}

}  // namespace saf
