// saf/metrics.cpp
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

#include "saf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "saf/fft.hpp"
#include "saf/wav.hpp"

namespace saf {

namespace {

// ---- STOI constants (reference procedure) ----
constexpr int kStoiRate = 10000;
constexpr int kStoiFrame = 256;
constexpr int kStoiHop = 128;
constexpr int kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr double kStoiMinFreq = 150.0;
constexpr int kStoiSegment = 30;       // frames per segment (384 ms)
constexpr double kStoiDynRange = 40.0;  // silence trim, dB
constexpr double kStoiBeta = -15.0;     // SDR clip bound, dB

// symmetric Hann (no zero endpoints)
std::vector<double> sym_hann(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * (i + 1) / (n + 1)));
  }
  return w;
}

// Removes frames whose clean energy sits more than kStoiDynRange below the
// loudest frame; both signals are rebuilt by overlap-add of the kept frames.
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const auto w = sym_hann(kStoiFrame);
  const int64_t n = static_cast<int64_t>(x.size());
  std::vector<int64_t> starts;
  for (int64_t s = 0; s + kStoiFrame <= n; s += kStoiHop) starts.push_back(s);
  SAF_CHECK(!starts.empty(), "stoi: clip too short for silence analysis");

  std::vector<double> energy_db(starts.size());
  double max_db = -1e300;
  for (size_t j = 0; j < starts.size(); ++j) {
    double e = 0;
    for (int i = 0; i < kStoiFrame; ++i) {
      const double v = x[static_cast<size_t>(starts[j] + i)] * w[static_cast<size_t>(i)];
      e += v * v;
    }
    energy_db[j] = 10.0 * std::log10(e / kStoiFrame + 1e-300);
    max_db = std::max(max_db, energy_db[j]);
  }

  std::vector<double> xs(x.size(), 0.0), ys(y.size(), 0.0);
  int64_t count = 0;
  int64_t last_end = 0;
  for (size_t j = 0; j < starts.size(); ++j) {
    if (energy_db[j] - max_db + kStoiDynRange <= 0) continue;
    const int64_t dst = count * kStoiHop;
    for (int i = 0; i < kStoiFrame; ++i) {
      xs[static_cast<size_t>(dst + i)] +=
          x[static_cast<size_t>(starts[j] + i)] * w[static_cast<size_t>(i)];
      ys[static_cast<size_t>(dst + i)] +=
          y[static_cast<size_t>(starts[j] + i)] * w[static_cast<size_t>(i)];
    }
    last_end = dst + kStoiFrame;
    ++count;
  }
  SAF_CHECK(count > 0, "stoi: clean signal is entirely silent");
  xs.resize(static_cast<size_t>(last_end));
  ys.resize(static_cast<size_t>(last_end));
  x = std::move(xs);
  y = std::move(ys);
}

// One-third-octave band map: band j collects FFT bins between the edge
// frequencies snapped to the nearest bin center.
std::vector<std::pair<int, int>> third_octave_bands() {
  std::vector<double> f(kStoiFft / 2 + 1);
  for (size_t k = 0; k < f.size(); ++k) {
    f[k] = static_cast<double>(k) * kStoiRate / kStoiFft;
  }
  auto nearest = [&](double target) {
    int best = 0;
    double bd = 1e300;
    for (size_t k = 0; k < f.size(); ++k) {
      const double d = (f[k] - target) * (f[k] - target);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(k);
      }
    }
    return best;
  };
  std::vector<std::pair<int, int>> bands;
  for (int j = 0; j < kStoiBands; ++j) {
    const double cf = kStoiMinFreq * std::pow(2.0, j / 3.0);
    const int lo = nearest(cf * std::pow(2.0, -1.0 / 6.0));
    const int hi = nearest(cf * std::pow(2.0, 1.0 / 6.0));
    bands.emplace_back(lo, hi);  // [lo, hi)
  }
  return bands;
}

// band-energy matrix: bands x frames, sqrt of summed bin powers
std::vector<std::vector<double>> band_spectrogram(const std::vector<double>& x) {
  static const FftPlan plan(kStoiFft);
  const auto w = sym_hann(kStoiFrame);
  const auto bands = third_octave_bands();
  std::vector<int64_t> starts;
  for (int64_t s = 0; s + kStoiFrame <= static_cast<int64_t>(x.size()); s += kStoiHop) {
    starts.push_back(s);
  }
  std::vector<std::vector<double>> out(kStoiBands, std::vector<double>(starts.size(), 0.0));
  std::vector<std::complex<double>> frame(kStoiFft), spec(kStoiFft);
  for (size_t m = 0; m < starts.size(); ++m) {
    for (int i = 0; i < kStoiFft; ++i) {
      frame[static_cast<size_t>(i)] =
          i < kStoiFrame
              ? x[static_cast<size_t>(starts[m] + i)] * w[static_cast<size_t>(i)]
              : 0.0;
    }
    plan.forward(frame.data(), spec.data());
    for (int j = 0; j < kStoiBands; ++j) {
      double e = 0;
      for (int k = bands[static_cast<size_t>(j)].first; k < bands[static_cast<size_t>(j)].second;
           ++k) {
        e += std::norm(spec[static_cast<size_t>(k)]);
      }
      out[static_cast<size_t>(j)][m] = std::sqrt(e);
    }
  }
  return out;
}

double correlation(const double* a, const double* b, int n) {
  double ma = 0, mb = 0;
  for (int i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (int i = 0; i < n; ++i) {
    const double xa = a[i] - ma, xb = b[i] - mb;
    num += xa * xb;
    da += xa * xa;
    db += xb * xb;
  }
  const double den = std::sqrt(da * db);
  return den > 0 ? num / den : 0.0;
}

}  // namespace

double stoi(const AudioClip& clean, const AudioClip& processed) {
  SAF_CHECK(clean.size() == processed.size(), "stoi: length mismatch (", clean.size(), " vs ",
            processed.size(), ")");
  SAF_CHECK(clean.sample_rate == kSampleRate && processed.sample_rate == kSampleRate,
            "stoi: expected ", kSampleRate, " Hz input");

  // 16 kHz -> 10 kHz
  std::vector<double> x = resample_polyphase(clean.samples, 5, 8);
  std::vector<double> y = resample_polyphase(processed.samples, 5, 8);

  remove_silent_frames(x, y);

  auto bx = band_spectrogram(x);
  auto by = band_spectrogram(y);
  const int frames = static_cast<int>(bx[0].size());
  SAF_CHECK(frames >= kStoiSegment, "stoi: fewer than ", kStoiSegment,
            " active frames (need at least 384 ms of signal)");

  const double clip_gain = std::pow(10.0, -kStoiBeta / 20.0);
  double sum = 0;
  int64_t terms = 0;
  std::vector<double> yseg(kStoiSegment);
  for (int m = kStoiSegment; m <= frames; ++m) {
    for (int j = 0; j < kStoiBands; ++j) {
      const double* xs = bx[static_cast<size_t>(j)].data() + (m - kStoiSegment);
      const double* ys = by[static_cast<size_t>(j)].data() + (m - kStoiSegment);
      double ex = 0, ey = 0;
      for (int i = 0; i < kStoiSegment; ++i) {
        ex += xs[i] * xs[i];
        ey += ys[i] * ys[i];
      }
      const double alpha = ey > 0 ? std::sqrt(ex / ey) : 0.0;
      for (int i = 0; i < kStoiSegment; ++i) {
        yseg[static_cast<size_t>(i)] = std::min(alpha * ys[i], xs[i] * (1.0 + clip_gain));
      }
      sum += correlation(xs, yseg.data(), kStoiSegment);
      ++terms;
    }
  }
  return sum / static_cast<double>(terms);
}

double ssnr_db(const AudioClip& clean, const AudioClip& processed) {
  SAF_CHECK(clean.size() == processed.size(), "ssnr: length mismatch");
  const int frame = kSampleRate * 32 / 1000;  // 512
  const int hop = frame / 2;
  const int64_t n = clean.size();
  SAF_CHECK(n >= frame, "ssnr: clip shorter than one 32 ms frame");

  double sum = 0;
  int64_t active = 0;
  for (int64_t s = 0; s + frame <= n; s += hop) {
    double ec = 0, ee = 0;
    for (int i = 0; i < frame; ++i) {
      const double c = clean.samples[static_cast<size_t>(s + i)];
      const double d = c - processed.samples[static_cast<size_t>(s + i)];
      ec += c * c;
      ee += d * d;
    }
    const double level_db = 10.0 * std::log10(ec / frame + 1e-300);
    if (level_db <= -40.0) continue;  // silence floor
    double snr;
    if (ee <= 0.0) {
      snr = 35.0;  // zero error clamps at the ceiling
    } else {
      snr = 10.0 * std::log10(ec / ee);
      snr = std::min(35.0, std::max(-10.0, snr));
    }
    sum += snr;
    ++active;
  }
  SAF_CHECK(active > 0, "ssnr: clean clip has no frames above the activity floor");
  return sum / static_cast<double>(active);
}

double si_sdr_db(const AudioClip& clean, const AudioClip& processed) {
  SAF_CHECK(clean.size() == processed.size(), "si_sdr: length mismatch");
  double dot = 0, energy = 0;
  for (int64_t i = 0; i < clean.size(); ++i) {
    dot += processed.samples[static_cast<size_t>(i)] * clean.samples[static_cast<size_t>(i)];
    energy += clean.samples[static_cast<size_t>(i)] * clean.samples[static_cast<size_t>(i)];
  }
  SAF_CHECK(energy > 0, "si_sdr: clean clip has zero energy");
  const double a = dot / energy;  // optimal scale
  double target = 0, error = 0;
  for (int64_t i = 0; i < clean.size(); ++i) {
    const double t = a * clean.samples[static_cast<size_t>(i)];
    const double e = processed.samples[static_cast<size_t>(i)] - t;
    target += t * t;
    error += e * e;
  }
  if (error <= 0 || target / error > 1e6) return 60.0;  // cap
  return std::min(60.0, 10.0 * std::log10(target / error));
}

void EvalReport::finalize() {
  aggregate = ClipScores{};
  aggregate.id = "mean";
  if (clips.empty()) return;
  for (const auto& c : clips) {
    aggregate.stoi += c.stoi;
    aggregate.ssnr += c.ssnr;
    aggregate.si_sdr += c.si_sdr;
  }
  const double inv = 1.0 / static_cast<double>(clips.size());
  aggregate.stoi *= inv;
  aggregate.ssnr *= inv;
  aggregate.si_sdr *= inv;
}

void EvalReport::write_tsv(const std::string& path) const {
  std::ofstream out(path);
  SAF_CHECK(out.good(), "cannot write report: ", path);
  out << "# clip\tstoi\tssnr_db\tsi_sdr_db\n";
  char line[256];
  auto emit = [&](const ClipScores& c) {
    std::snprintf(line, sizeof(line), "%s\t%.6f\t%.4f\t%.4f", c.id.c_str(), c.stoi, c.ssnr,
                  c.si_sdr);
    out << line << "\n";
  };
  for (const auto& c : clips) emit(c);
  emit(aggregate);
}

void EvalReport::write_json(const std::string& path) const {
  nlohmann::json j;
  j["clips"] = nlohmann::json::array();
  for (const auto& c : clips) {
    j["clips"].push_back({{"clip", c.id}, {"stoi", c.stoi}, {"ssnr_db", c.ssnr},
                          {"si_sdr_db", c.si_sdr}});
  }
  j["aggregate"] = {{"clip", aggregate.id}, {"stoi", aggregate.stoi},
                    {"ssnr_db", aggregate.ssnr}, {"si_sdr_db", aggregate.si_sdr}};
  std::ofstream out(path);
  SAF_CHECK(out.good(), "cannot write report: ", path);
  out << j.dump(2) << "\n";
}

}  // namespace saf
