// tests/test_metrics.cpp
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "saf/metrics.hpp"
#include "testutil.hpp"

using namespace saf;
using namespace saf::testref;

namespace {

AudioClip speech_like(int64_t samples, uint64_t seed) {
  AudioClip c;
  c.samples = synth_tone_clip(samples, kSampleRate, seed);
  auto n = white_noise_clip(samples, seed + 7, 0.02);
  for (size_t i = 0; i < c.samples.size(); ++i) c.samples[i] += n[i];
  return c;
}

// Mixes at the requested SNR; returns the pair (peak normalization, when it
// fires, scales both sides, so callers must compare against .clean).
MixResult noisy_pair(const AudioClip& x, double snr_db, uint64_t seed) {
  AudioClip noise;
  noise.samples = white_noise_clip(x.size(), seed);
  return mix_at_snr(x, noise, snr_db);
}

AudioClip add_noise(const AudioClip& x, double snr_db, uint64_t seed) {
  return noisy_pair(x, snr_db, seed).noisy;
}

}  // namespace

TEST_CASE("stoi: identity, monotonicity, gain invariance, preconditions") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto x = speech_like(16000, Rng::derive(0x5701, seed));
    CHECK(std::abs(stoi(x, x) - 1.0) < 1e-6);
  }

  auto x = speech_like(16000, 0x51);
  auto strong = add_noise(x, -10.0, 0x52);
  auto weak = add_noise(x, 20.0, 0x53);
  CHECK(stoi(x, strong) < stoi(x, weak));

  // global gain on the processed side cancels in the normalization
  auto noisy = add_noise(x, 5.0, 0x54);
  AudioClip scaled = noisy;
  for (auto& v : scaled.samples) v *= 3.0;
  CHECK(std::abs(stoi(x, noisy) - stoi(x, scaled)) < 1e-6);

  AudioClip shorter;
  shorter.samples.assign(8000, 0.1);
  CHECK_THROWS_AS(stoi(x, shorter), SafError);  // length mismatch

  AudioClip brief = speech_like(3000, 0x55);  // < 384 ms
  CHECK_THROWS_AS(stoi(brief, brief), SafError);
}

TEST_CASE("ssnr: clamp behavior and hand cases") {
  auto x = speech_like(16000, 0x61);

  // identical signals clamp at the 35 dB ceiling
  CHECK(ssnr_db(x, x) == doctest::Approx(35.0));

  // zero output: error equals clean, every active frame contributes 0 dB
  AudioClip zero;
  zero.samples.assign(x.samples.size(), 0.0);
  CHECK(ssnr_db(x, zero) == doctest::Approx(0.0));

  // per-frame equal-power noise lands near 0 dB
  AudioClip equal_noise = x;
  {
    Rng rng(0x62);
    const int frame = 512;
    for (int64_t s = 0; s + frame <= x.size(); s += frame) {
      double ec = 0;
      for (int i = 0; i < frame; ++i) ec += x.samples[static_cast<size_t>(s + i)] *
                                            x.samples[static_cast<size_t>(s + i)];
      std::vector<double> n(frame);
      double en = 0;
      for (auto& v : n) {
        v = rng.normal();
        en += v * v;
      }
      const double g = std::sqrt(ec / en);
      for (int i = 0; i < frame; ++i) {
        equal_noise.samples[static_cast<size_t>(s + i)] += g * n[static_cast<size_t>(i)];
      }
    }
  }
  CHECK(std::abs(ssnr_db(x, equal_noise)) < 1.0);

  // extremely strong noise clamps at -10 (added directly: peak
  // normalization would rescale the reference too)
  AudioClip drowned = x;
  {
    auto n = white_noise_clip(x.size(), 0x63, 10.0);
    for (size_t i = 0; i < drowned.samples.size(); ++i) drowned.samples[i] += n[i];
  }
  CHECK(ssnr_db(x, drowned) == doctest::Approx(-10.0));

  // monotone in noise power
  double prev = -1e9;
  for (double snr : {-20.0, -5.0, 5.0, 15.0, 30.0}) {
    auto pair = noisy_pair(x, snr, 0x64);
    const double v = ssnr_db(pair.clean, pair.noisy);
    CHECK(v >= prev);
    prev = v;
  }

  AudioClip silent;
  silent.samples.assign(16000, 0.0);
  CHECK_THROWS_AS(ssnr_db(silent, x), SafError);
}

TEST_CASE("si_sdr: scale invariance and projections") {
  auto x = speech_like(16000, 0x71);

  AudioClip x3 = x;
  for (auto& v : x3.samples) v *= 3.0;
  CHECK(si_sdr_db(x, x3) == doctest::Approx(60.0));  // cap: scale is not distortion

  AudioClip neg = x;
  for (auto& v : neg.samples) v = -v;
  CHECK(si_sdr_db(x, neg) == doctest::Approx(60.0));  // sign is a scale too

  // orthogonal equal-power noise: exactly 0 dB up to sampling effects
  AudioClip proc = x;
  {
    // Gram-Schmidt a noise vector against x, then match its power to x
    std::vector<double> n = white_noise_clip(x.size(), 0x72);
    double dot = 0, ex = 0;
    for (int64_t i = 0; i < x.size(); ++i) {
      dot += n[static_cast<size_t>(i)] * x.samples[static_cast<size_t>(i)];
      ex += x.samples[static_cast<size_t>(i)] * x.samples[static_cast<size_t>(i)];
    }
    double en = 0;
    for (int64_t i = 0; i < x.size(); ++i) {
      n[static_cast<size_t>(i)] -= dot / ex * x.samples[static_cast<size_t>(i)];
      en += n[static_cast<size_t>(i)] * n[static_cast<size_t>(i)];
    }
    const double g = std::sqrt(ex / en);
    for (int64_t i = 0; i < x.size(); ++i) {
      proc.samples[static_cast<size_t>(i)] += g * n[static_cast<size_t>(i)];
    }
  }
  CHECK(std::abs(si_sdr_db(x, proc)) < 1e-6);

  // invariance under positive scaling of proc
  auto noisy = add_noise(x, 8.0, 0x73);
  const double base = si_sdr_db(x, noisy);
  AudioClip noisy_scaled = noisy;
  for (auto& v : noisy_scaled.samples) v *= 2.5;
  CHECK(std::abs(si_sdr_db(x, noisy_scaled) - base) < 1e-9);

  AudioClip silent;
  silent.samples.assign(x.samples.size(), 0.0);
  CHECK_THROWS_AS(si_sdr_db(silent, x), SafError);
}

TEST_CASE("eval report: aggregate means and writers") {
  EvalReport report;
  Rng rng(0x81);
  for (int i = 0; i < 7; ++i) {
    ClipScores s;
    s.id = "clip" + std::to_string(i);
    s.stoi = rng.uniform(0.5, 1.0);
    s.ssnr = rng.uniform(-5, 20);
    s.si_sdr = rng.uniform(-5, 30);
    report.clips.push_back(s);
  }
  report.finalize();
  double mean_stoi = 0;
  for (const auto& c : report.clips) mean_stoi += c.stoi;
  mean_stoi /= 7.0;
  CHECK(std::abs(report.aggregate.stoi - mean_stoi) < 1e-9);

  const std::string dir = "/tmp/saf_test_metrics";
  std::filesystem::create_directories(dir);
  report.write_tsv(dir + "/report.tsv");
  report.write_json(dir + "/report.json");

  // one data row per clip plus the aggregate
  std::ifstream in(dir + "/report.tsv");
  std::string line;
  int64_t data_rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') ++data_rows;
  }
  CHECK(data_rows == 8);

  std::ifstream jin(dir + "/report.json");
  std::string jtext((std::istreambuf_iterator<char>(jin)), std::istreambuf_iterator<char>());
  CHECK(jtext.find("\"aggregate\"") != std::string::npos);
  CHECK(jtext.find("clip3") != std::string::npos);
}
