// tests/testutil.hpp
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
// Reference implementations used as oracles. These are deliberately naive
// (triple loops, direct DFT) and kept independent of the library kernels
// they check.

#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "saf/common.hpp"
#include "saf/tensor.hpp"

namespace saf::testref {

// Naive pointwise conv: out[c,t,f] = b[c] + sum_k w[c,k] x[k,t,f].
template <class Real>
std::vector<Real> ref_pointwise(const std::vector<Real>& x, const std::vector<Real>& w,
                                const std::vector<Real>& b, int64_t ci, int64_t co, int64_t t,
                                int64_t f) {
  std::vector<Real> out(static_cast<size_t>(co * t * f), Real(0));
  for (int64_t c = 0; c < co; ++c) {
    for (int64_t ti = 0; ti < t; ++ti) {
      for (int64_t fi = 0; fi < f; ++fi) {
        Real acc = b[static_cast<size_t>(c)];
        for (int64_t k = 0; k < ci; ++k) {
          acc += w[static_cast<size_t>(c * ci + k)] *
                 x[static_cast<size_t>((k * t + ti) * f + fi)];
        }
        out[static_cast<size_t>((c * t + ti) * f + fi)] = acc;
      }
    }
  }
  return out;
}

// Naive depthwise conv, zero padded, correlation orientation.
template <class Real>
std::vector<Real> ref_depthwise(const std::vector<Real>& x, const std::vector<Real>& w,
                                const std::vector<Real>& b, int64_t c, int64_t t, int64_t f,
                                int64_t kt, int64_t kf, int dt, int df) {
  std::vector<Real> out(static_cast<size_t>(c * t * f), Real(0));
  const int64_t ht = kt / 2, hf = kf / 2;
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t ti = 0; ti < t; ++ti) {
      for (int64_t fi = 0; fi < f; ++fi) {
        Real acc = b[static_cast<size_t>(ch)];
        for (int64_t it = 0; it < kt; ++it) {
          for (int64_t jf = 0; jf < kf; ++jf) {
            const int64_t st = ti + (it - ht) * dt;
            const int64_t sf = fi + (jf - hf) * df;
            if (st < 0 || st >= t || sf < 0 || sf >= f) continue;
            acc += w[static_cast<size_t>((ch * kt + it) * kf + jf)] *
                   x[static_cast<size_t>((ch * t + st) * f + sf)];
          }
        }
        out[static_cast<size_t>((ch * t + ti) * f + fi)] = acc;
      }
    }
  }
  return out;
}

// Naive channel norm.
template <class Real>
std::vector<Real> ref_channel_norm(const std::vector<Real>& x, const std::vector<Real>& g,
                                   const std::vector<Real>& be, int64_t c, int64_t t, int64_t f,
                                   Real eps) {
  std::vector<Real> out(x.size());
  for (int64_t ti = 0; ti < t; ++ti) {
    for (int64_t fi = 0; fi < f; ++fi) {
      Real mean = 0;
      for (int64_t ch = 0; ch < c; ++ch) mean += x[static_cast<size_t>((ch * t + ti) * f + fi)];
      mean /= Real(c);
      Real var = 0;
      for (int64_t ch = 0; ch < c; ++ch) {
        const Real d = x[static_cast<size_t>((ch * t + ti) * f + fi)] - mean;
        var += d * d;
      }
      var /= Real(c);
      const Real isig = Real(1) / std::sqrt(var + eps);
      for (int64_t ch = 0; ch < c; ++ch) {
        const size_t idx = static_cast<size_t>((ch * t + ti) * f + fi);
        out[idx] = g[static_cast<size_t>(ch)] * (x[idx] - mean) * isig + be[static_cast<size_t>(ch)];
      }
    }
  }
  return out;
}

// Direct O(N^2) DFT, the oracle for the FFT plan.
inline std::vector<std::complex<double>> ref_dft(const std::vector<std::complex<double>>& x,
                                                 bool inverse = false) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (size_t j = 0; j < n; ++j) {
      const double ang = sign * 2.0 * M_PI * static_cast<double>(k * j % n) / static_cast<double>(n);
      acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

template <class Real>
Tensor<Real> random_tensor(Shape shape, Rng& rng, bool requires_grad = false, double lo = -1.0,
                           double hi = 1.0) {
  std::vector<Real> vals(static_cast<size_t>(shape_numel(shape)));
  for (auto& v : vals) v = static_cast<Real>(rng.uniform(lo, hi));
  return Tensor<Real>::from_data(std::move(shape), std::move(vals), requires_grad);
}

// Deterministic synthetic "speech-like" clip: a few enveloped partials.
inline std::vector<double> synth_tone_clip(int64_t samples, int sample_rate, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(static_cast<size_t>(samples), 0.0);
  const double freqs[3] = {220.0 + 40.0 * rng.uniform(), 440.0 + 80.0 * rng.uniform(),
                           880.0 + 160.0 * rng.uniform()};
  const double amps[3] = {0.35, 0.22, 0.12};
  const double phase[3] = {2 * M_PI * rng.uniform(), 2 * M_PI * rng.uniform(),
                           2 * M_PI * rng.uniform()};
  for (int64_t i = 0; i < samples; ++i) {
    const double tt = static_cast<double>(i) / sample_rate;
    const double env = 0.6 + 0.4 * std::sin(2 * M_PI * 3.0 * tt);
    double v = 0;
    for (int p = 0; p < 3; ++p) v += amps[p] * std::sin(2 * M_PI * freqs[p] * tt + phase[p]);
    out[static_cast<size_t>(i)] = env * v;
  }
  return out;
}

inline std::vector<double> white_noise_clip(int64_t samples, uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  std::vector<double> out(static_cast<size_t>(samples));
  for (auto& v : out) v = amp * rng.normal();
  return out;
}

}  // namespace saf::testref
