// saf/fft.cpp
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

#include "saf/fft.hpp"

#include <cmath>

#include "saf/common.hpp"

namespace saf {

namespace {

using cplx = std::complex<double>;

// Decimation-in-time, generic butterfly. Subtransforms of stride*r input land
// in out[q*m ..]; the combine reads all r values per k before writing.
void fft_recurse(cplx* out, const cplx* in, int n, int in_stride, const int* factors,
                 const cplx* tw, int tw_stride, int total_n) {
  const int r = *factors;
  const int m = n / r;

  if (m == 1) {
    for (int i = 0; i < n; ++i) out[i] = in[static_cast<size_t>(i) * in_stride];
  } else {
    for (int q = 0; q < r; ++q) {
      fft_recurse(out + static_cast<size_t>(q) * m, in + static_cast<size_t>(q) * in_stride, m,
                  in_stride * r, factors + 1, tw, tw_stride * r, total_n);
    }
  }

  cplx t[5];
  for (int k = 0; k < m; ++k) {
    for (int q = 0; q < r; ++q) {
      const int idx = (q * k * tw_stride) % total_n;
      t[q] = out[static_cast<size_t>(q) * m + k] * tw[idx];
    }
    for (int q2 = 0; q2 < r; ++q2) {
      cplx acc = t[0];
      for (int q = 1; q < r; ++q) {
        // W_r^{q q2} = W_N^{q q2 N / r}
        const int idx = static_cast<int>((static_cast<int64_t>(q) * q2 % r) *
                                         (total_n / r));
        acc += t[q] * tw[idx];
      }
      out[static_cast<size_t>(q2) * m + k] = acc;
    }
  }
}

}  // namespace

FftPlan::FftPlan(int n) : n_(n) {
  SAF_CHECK(n >= 1, "FftPlan: size must be positive, got ", n);
  int rem = n;
  for (int r : {5, 3, 2}) {
    while (rem % r == 0) {
      factors_.push_back(r);
      rem /= r;
    }
  }
  SAF_CHECK(rem == 1, "FftPlan: size ", n, " has a prime factor other than 2, 3, 5");
  if (factors_.empty()) factors_.push_back(1);

  twiddles_fwd_.resize(static_cast<size_t>(n));
  twiddles_inv_.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double ang = -2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n);
    twiddles_fwd_[static_cast<size_t>(i)] = {std::cos(ang), std::sin(ang)};
    twiddles_inv_[static_cast<size_t>(i)] = {std::cos(ang), -std::sin(ang)};
  }
}

void FftPlan::transform(const std::complex<double>* in, std::complex<double>* out,
                        bool inverse) const {
  if (n_ == 1) {
    out[0] = in[0];
    return;
  }
  const cplx* tw = inverse ? twiddles_inv_.data() : twiddles_fwd_.data();
  fft_recurse(out, in, n_, 1, factors_.data(), tw, 1, n_);
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n_);
    for (int i = 0; i < n_; ++i) out[i] *= inv;
  }
}

void FftPlan::forward(const std::complex<double>* in, std::complex<double>* out) const {
  transform(in, out, false);
}

void FftPlan::inverse(const std::complex<double>* in, std::complex<double>* out) const {
  transform(in, out, true);
}

}  // namespace saf
