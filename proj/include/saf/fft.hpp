// saf/fft.hpp
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

#include <complex>
#include <vector>

namespace saf {

// Mixed-radix (2/3/5) complex FFT, double precision. A plan owns precomputed
// twiddles and is immutable after construction, so it can be shared across
// threads; execute() works on caller-owned buffers.
class FftPlan {
 public:
  explicit FftPlan(int n);

  int size() const { return n_; }

  // In-place would complicate the stockham-style recursion; out-of-place is
  // plenty fast at the sizes used here (320, 512).
  void forward(const std::complex<double>* in, std::complex<double>* out) const;
  void inverse(const std::complex<double>* in, std::complex<double>* out) const;

 private:
  void transform(const std::complex<double>* in, std::complex<double>* out, bool inverse) const;
  void recurse(std::complex<double>* data, std::complex<double>* scratch, int n, int stride,
               const std::complex<double>* tw, size_t factor_idx) const;

  int n_;
  std::vector<int> factors_;
  std::vector<std::complex<double>> twiddles_fwd_;
  std::vector<std::complex<double>> twiddles_inv_;
};

}  // namespace saf
