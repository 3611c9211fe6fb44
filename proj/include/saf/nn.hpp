// saf/nn.hpp
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
// Parameter registry and the small layer structs the model is wired from.

#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "saf/tensor.hpp"

namespace saf {

// Named, insertion-ordered parameter collection. The creation order is the
// serialization order, so checkpoints are stable across runs.
template <class Real>
class ParamStore {
 public:
  Tensor<Real> create(const std::string& name, Shape shape, std::vector<Real> init) {
    SAF_CHECK(index_.find(name) == index_.end(), "duplicate parameter name: ", name);
    Tensor<Real> t = Tensor<Real>::from_data(std::move(shape), std::move(init), true);
    t.zero_grad();
    index_[name] = entries_.size();
    entries_.push_back({name, t});
    return t;
  }

  Tensor<Real>& get(const std::string& name) {
    auto it = index_.find(name);
    SAF_CHECK(it != index_.end(), "unknown parameter: ", name);
    return entries_[it->second].tensor;
  }

  size_t size() const { return entries_.size(); }
  const std::string& name(size_t i) const { return entries_[i].name; }
  Tensor<Real>& tensor(size_t i) { return entries_[i].tensor; }
  const Tensor<Real>& tensor(size_t i) const { return entries_[i].tensor; }

  int64_t total_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  // counts grouped by the path segment before the first '.'
  std::map<std::string, int64_t> count_by_module() const {
    std::map<std::string, int64_t> out;
    for (const auto& e : entries_) {
      const auto dot = e.name.find('.');
      out[e.name.substr(0, dot)] += e.tensor.numel();
    }
    return out;
  }

  void zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  void set_grad_enabled(bool enabled) {
    for (auto& e : entries_) e.tensor.set_requires_grad(enabled);
  }

  bool all_finite() const {
    for (const auto& e : entries_) {
      if (!e.tensor.all_finite()) return false;
    }
    return true;
  }

 private:
  struct Entry {
    std::string name;
    Tensor<Real> tensor;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

namespace init {

// Per-name substream: initialization depends only on (seed, parameter name),
// so configs that share a layer share its weights regardless of how many
// other parameters exist.
inline Rng name_rng(uint64_t seed, const std::string& name) {
  return Rng(Rng::derive(seed, Rng::hash_str(name)));
}

// Uniform fan-in scheme: bound = sqrt(1 / fan_in).
template <class Real>
std::vector<Real> uniform_fan_in(Shape shape, int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<Real> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
  return v;
}

template <class Real>
std::vector<Real> constant(Shape shape, Real value) {
  return std::vector<Real>(static_cast<size_t>(shape_numel(shape)), value);
}

}  // namespace init

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

template <class Real>
struct PointwiseConv {
  Tensor<Real> w, b;

  // with_bias == false leaves b a frozen zero vector outside the store
  // (used where a bias would be structurally redundant).
  static PointwiseConv make(ParamStore<Real>& ps, const std::string& prefix, int64_t c_in,
                            int64_t c_out, uint64_t seed, bool with_bias = true) {
    PointwiseConv l;
    Rng rng = init::name_rng(seed, prefix + ".w");
    l.w = ps.create(prefix + ".w", {c_out, c_in},
                    init::uniform_fan_in<Real>({c_out, c_in}, c_in, rng));
    if (with_bias) {
      l.b = ps.create(prefix + ".b", {c_out}, init::constant<Real>({c_out}, Real(0)));
    } else {
      l.b = Tensor<Real>::zeros({c_out});
    }
    return l;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const { return conv2d_pointwise(x, w, b); }
};

template <class Real>
struct DepthwiseConv {
  Tensor<Real> w, b;
  int dil_t = 1, dil_f = 1;

  static DepthwiseConv make(ParamStore<Real>& ps, const std::string& prefix, int64_t c, int64_t kt,
                            int64_t kf, int dil_t, int dil_f, uint64_t seed) {
    DepthwiseConv l;
    Rng rng = init::name_rng(seed, prefix + ".w");
    l.w = ps.create(prefix + ".w", {c, kt, kf},
                    init::uniform_fan_in<Real>({c, kt, kf}, kt * kf, rng));
    l.b = ps.create(prefix + ".b", {c}, init::constant<Real>({c}, Real(0)));
    l.dil_t = dil_t;
    l.dil_f = dil_f;
    return l;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    return conv2d_depthwise(x, w, b, dil_t, dil_f);
  }
};

template <class Real>
struct ChannelNorm {
  Tensor<Real> gamma, beta;
  Real eps = Real(1e-5);

  static ChannelNorm make(ParamStore<Real>& ps, const std::string& prefix, int64_t c) {
    ChannelNorm l;
    l.gamma = ps.create(prefix + ".gamma", {c}, init::constant<Real>({c}, Real(1)));
    l.beta = ps.create(prefix + ".beta", {c}, init::constant<Real>({c}, Real(0)));
    return l;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    return channel_norm(x, gamma, beta, eps);
  }
};

template <class Real>
struct PRelu {
  Tensor<Real> slope;

  static PRelu make(ParamStore<Real>& ps, const std::string& prefix, int64_t c) {
    PRelu l;
    l.slope = ps.create(prefix + ".slope", {c}, init::constant<Real>({c}, Real(0.25)));
    return l;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const { return prelu(x, slope); }
};

// pointwise conv -> channel norm -> PReLU, the encoder unit.
template <class Real>
struct ConvNormAct {
  PointwiseConv<Real> conv;
  ChannelNorm<Real> norm;
  PRelu<Real> act;

  static ConvNormAct make(ParamStore<Real>& ps, const std::string& prefix, int64_t c_in,
                          int64_t c_out, uint64_t seed) {
    ConvNormAct l;
    l.conv = PointwiseConv<Real>::make(ps, prefix + ".pw", c_in, c_out, seed);
    l.norm = ChannelNorm<Real>::make(ps, prefix + ".norm", c_out);
    l.act = PRelu<Real>::make(ps, prefix + ".prelu", c_out);
    return l;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const { return act(norm(conv(x))); }
};

// depthwise conv -> channel norm -> PReLU.
template <class Real>
struct DwNormAct {
  DepthwiseConv<Real> conv;
  ChannelNorm<Real> norm;
  PRelu<Real> act;

  static DwNormAct make(ParamStore<Real>& ps, const std::string& prefix, int64_t c, int64_t kt,
                        int64_t kf, uint64_t seed) {
    DwNormAct l;
    l.conv = DepthwiseConv<Real>::make(ps, prefix + ".dw", c, kt, kf, 1, 1, seed);
    l.norm = ChannelNorm<Real>::make(ps, prefix + ".norm", c);
    l.act = PRelu<Real>::make(ps, prefix + ".prelu", c);
    return l;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const { return act(norm(conv(x))); }
};

}  // namespace saf
