// saf/tensor.hpp
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
// Minimal dense-tensor engine with reverse-mode differentiation. Tensors are
// immutable once produced by an operator; executing an operator immediately
// computes its value and records a node whose backward closure routes
// gradients to the inputs. backward() walks the recorded graph once, in
// reverse topological order, and accumulates into the .grad buffer of every
// requires_grad tensor reachable from the loss.
//
// Layout convention: rank-3 tensors are [C, T, F], row-major, F contiguous.
// float for training/inference; double for finite-difference verification.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "saf/common.hpp"

namespace saf {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <class Real>
struct TensorImpl {
  Shape shape;
  std::vector<Real> values;
  std::vector<Real> grad;  // persistent; filled by backward() for requires_grad tensors
  bool requires_grad = false;
  bool needs_grad = false;  // true if a requires_grad tensor is upstream
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // backfn(upstream, parent_slots): accumulate d(loss)/d(parent) into the
  // given scratch buffers. A null slot means that parent does not need a
  // gradient and the op may skip it.
  std::function<void(const Real*, const std::vector<Real*>&)> backfn;
};

template <class Real>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return from_data(std::move(shape), {}, false);
  }

  static Tensor full(Shape shape, Real value) {
    auto t = zeros(std::move(shape));
    std::fill(t.impl_->values.begin(), t.impl_->values.end(), value);
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<Real> values, bool requires_grad = false) {
    auto impl = std::make_shared<TensorImpl<Real>>();
    int64_t n = shape_numel(shape);
    SAF_CHECK(n > 0, "tensor shape ", shape_str(shape), " has no elements");
    if (values.empty()) values.assign(static_cast<size_t>(n), Real(0));
    SAF_CHECK(static_cast<int64_t>(values.size()) == n, "tensor data length ", values.size(),
              " does not match shape ", shape_str(shape));
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    impl->needs_grad = requires_grad;
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

  static Tensor scalar_value(Real v) { return from_data({1}, {v}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->values.size()); }

  std::span<const Real> values() const { return impl_->values; }

  // In-place mutation is reserved for leaves (parameters, probe points);
  // operator outputs are frozen history.
  std::span<Real> mutable_values() {
    SAF_CHECK(impl_->parents.empty(), "cannot mutate an operator output in place");
    return impl_->values;
  }

  Real scalar() const {
    SAF_CHECK(numel() == 1, "expected a scalar tensor, got shape ", shape_str(shape()));
    return impl_->values[0];
  }

  Real at(std::initializer_list<int64_t> idx) const {
    SAF_CHECK(idx.size() == impl_->shape.size(), "index rank mismatch");
    int64_t off = 0;
    size_t k = 0;
    for (int64_t i : idx) {
      off = off * impl_->shape[k] + i;
      ++k;
    }
    return impl_->values[static_cast<size_t>(off)];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  bool needs_grad() const { return impl_->needs_grad; }

  void set_requires_grad(bool b) {
    SAF_CHECK(impl_->parents.empty(), "requires_grad can only be toggled on a leaf");
    impl_->requires_grad = b;
    impl_->needs_grad = b;
  }

  bool has_grad() const { return !impl_->grad.empty(); }

  std::span<const Real> grad() const {
    SAF_CHECK(has_grad(), "tensor has no gradient; call backward() first");
    return impl_->grad;
  }

  std::span<Real> mutable_grad() {
    SAF_CHECK(has_grad(), "tensor has no gradient; call backward() first");
    return impl_->grad;
  }

  void zero_grad() {
    if (impl_->requires_grad) {
      impl_->grad.assign(impl_->values.size(), Real(0));
    }
  }

  bool all_finite() const {
    for (Real v : impl_->values) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  std::shared_ptr<TensorImpl<Real>> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<Real>> impl_;

  template <class R>
  friend Tensor<R> make_node(Shape, std::vector<R>, std::vector<Tensor<R>>,
                             std::function<void(const R*, const std::vector<R*>&)>);
};

// Records an op result. When no parent carries gradient the node degenerates
// to a constant leaf and the closure is dropped.
template <class Real>
Tensor<Real> make_node(Shape shape, std::vector<Real> values, std::vector<Tensor<Real>> parents,
                       std::function<void(const Real*, const std::vector<Real*>&)> backfn) {
  Tensor<Real> out = Tensor<Real>::from_data(std::move(shape), std::move(values));
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.needs_grad();
  if (needs) {
    out.impl_->needs_grad = true;
    out.impl_->parents.reserve(parents.size());
    for (auto& p : parents) out.impl_->parents.push_back(p.impl());
    out.impl_->backfn = std::move(backfn);
  }
  return out;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <class Real>
void backward(const Tensor<Real>& loss) {
  SAF_CHECK(loss.numel() == 1, "backward() needs a scalar loss, got shape ",
            shape_str(loss.shape()));
  using Impl = TensorImpl<Real>;
  Impl* root = loss.impl().get();

  // Iterative post-order DFS over parents; `order` ends up with every
  // reachable node exactly once, producers before consumers.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> seen;
  std::vector<std::pair<Impl*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* p = node->parents[next++].get();
      if (p->needs_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Scratch gradients per node for this call; persistent .grad buffers are
  // only touched at the end so repeated backward() calls accumulate.
  std::unordered_map<Impl*, std::vector<Real>> slot;
  slot[root] = {Real(1)};

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    auto found = slot.find(node);
    if (found == slot.end()) continue;  // not reached by any gradient path
    std::vector<Real>& upstream = found->second;
    if (node->backfn) {
      std::vector<Real*> parent_slots(node->parents.size(), nullptr);
      for (size_t i = 0; i < node->parents.size(); ++i) {
        Impl* p = node->parents[i].get();
        if (!p->needs_grad) continue;
        auto [pos, inserted] = slot.try_emplace(p);
        if (inserted) pos->second.assign(p->values.size(), Real(0));
        parent_slots[i] = pos->second.data();
      }
      node->backfn(upstream.data(), parent_slots);
    }
    if (node->requires_grad) {
      if (node->grad.empty()) node->grad.assign(node->values.size(), Real(0));
      for (size_t i = 0; i < upstream.size(); ++i) node->grad[i] += upstream[i];
    }
    slot.erase(node);
  }
}

// ---------------------------------------------------------------------------
// operators
// ---------------------------------------------------------------------------

namespace ops_detail {

template <class Real>
using MatMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class Real>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline void check_rank3(const Shape& s, const char* op) {
  SAF_CHECK(s.size() == 3, op, ": expected a [C,T,F] tensor, got ", shape_str(s));
}

}  // namespace ops_detail

// y[c,t,f] = b[c] + sum_k w[c,k] x[k,t,f]  — 1x1 conv; channel mixing only.
template <class Real>
Tensor<Real> conv2d_pointwise(const Tensor<Real>& x, const Tensor<Real>& w,
                              const Tensor<Real>& b) {
  using namespace ops_detail;
  check_rank3(x.shape(), "conv2d_pointwise");
  SAF_CHECK(w.rank() == 2, "conv2d_pointwise: weight must be [C_out,C_in], got ",
            shape_str(w.shape()));
  const int64_t ci = x.dim(0), t = x.dim(1), f = x.dim(2);
  const int64_t co = w.dim(0);
  SAF_CHECK(w.dim(1) == ci, "conv2d_pointwise: weight expects ", w.dim(1),
            " input channels but x has ", ci);
  SAF_CHECK(b.rank() == 1 && b.dim(0) == co, "conv2d_pointwise: bias must be [", co, "], got ",
            shape_str(b.shape()));
  const int64_t cols = t * f;

  std::vector<Real> out(static_cast<size_t>(co * cols));
  {
    ConstMatMap<Real> W(w.values().data(), co, ci);
    ConstMatMap<Real> X(x.values().data(), ci, cols);
    MatMap<Real> Y(out.data(), co, cols);
    if (thread_count() <= 1) {
      Y.noalias() = W * X;
    } else {
      parallel_for(cols, [&](int64_t lo, int64_t hi) {
        Y.middleCols(lo, hi - lo).noalias() = W * X.middleCols(lo, hi - lo);
      });
    }
    const Real* bias = b.values().data();
    parallel_for(co, [&](int64_t lo, int64_t hi) {
      for (int64_t c = lo; c < hi; ++c) Y.row(c).array() += bias[c];
    });
  }

  auto xi = x.impl();
  auto wi = w.impl();
  return make_node<Real>(
      {co, t, f}, std::move(out), {x, w, b},
      [xi, wi, ci, co, cols](const Real* dy, const std::vector<Real*>& dp) {
        ConstMatMap<Real> dY(dy, co, cols);
        if (dp[0] != nullptr) {  // dX = W^T dY
          ConstMatMap<Real> W(wi->values.data(), co, ci);
          MatMap<Real> dX(dp[0], ci, cols);
          if (thread_count() <= 1) {
            dX.noalias() += W.transpose() * dY;
          } else {
            parallel_for(cols, [&](int64_t lo, int64_t hi) {
              dX.middleCols(lo, hi - lo).noalias() +=
                  W.transpose() * dY.middleCols(lo, hi - lo);
            });
          }
        }
        if (dp[1] != nullptr) {  // dW = dY X^T
          ConstMatMap<Real> X(xi->values.data(), ci, cols);
          MatMap<Real> dW(dp[1], co, ci);
          if (thread_count() <= 1) {
            dW.noalias() += dY * X.transpose();
          } else {
            parallel_for(co, [&](int64_t lo, int64_t hi) {
              dW.middleRows(lo, hi - lo).noalias() +=
                  dY.middleRows(lo, hi - lo) * X.transpose();
            });
          }
        }
        if (dp[2] != nullptr) {  // db = row sums of dY, strict order
          parallel_for(co, [&](int64_t lo, int64_t hi) {
            for (int64_t c = lo; c < hi; ++c) {
              const Real* row = dy + c * cols;
              Real acc = 0;
              for (int64_t i = 0; i < cols; ++i) acc += row[i];
              dp[2][c] += acc;
            }
          });
        }
      });
}

// Per-channel 2-D convolution (correlation orientation, no kernel flip),
// zero padded so the output keeps the input extents. Odd kernels only.
template <class Real>
Tensor<Real> conv2d_depthwise(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                              int dil_t = 1, int dil_f = 1) {
  using namespace ops_detail;
  check_rank3(x.shape(), "conv2d_depthwise");
  SAF_CHECK(w.rank() == 3, "conv2d_depthwise: weight must be [C,kT,kF], got ",
            shape_str(w.shape()));
  const int64_t c = x.dim(0), t = x.dim(1), f = x.dim(2);
  const int64_t kt = w.dim(1), kf = w.dim(2);
  SAF_CHECK(w.dim(0) == c, "conv2d_depthwise: weight has ", w.dim(0), " channels, x has ", c);
  SAF_CHECK(kt % 2 == 1 && kf % 2 == 1, "conv2d_depthwise: kernel extents must be odd, got ",
            kt, "x", kf);
  SAF_CHECK(b.rank() == 1 && b.dim(0) == c, "conv2d_depthwise: bias must be [", c, "]");
  SAF_CHECK(dil_t >= 1 && dil_f >= 1, "conv2d_depthwise: dilation must be >= 1");
  const int64_t ht = kt / 2, hf = kf / 2;

  std::vector<Real> out(static_cast<size_t>(c * t * f));
  const Real* xv = x.values().data();
  const Real* wv = w.values().data();
  const Real* bv = b.values().data();
  parallel_for(c, [&](int64_t clo, int64_t chi) {
    for (int64_t ch = clo; ch < chi; ++ch) {
      const Real* xc = xv + ch * t * f;
      const Real* wc = wv + ch * kt * kf;
      Real* oc = out.data() + ch * t * f;
      for (int64_t ti = 0; ti < t; ++ti) {
        Real* orow = oc + ti * f;
        for (int64_t fi = 0; fi < f; ++fi) orow[fi] = bv[ch];
        for (int64_t it = 0; it < kt; ++it) {
          int64_t src_t = ti + (it - ht) * dil_t;
          if (src_t < 0 || src_t >= t) continue;
          const Real* xrow = xc + src_t * f;
          for (int64_t jf = 0; jf < kf; ++jf) {
            const Real wk = wc[it * kf + jf];
            if (wk == Real(0)) continue;
            const int64_t off = (jf - hf) * dil_f;
            const int64_t lo = std::max<int64_t>(0, -off);
            const int64_t hi2 = std::min<int64_t>(f, f - off);
            for (int64_t fi = lo; fi < hi2; ++fi) orow[fi] += wk * xrow[fi + off];
          }
        }
      }
    }
  });

  auto xi = x.impl();
  auto wi = w.impl();
  return make_node<Real>(
      {c, t, f}, std::move(out), {x, w, b},
      [xi, wi, c, t, f, kt, kf, ht, hf, dil_t, dil_f](const Real* dy,
                                                      const std::vector<Real*>& dp) {
        parallel_for(c, [&](int64_t clo, int64_t chi) {
          for (int64_t ch = clo; ch < chi; ++ch) {
            const Real* dyc = dy + ch * t * f;
            const Real* xc = xi->values.data() + ch * t * f;
            const Real* wc = wi->values.data() + ch * kt * kf;
            if (dp[0] != nullptr) {
              Real* dxc = dp[0] + ch * t * f;
              for (int64_t ti = 0; ti < t; ++ti) {
                const Real* dyrow = dyc + ti * f;
                for (int64_t it = 0; it < kt; ++it) {
                  int64_t src_t = ti + (it - ht) * dil_t;
                  if (src_t < 0 || src_t >= t) continue;
                  Real* dxrow = dxc + src_t * f;
                  for (int64_t jf = 0; jf < kf; ++jf) {
                    const Real wk = wc[it * kf + jf];
                    if (wk == Real(0)) continue;
                    const int64_t off = (jf - hf) * dil_f;
                    const int64_t lo = std::max<int64_t>(0, -off);
                    const int64_t hi2 = std::min<int64_t>(f, f - off);
                    for (int64_t fi = lo; fi < hi2; ++fi) dxrow[fi + off] += wk * dyrow[fi];
                  }
                }
              }
            }
            if (dp[1] != nullptr) {
              // frame-outer, taps inner: the two active rows stay cached
              // across all kt*kf accumulators
              Real* dwc = dp[1] + ch * kt * kf;
              std::vector<Real> acc(static_cast<size_t>(kt * kf), Real(0));
              for (int64_t ti = 0; ti < t; ++ti) {
                const Real* dyrow = dyc + ti * f;
                for (int64_t it = 0; it < kt; ++it) {
                  int64_t src_t = ti + (it - ht) * dil_t;
                  if (src_t < 0 || src_t >= t) continue;
                  const Real* xrow = xc + src_t * f;
                  for (int64_t jf = 0; jf < kf; ++jf) {
                    const int64_t off = (jf - hf) * dil_f;
                    const int64_t lo = std::max<int64_t>(0, -off);
                    const int64_t hi2 = std::min<int64_t>(f, f - off);
                    Real a = 0;
                    for (int64_t fi = lo; fi < hi2; ++fi) a += dyrow[fi] * xrow[fi + off];
                    acc[static_cast<size_t>(it * kf + jf)] += a;
                  }
                }
              }
              for (int64_t k = 0; k < kt * kf; ++k) dwc[k] += acc[static_cast<size_t>(k)];
            }
            if (dp[2] != nullptr) {
              Real acc = 0;
              for (int64_t i = 0; i < t * f; ++i) acc += dyc[i];
              dp[2][ch] += acc;
            }
          }
        });
      });
}

// Normalize over the channel axis at each (t,f): zero mean, unit variance
// (biased), then per-channel affine.
template <class Real>
Tensor<Real> channel_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                          const Tensor<Real>& beta, Real eps = Real(1e-5)) {
  using namespace ops_detail;
  check_rank3(x.shape(), "channel_norm");
  const int64_t c = x.dim(0), t = x.dim(1), f = x.dim(2);
  SAF_CHECK(gamma.rank() == 1 && gamma.dim(0) == c, "channel_norm: gamma must be [", c, "]");
  SAF_CHECK(beta.rank() == 1 && beta.dim(0) == c, "channel_norm: beta must be [", c, "]");
  const int64_t pos = t * f;

  std::vector<Real> out(static_cast<size_t>(c * pos));
  const Real* xv = x.values().data();
  const Real* gv = gamma.values().data();
  const Real* bv = beta.values().data();

  // Channel-outer sweeps over a worker's whole frame range keep the reads
  // contiguous (the channel stride is t*f); stats live in range-sized
  // buffers.
  parallel_for(t, [&](int64_t tlo, int64_t thi) {
    const int64_t span = (thi - tlo) * f;
    std::vector<Real> mean(static_cast<size_t>(span), Real(0));
    std::vector<Real> isig(static_cast<size_t>(span), Real(0));
    const Real inv_c = Real(1) / Real(c);
    for (int64_t ch = 0; ch < c; ++ch) {
      const Real* block = xv + (ch * t + tlo) * f;
      for (int64_t i = 0; i < span; ++i) mean[static_cast<size_t>(i)] += block[i];
    }
    for (int64_t i = 0; i < span; ++i) mean[static_cast<size_t>(i)] *= inv_c;
    for (int64_t ch = 0; ch < c; ++ch) {
      const Real* block = xv + (ch * t + tlo) * f;
      for (int64_t i = 0; i < span; ++i) {
        const Real d = block[i] - mean[static_cast<size_t>(i)];
        isig[static_cast<size_t>(i)] += d * d;
      }
    }
    for (int64_t i = 0; i < span; ++i) {
      isig[static_cast<size_t>(i)] = Real(1) / std::sqrt(isig[static_cast<size_t>(i)] * inv_c + eps);
    }
    for (int64_t ch = 0; ch < c; ++ch) {
      const Real* block = xv + (ch * t + tlo) * f;
      Real* oblock = out.data() + (ch * t + tlo) * f;
      const Real g = gv[ch], be = bv[ch];
      for (int64_t i = 0; i < span; ++i) {
        oblock[i] = g * (block[i] - mean[static_cast<size_t>(i)]) * isig[static_cast<size_t>(i)] + be;
      }
    }
  });

  auto xi = x.impl();
  auto gi = gamma.impl();
  return make_node<Real>(
      {c, t, f}, std::move(out), {x, gamma, beta},
      [xi, gi, c, t, f, eps](const Real* dy, const std::vector<Real*>& dp) {
        const int64_t pos = t * f;
        const Real* xv = xi->values.data();
        const Real* gv = gi->values.data();
        const Real inv_c = Real(1) / Real(c);

        // Stats once per position into T*F buffers, channel-outer sweeps for
        // contiguous reads throughout.
        std::vector<Real> mean(static_cast<size_t>(pos), Real(0));
        std::vector<Real> isig(static_cast<size_t>(pos), Real(0));
        parallel_for(t, [&](int64_t tlo, int64_t thi) {
          const int64_t base = tlo * f;
          const int64_t span = (thi - tlo) * f;
          for (int64_t ch = 0; ch < c; ++ch) {
            const Real* block = xv + ch * pos + base;
            Real* m = mean.data() + base;
            for (int64_t i = 0; i < span; ++i) m[i] += block[i];
          }
          for (int64_t i = 0; i < span; ++i) mean[static_cast<size_t>(base + i)] *= inv_c;
          for (int64_t ch = 0; ch < c; ++ch) {
            const Real* block = xv + ch * pos + base;
            const Real* m = mean.data() + base;
            Real* s = isig.data() + base;
            for (int64_t i = 0; i < span; ++i) {
              const Real d = block[i] - m[i];
              s[i] += d * d;
            }
          }
          for (int64_t i = 0; i < span; ++i) {
            Real& s = isig[static_cast<size_t>(base + i)];
            s = Real(1) / std::sqrt(s * inv_c + eps);
          }
        });

        if (dp[0] != nullptr) {
          parallel_for(t, [&](int64_t tlo, int64_t thi) {
            const int64_t base = tlo * f;
            const int64_t span = (thi - tlo) * f;
            std::vector<Real> s1(static_cast<size_t>(span), Real(0));
            std::vector<Real> s2(static_cast<size_t>(span), Real(0));
            const Real* m = mean.data() + base;
            const Real* sg = isig.data() + base;
            // s1 = sum_c dxhat, s2 = sum_c dxhat * xhat
            for (int64_t ch = 0; ch < c; ++ch) {
              const Real* xb = xv + ch * pos + base;
              const Real* dyb = dy + ch * pos + base;
              const Real g = gv[ch];
              for (int64_t i = 0; i < span; ++i) {
                const Real dxh = dyb[i] * g;
                const Real xh = (xb[i] - m[i]) * sg[i];
                s1[static_cast<size_t>(i)] += dxh;
                s2[static_cast<size_t>(i)] += dxh * xh;
              }
            }
            for (int64_t ch = 0; ch < c; ++ch) {
              const Real* xb = xv + ch * pos + base;
              const Real* dyb = dy + ch * pos + base;
              Real* dxb = dp[0] + ch * pos + base;
              const Real g = gv[ch];
              for (int64_t i = 0; i < span; ++i) {
                const Real dxh = dyb[i] * g;
                const Real xh = (xb[i] - m[i]) * sg[i];
                dxb[i] += (dxh - inv_c * s1[static_cast<size_t>(i)] -
                           xh * inv_c * s2[static_cast<size_t>(i)]) *
                          sg[i];
              }
            }
          });
        }
        if (dp[1] != nullptr || dp[2] != nullptr) {
          parallel_for(c, [&](int64_t clo, int64_t chi) {
            for (int64_t ch = clo; ch < chi; ++ch) {
              const Real* xb = xv + ch * pos;
              const Real* dyb = dy + ch * pos;
              Real dg = 0, db = 0;
              for (int64_t i = 0; i < pos; ++i) {
                dg += dyb[i] * (xb[i] - mean[static_cast<size_t>(i)]) * isig[static_cast<size_t>(i)];
                db += dyb[i];
              }
              if (dp[1] != nullptr) dp[1][ch] += dg;
              if (dp[2] != nullptr) dp[2][ch] += db;
            }
          });
        }
      });
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> prelu(const Tensor<Real>& x, const Tensor<Real>& slope) {
  using namespace ops_detail;
  check_rank3(x.shape(), "prelu");
  const int64_t c = x.dim(0), t = x.dim(1), f = x.dim(2);
  SAF_CHECK(slope.rank() == 1 && slope.dim(0) == c, "prelu: slope must be [", c, "]");
  const int64_t pos = t * f;
  std::vector<Real> out(static_cast<size_t>(c * pos));
  const Real* xv = x.values().data();
  const Real* sv = slope.values().data();
  parallel_for(c, [&](int64_t clo, int64_t chi) {
    for (int64_t ch = clo; ch < chi; ++ch) {
      const Real s = sv[ch];
      const Real* xc = xv + ch * pos;
      Real* oc = out.data() + ch * pos;
      for (int64_t i = 0; i < pos; ++i) {
        const Real v = xc[i];
        oc[i] = v >= Real(0) ? v : s * v;
      }
    }
  });
  auto xi = x.impl();
  auto si = slope.impl();
  return make_node<Real>({c, t, f}, std::move(out), {x, slope},
                         [xi, si, c, pos](const Real* dy, const std::vector<Real*>& dp) {
                           parallel_for(c, [&](int64_t clo, int64_t chi) {
                             for (int64_t ch = clo; ch < chi; ++ch) {
                               const Real s = si->values[static_cast<size_t>(ch)];
                               const Real* xc = xi->values.data() + ch * pos;
                               const Real* dyc = dy + ch * pos;
                               if (dp[0] != nullptr) {
                                 Real* dxc = dp[0] + ch * pos;
                                 for (int64_t i = 0; i < pos; ++i) {
                                   dxc[i] += dyc[i] * (xc[i] >= Real(0) ? Real(1) : s);
                                 }
                               }
                               if (dp[1] != nullptr) {
                                 Real acc = 0;
                                 for (int64_t i = 0; i < pos; ++i) {
                                   if (xc[i] < Real(0)) acc += dyc[i] * xc[i];
                                 }
                                 dp[1][ch] += acc;
                               }
                             }
                           });
                         });
}

// Exact Gaussian-CDF form: 0.5 x (1 + erf(x/sqrt(2))).
template <class Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  const int64_t n = x.numel();
  std::vector<Real> out(static_cast<size_t>(n));
  const Real* xv = x.values().data();
  const Real inv_sqrt2 = Real(0.7071067811865475244);
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const Real v = xv[i];
      out[static_cast<size_t>(i)] =
          Real(0.5) * v * (Real(1) + Real(std::erf(static_cast<double>(v) * inv_sqrt2)));
    }
  });
  auto xi = x.impl();
  return make_node<Real>(x.shape(), std::move(out), {x},
                         [xi, n](const Real* dy, const std::vector<Real*>& dp) {
                           if (dp[0] == nullptr) return;
                           const Real inv_sqrt2 = Real(0.7071067811865475244);
                           const Real inv_sqrt2pi = Real(0.3989422804014326779);
                           parallel_for(n, [&](int64_t lo, int64_t hi) {
                             for (int64_t i = lo; i < hi; ++i) {
                               const Real v = xi->values[static_cast<size_t>(i)];
                               const Real cdf =
                                   Real(0.5) *
                                   (Real(1) + Real(std::erf(static_cast<double>(v) * inv_sqrt2)));
                               const Real pdf =
                                   inv_sqrt2pi * Real(std::exp(-0.5 * static_cast<double>(v) *
                                                               static_cast<double>(v)));
                               dp[0][i] += dy[i] * (cdf + v * pdf);
                             }
                           });
                         });
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  const int64_t n = x.numel();
  std::vector<Real> out(static_cast<size_t>(n));
  const Real* xv = x.values().data();
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const Real v = xv[i];
      if (v >= Real(0)) {
        out[static_cast<size_t>(i)] = Real(1) / (Real(1) + std::exp(-v));
      } else {
        const Real e = std::exp(v);
        out[static_cast<size_t>(i)] = e / (Real(1) + e);
      }
    }
  });
  Tensor<Real> result = make_node<Real>(x.shape(), std::move(out), {x}, nullptr);
  // Backward uses the output values; capture a raw pointer to avoid a
  // shared_ptr cycle through the node's own closure.
  if (result.needs_grad()) {
    TensorImpl<Real>* self = result.impl().get();
    result.impl()->backfn = [self, n](const Real* dy, const std::vector<Real*>& dp) {
      if (dp[0] == nullptr) return;
      parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
          const Real y = self->values[static_cast<size_t>(i)];
          dp[0][i] += dy[i] * y * (Real(1) - y);
        }
      });
    };
  }
  return result;
}

template <class Real>
Tensor<Real> tanh_op(const Tensor<Real>& x) {
  const int64_t n = x.numel();
  std::vector<Real> out(static_cast<size_t>(n));
  const Real* xv = x.values().data();
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) out[static_cast<size_t>(i)] = std::tanh(xv[i]);
  });
  Tensor<Real> result = make_node<Real>(x.shape(), std::move(out), {x}, nullptr);
  if (result.needs_grad()) {
    TensorImpl<Real>* self = result.impl().get();
    result.impl()->backfn = [self, n](const Real* dy, const std::vector<Real*>& dp) {
      if (dp[0] == nullptr) return;
      parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
          const Real y = self->values[static_cast<size_t>(i)];
          dp[0][i] += dy[i] * (Real(1) - y * y);
        }
      });
    };
  }
  return result;
}

// Stable softmax along one axis.
template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, int axis) {
  const int r = x.rank();
  SAF_CHECK(axis >= 0 && axis < r, "softmax: axis ", axis, " out of range for rank ", r);
  const Shape& s = x.shape();
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= s[static_cast<size_t>(i)];
  const int64_t len = s[static_cast<size_t>(axis)];

  std::vector<Real> out(static_cast<size_t>(x.numel()));
  const Real* xv = x.values().data();
  parallel_for(outer, [&](int64_t olo, int64_t ohi) {
    for (int64_t o = olo; o < ohi; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = o * len * inner + in;
        Real mx = xv[base];
        for (int64_t k = 1; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
        Real sum = 0;
        for (int64_t k = 0; k < len; ++k) {
          const Real e = std::exp(xv[base + k * inner] - mx);
          out[static_cast<size_t>(base + k * inner)] = e;
          sum += e;
        }
        const Real inv = Real(1) / sum;
        for (int64_t k = 0; k < len; ++k) out[static_cast<size_t>(base + k * inner)] *= inv;
      }
    }
  });
  Tensor<Real> result = make_node<Real>(x.shape(), std::move(out), {x}, nullptr);
  if (result.needs_grad()) {
    TensorImpl<Real>* self = result.impl().get();
    result.impl()->backfn = [self, outer, inner, len](const Real* dy,
                                                      const std::vector<Real*>& dp) {
      if (dp[0] == nullptr) return;
      parallel_for(outer, [&](int64_t olo, int64_t ohi) {
        for (int64_t o = olo; o < ohi; ++o) {
          for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * len * inner + in;
            Real dot = 0;
            for (int64_t k = 0; k < len; ++k) {
              const int64_t idx = base + k * inner;
              dot += dy[idx] * self->values[static_cast<size_t>(idx)];
            }
            for (int64_t k = 0; k < len; ++k) {
              const int64_t idx = base + k * inner;
              dp[0][idx] += self->values[static_cast<size_t>(idx)] * (dy[idx] - dot);
            }
          }
        }
      });
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// elementwise — shapes must match exactly; the only broadcast is scalar*tensor
// via scale()/add_scalar().
// ---------------------------------------------------------------------------

namespace ops_detail {

template <class Real>
void check_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  SAF_CHECK(a.shape() == b.shape(), op, ": shape mismatch ", shape_str(a.shape()), " vs ",
            shape_str(b.shape()));
}

}  // namespace ops_detail

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  ops_detail::check_same_shape(a, b, "add");
  const int64_t n = a.numel();
  std::vector<Real> out(static_cast<size_t>(n));
  const Real* av = a.values().data();
  const Real* bv = b.values().data();
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) out[static_cast<size_t>(i)] = av[i] + bv[i];
  });
  return make_node<Real>(a.shape(), std::move(out), {a, b},
                         [n](const Real* dy, const std::vector<Real*>& dp) {
                           for (int s = 0; s < 2; ++s) {
                             if (dp[s] == nullptr) continue;
                             Real* d = dp[s];
                             parallel_for(n, [&](int64_t lo, int64_t hi) {
                               for (int64_t i = lo; i < hi; ++i) d[i] += dy[i];
                             });
                           }
                         });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  ops_detail::check_same_shape(a, b, "sub");
  const int64_t n = a.numel();
  std::vector<Real> out(static_cast<size_t>(n));
  const Real* av = a.values().data();
  const Real* bv = b.values().data();
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) out[static_cast<size_t>(i)] = av[i] - bv[i];
  });
  return make_node<Real>(a.shape(), std::move(out), {a, b},
                         [n](const Real* dy, const std::vector<Real*>& dp) {
                           if (dp[0] != nullptr) {
                             parallel_for(n, [&](int64_t lo, int64_t hi) {
                               for (int64_t i = lo; i < hi; ++i) dp[0][i] += dy[i];
                             });
                           }
                           if (dp[1] != nullptr) {
                             parallel_for(n, [&](int64_t lo, int64_t hi) {
                               for (int64_t i = lo; i < hi; ++i) dp[1][i] -= dy[i];
                             });
                           }
                         });
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  ops_detail::check_same_shape(a, b, "mul");
  const int64_t n = a.numel();
  std::vector<Real> out(static_cast<size_t>(n));
  const Real* av = a.values().data();
  const Real* bv = b.values().data();
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) out[static_cast<size_t>(i)] = av[i] * bv[i];
  });
  auto ai = a.impl();
  auto bi = b.impl();
  return make_node<Real>(a.shape(), std::move(out), {a, b},
                         [ai, bi, n](const Real* dy, const std::vector<Real*>& dp) {
                           if (dp[0] != nullptr) {
                             parallel_for(n, [&](int64_t lo, int64_t hi) {
                               for (int64_t i = lo; i < hi; ++i) {
                                 dp[0][i] += dy[i] * bi->values[static_cast<size_t>(i)];
                               }
                             });
                           }
                           if (dp[1] != nullptr) {
                             parallel_for(n, [&](int64_t lo, int64_t hi) {
                               for (int64_t i = lo; i < hi; ++i) {
                                 dp[1][i] += dy[i] * ai->values[static_cast<size_t>(i)];
                               }
                             });
                           }
                         });
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real k) {
  const int64_t n = a.numel();
  std::vector<Real> out(static_cast<size_t>(n));
  const Real* av = a.values().data();
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) out[static_cast<size_t>(i)] = av[i] * k;
  });
  return make_node<Real>(a.shape(), std::move(out), {a},
                         [k, n](const Real* dy, const std::vector<Real*>& dp) {
                           if (dp[0] == nullptr) return;
                           parallel_for(n, [&](int64_t lo, int64_t hi) {
                             for (int64_t i = lo; i < hi; ++i) dp[0][i] += dy[i] * k;
                           });
                         });
}

template <class Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real k) {
  const int64_t n = a.numel();
  std::vector<Real> out(static_cast<size_t>(n));
  const Real* av = a.values().data();
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = av[i] + k;
  return make_node<Real>(a.shape(), std::move(out), {a},
                         [n](const Real* dy, const std::vector<Real*>& dp) {
                           if (dp[0] == nullptr) return;
                           for (int64_t i = 0; i < n; ++i) dp[0][i] += dy[i];
                         });
}

template <class Real>
Tensor<Real> sqrt_op(const Tensor<Real>& a) {
  const int64_t n = a.numel();
  std::vector<Real> out(static_cast<size_t>(n));
  const Real* av = a.values().data();
  for (int64_t i = 0; i < n; ++i) {
    SAF_CHECK(av[i] >= Real(0), "sqrt_op: negative input ", static_cast<double>(av[i]),
              " at index ", i);
    out[static_cast<size_t>(i)] = std::sqrt(av[i]);
  }
  Tensor<Real> result = make_node<Real>(a.shape(), std::move(out), {a}, nullptr);
  if (result.needs_grad()) {
    TensorImpl<Real>* self = result.impl().get();
    result.impl()->backfn = [self, n](const Real* dy, const std::vector<Real*>& dp) {
      if (dp[0] == nullptr) return;
      for (int64_t i = 0; i < n; ++i) {
        const Real y = self->values[static_cast<size_t>(i)];
        dp[0][i] += dy[i] * Real(0.5) / std::max(y, Real(1e-20));
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// structural
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& xs, int axis) {
  SAF_CHECK(!xs.empty(), "concat: no inputs");
  const int r = xs[0].rank();
  SAF_CHECK(axis >= 0 && axis < r, "concat: axis ", axis, " out of range for rank ", r);
  Shape out_shape = xs[0].shape();
  int64_t axis_total = 0;
  for (const auto& x : xs) {
    SAF_CHECK(x.rank() == r, "concat: rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i == axis) continue;
      SAF_CHECK(x.dim(i) == out_shape[static_cast<size_t>(i)],
                "concat: extent mismatch on axis ", i, ": ", x.dim(i), " vs ",
                out_shape[static_cast<size_t>(i)]);
    }
    axis_total += x.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[static_cast<size_t>(i)];

  std::vector<Real> out(static_cast<size_t>(shape_numel(out_shape)));
  std::vector<int64_t> lens;
  lens.reserve(xs.size());
  int64_t off = 0;
  for (const auto& x : xs) {
    const int64_t len = x.dim(axis);
    lens.push_back(len);
    const Real* xv = x.values().data();
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(out.data() + (o * axis_total + off) * inner, xv + o * len * inner,
                  static_cast<size_t>(len * inner) * sizeof(Real));
    }
    off += len;
  }

  return make_node<Real>(
      out_shape, std::move(out), xs,
      [lens, outer, inner, axis_total](const Real* dy, const std::vector<Real*>& dp) {
        int64_t off2 = 0;
        for (size_t s = 0; s < lens.size(); ++s) {
          const int64_t len = lens[s];
          if (dp[s] != nullptr) {
            for (int64_t o = 0; o < outer; ++o) {
              const Real* src = dy + (o * axis_total + off2) * inner;
              Real* dst = dp[s] + o * len * inner;
              for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
          }
          off2 += len;
        }
      });
}

// pads[i] = {before, after} per axis.
template <class Real>
Tensor<Real> pad(const Tensor<Real>& x, const std::vector<std::pair<int64_t, int64_t>>& pads,
                 Real value = Real(0)) {
  const int r = x.rank();
  SAF_CHECK(static_cast<int>(pads.size()) == r, "pad: need one (before,after) pair per axis");
  Shape out_shape(x.shape());
  for (int i = 0; i < r; ++i) {
    SAF_CHECK(pads[static_cast<size_t>(i)].first >= 0 && pads[static_cast<size_t>(i)].second >= 0,
              "pad: negative pad");
    out_shape[static_cast<size_t>(i)] +=
        pads[static_cast<size_t>(i)].first + pads[static_cast<size_t>(i)].second;
  }
  const int64_t out_n = shape_numel(out_shape);
  std::vector<Real> out(static_cast<size_t>(out_n), value);

  // Walk source positions; compute destination offsets incrementally.
  const Shape& in_shape = x.shape();
  std::vector<int64_t> out_strides(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) {
    out_strides[static_cast<size_t>(i)] =
        out_strides[static_cast<size_t>(i + 1)] * out_shape[static_cast<size_t>(i + 1)];
  }
  const int64_t in_n = x.numel();
  const int64_t last_in = in_shape[static_cast<size_t>(r - 1)];
  const Real* xv = x.values().data();

  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  int64_t src = 0;
  while (src < in_n) {
    int64_t dst = 0;
    for (int i = 0; i < r; ++i) {
      dst += (idx[static_cast<size_t>(i)] + pads[static_cast<size_t>(i)].first) *
             out_strides[static_cast<size_t>(i)];
    }
    std::memcpy(out.data() + dst, xv + src, static_cast<size_t>(last_in) * sizeof(Real));
    src += last_in;
    for (int i = r - 2; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < in_shape[static_cast<size_t>(i)]) break;
      idx[static_cast<size_t>(i)] = 0;
    }
    if (r == 1) break;
  }

  Shape in_copy = in_shape;
  return make_node<Real>(
      out_shape, std::move(out), {x},
      [pads, out_strides, in_copy, r, last_in, in_n](const Real* dy,
                                                     const std::vector<Real*>& dp) {
        if (dp[0] == nullptr) return;
        std::vector<int64_t> idx2(static_cast<size_t>(r), 0);
        int64_t src = 0;
        while (src < in_n) {
          int64_t dst = 0;
          for (int i = 0; i < r; ++i) {
            dst += (idx2[static_cast<size_t>(i)] + pads[static_cast<size_t>(i)].first) *
                   out_strides[static_cast<size_t>(i)];
          }
          for (int64_t i = 0; i < last_in; ++i) dp[0][src + i] += dy[dst + i];
          src += last_in;
          for (int i = r - 2; i >= 0; --i) {
            if (++idx2[static_cast<size_t>(i)] < in_copy[static_cast<size_t>(i)]) break;
            idx2[static_cast<size_t>(i)] = 0;
          }
          if (r == 1) break;
        }
      });
}

// ranges[i] = {begin, end} (end exclusive) per axis.
template <class Real>
Tensor<Real> slice(const Tensor<Real>& x, const std::vector<std::pair<int64_t, int64_t>>& ranges) {
  const int r = x.rank();
  SAF_CHECK(static_cast<int>(ranges.size()) == r, "slice: need one (begin,end) pair per axis");
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const auto [b, e] = ranges[static_cast<size_t>(i)];
    SAF_CHECK(b >= 0 && b < e && e <= x.dim(i), "slice: bad range [", b, ",", e, ") on axis ", i,
              " of extent ", x.dim(i));
    out_shape[static_cast<size_t>(i)] = e - b;
  }

  std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) {
    in_strides[static_cast<size_t>(i)] =
        in_strides[static_cast<size_t>(i + 1)] * x.dim(i + 1);
  }
  const int64_t out_n = shape_numel(out_shape);
  const int64_t last_out = out_shape[static_cast<size_t>(r - 1)];
  std::vector<Real> out(static_cast<size_t>(out_n));
  const Real* xv = x.values().data();

  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  int64_t dst = 0;
  while (dst < out_n) {
    int64_t src = 0;
    for (int i = 0; i < r; ++i) {
      src += (idx[static_cast<size_t>(i)] + ranges[static_cast<size_t>(i)].first) *
             in_strides[static_cast<size_t>(i)];
    }
    std::memcpy(out.data() + dst, xv + src, static_cast<size_t>(last_out) * sizeof(Real));
    dst += last_out;
    for (int i = r - 2; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
      idx[static_cast<size_t>(i)] = 0;
    }
    if (r == 1) break;
  }

  Shape out_copy = out_shape;
  return make_node<Real>(
      out_shape, std::move(out), {x},
      [ranges, in_strides, out_copy, r, last_out, out_n](const Real* dy,
                                                         const std::vector<Real*>& dp) {
        if (dp[0] == nullptr) return;
        std::vector<int64_t> idx2(static_cast<size_t>(r), 0);
        int64_t dst = 0;
        while (dst < out_n) {
          int64_t src = 0;
          for (int i = 0; i < r; ++i) {
            src += (idx2[static_cast<size_t>(i)] + ranges[static_cast<size_t>(i)].first) *
                   in_strides[static_cast<size_t>(i)];
          }
          for (int64_t i = 0; i < last_out; ++i) dp[0][src + i] += dy[dst + i];
          dst += last_out;
          for (int i = r - 2; i >= 0; --i) {
            if (++idx2[static_cast<size_t>(i)] < out_copy[static_cast<size_t>(i)]) break;
            idx2[static_cast<size_t>(i)] = 0;
          }
          if (r == 1) break;
        }
      });
}

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape new_shape) {
  SAF_CHECK(shape_numel(new_shape) == x.numel(), "reshape: ", shape_str(x.shape()),
            " cannot become ", shape_str(new_shape));
  std::vector<Real> out(x.values().begin(), x.values().end());
  const int64_t n = x.numel();
  return make_node<Real>(std::move(new_shape), std::move(out), {x},
                         [n](const Real* dy, const std::vector<Real*>& dp) {
                           if (dp[0] == nullptr) return;
                           for (int64_t i = 0; i < n; ++i) dp[0][i] += dy[i];
                         });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> mean_all(const Tensor<Real>& x) {
  const int64_t n = x.numel();
  SAF_CHECK(n > 0, "mean_all: empty tensor");
  Real acc = 0;
  const Real* xv = x.values().data();
  for (int64_t i = 0; i < n; ++i) acc += xv[i];
  const Real inv = Real(1) / Real(n);
  return make_node<Real>({1}, {acc * inv}, {x},
                         [n, inv](const Real* dy, const std::vector<Real*>& dp) {
                           if (dp[0] == nullptr) return;
                           const Real g = dy[0] * inv;
                           for (int64_t i = 0; i < n; ++i) dp[0][i] += g;
                         });
}

template <class Real>
Tensor<Real> sum_sq(const Tensor<Real>& x) {
  const int64_t n = x.numel();
  SAF_CHECK(n > 0, "sum_sq: empty tensor");
  Real acc = 0;
  const Real* xv = x.values().data();
  for (int64_t i = 0; i < n; ++i) acc += xv[i] * xv[i];
  auto xi = x.impl();
  return make_node<Real>({1}, {acc}, {x},
                         [xi, n](const Real* dy, const std::vector<Real*>& dp) {
                           if (dp[0] == nullptr) return;
                           const Real g = dy[0];
                           for (int64_t i = 0; i < n; ++i) {
                             dp[0][i] += g * Real(2) * xi->values[static_cast<size_t>(i)];
                           }
                         });
}

// ---------------------------------------------------------------------------
// local frequency attention (fused). Scores use a window of `window` bins
// around each frequency, scaled by 1/sqrt(C); edges softmax over the in-range
// neighbors only. q, k, v: [C,T,F].
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> local_attention_window(const Tensor<Real>& q, const Tensor<Real>& k,
                                    const Tensor<Real>& v, int window) {
  using namespace ops_detail;
  check_rank3(q.shape(), "local_attention_window");
  check_same_shape(q, k, "local_attention_window");
  check_same_shape(q, v, "local_attention_window");
  SAF_CHECK(window >= 1 && window % 2 == 1, "local_attention_window: window must be odd, got ",
            window);
  const int64_t c = q.dim(0), t = q.dim(1), f = q.dim(2);
  SAF_CHECK(f >= 2, "local_attention_window: need at least 2 frequency bins");
  const int h = window / 2;
  const Real inv_scale = Real(1) / Real(std::sqrt(static_cast<double>(c)));

  std::vector<Real> out(static_cast<size_t>(c * t * f));
  const Real* qv = q.values().data();
  const Real* kv = k.values().data();
  const Real* vv = v.values().data();
  const int64_t ct_stride = t * f;

  auto run_forward = [&](int64_t tlo, int64_t thi) {
    std::vector<Real> wts(static_cast<size_t>(window));
    for (int64_t ti = tlo; ti < thi; ++ti) {
      for (int64_t fi = 0; fi < f; ++fi) {
        const int jlo = static_cast<int>(std::max<int64_t>(-h, -fi));
        const int jhi = static_cast<int>(std::min<int64_t>(h, f - 1 - fi));
        Real mx = -std::numeric_limits<Real>::infinity();
        for (int j = jlo; j <= jhi; ++j) {
          Real e = 0;
          for (int64_t ch = 0; ch < c; ++ch) {
            e += qv[ch * ct_stride + ti * f + fi] * kv[ch * ct_stride + ti * f + fi + j];
          }
          e *= inv_scale;
          wts[static_cast<size_t>(j + h)] = e;
          mx = std::max(mx, e);
        }
        Real sum = 0;
        for (int j = jlo; j <= jhi; ++j) {
          Real& e = wts[static_cast<size_t>(j + h)];
          e = std::exp(e - mx);
          sum += e;
        }
        const Real inv = Real(1) / sum;
        for (int64_t ch = 0; ch < c; ++ch) {
          Real acc = 0;
          for (int j = jlo; j <= jhi; ++j) {
            acc += wts[static_cast<size_t>(j + h)] * vv[ch * ct_stride + ti * f + fi + j];
          }
          out[static_cast<size_t>(ch * ct_stride + ti * f + fi)] = acc * inv;
        }
      }
    }
  };
  parallel_for(t, run_forward);

  auto qi = q.impl();
  auto ki = k.impl();
  auto vi = v.impl();
  return make_node<Real>(
      q.shape(), std::move(out), {q, k, v},
      [qi, ki, vi, c, t, f, h, window, inv_scale, ct_stride](const Real* dy,
                                                             const std::vector<Real*>& dp) {
        const Real* qv = qi->values.data();
        const Real* kv = ki->values.data();
        const Real* vv = vi->values.data();
        // Rows of t are independent; f±h scatter stays inside a row.
        parallel_for(t, [&](int64_t tlo, int64_t thi) {
          std::vector<Real> wts(static_cast<size_t>(window));
          std::vector<Real> dw(static_cast<size_t>(window));
          for (int64_t ti = tlo; ti < thi; ++ti) {
            for (int64_t fi = 0; fi < f; ++fi) {
              const int jlo = static_cast<int>(std::max<int64_t>(-h, -fi));
              const int jhi = static_cast<int>(std::min<int64_t>(h, f - 1 - fi));
              Real mx = -std::numeric_limits<Real>::infinity();
              for (int j = jlo; j <= jhi; ++j) {
                Real e = 0;
                for (int64_t ch = 0; ch < c; ++ch) {
                  e += qv[ch * ct_stride + ti * f + fi] * kv[ch * ct_stride + ti * f + fi + j];
                }
                e *= inv_scale;
                wts[static_cast<size_t>(j + h)] = e;
                mx = std::max(mx, e);
              }
              Real sum = 0;
              for (int j = jlo; j <= jhi; ++j) {
                Real& e = wts[static_cast<size_t>(j + h)];
                e = std::exp(e - mx);
                sum += e;
              }
              const Real inv = Real(1) / sum;
              for (int j = jlo; j <= jhi; ++j) wts[static_cast<size_t>(j + h)] *= inv;

              // dV and d(weights)
              Real wdot = 0;
              for (int j = jlo; j <= jhi; ++j) {
                Real dwj = 0;
                for (int64_t ch = 0; ch < c; ++ch) {
                  const Real g = dy[ch * ct_stride + ti * f + fi];
                  dwj += g * vv[ch * ct_stride + ti * f + fi + j];
                  if (dp[2] != nullptr) {
                    dp[2][ch * ct_stride + ti * f + fi + j] +=
                        g * wts[static_cast<size_t>(j + h)];
                  }
                }
                dw[static_cast<size_t>(j + h)] = dwj;
                wdot += dwj * wts[static_cast<size_t>(j + h)];
              }
              // softmax backward, then into q and k
              if (dp[0] != nullptr || dp[1] != nullptr) {
                for (int j = jlo; j <= jhi; ++j) {
                  const Real de = wts[static_cast<size_t>(j + h)] *
                                  (dw[static_cast<size_t>(j + h)] - wdot) * inv_scale;
                  if (de == Real(0)) continue;
                  for (int64_t ch = 0; ch < c; ++ch) {
                    if (dp[0] != nullptr) {
                      dp[0][ch * ct_stride + ti * f + fi] +=
                          de * kv[ch * ct_stride + ti * f + fi + j];
                    }
                    if (dp[1] != nullptr) {
                      dp[1][ch * ct_stride + ti * f + fi + j] +=
                          de * qv[ch * ct_stride + ti * f + fi];
                    }
                  }
                }
              }
            }
          }
        });
      });
}

// ---------------------------------------------------------------------------
// fused conv+PReLU variants. Same contracts as the unfused pair; they skip one
// full intermediate tensor, which matters in the deep temporal stack. The
// input sign is recovered from the output (slope > 0 preserves sign).
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> conv2d_pointwise_prelu(const Tensor<Real>& x, const Tensor<Real>& w,
                                    const Tensor<Real>& b, const Tensor<Real>& slope) {
  using namespace ops_detail;
  check_rank3(x.shape(), "conv2d_pointwise_prelu");
  const int64_t ci = x.dim(0), t = x.dim(1), f = x.dim(2);
  const int64_t co = w.dim(0);
  SAF_CHECK(w.rank() == 2 && w.dim(1) == ci, "conv2d_pointwise_prelu: bad weight shape");
  SAF_CHECK(b.rank() == 1 && b.dim(0) == co, "conv2d_pointwise_prelu: bad bias shape");
  SAF_CHECK(slope.rank() == 1 && slope.dim(0) == co, "conv2d_pointwise_prelu: bad slope shape");
  // The fused backward recovers the pre-activation sign from the output,
  // which needs strictly positive slopes; otherwise take the exact two-op
  // path.
  for (Real s : slope.values()) {
    if (!(s > Real(0))) return prelu(conv2d_pointwise(x, w, b), slope);
  }
  const int64_t cols = t * f;

  std::vector<Real> out(static_cast<size_t>(co * cols));
  {
    ConstMatMap<Real> W(w.values().data(), co, ci);
    ConstMatMap<Real> X(x.values().data(), ci, cols);
    MatMap<Real> Y(out.data(), co, cols);
    if (thread_count() <= 1) {
      Y.noalias() = W * X;
    } else {
      parallel_for(cols, [&](int64_t lo, int64_t hi) {
        Y.middleCols(lo, hi - lo).noalias() = W * X.middleCols(lo, hi - lo);
      });
    }
    const Real* bias = b.values().data();
    const Real* sl = slope.values().data();
    parallel_for(co, [&](int64_t clo, int64_t chi) {
      for (int64_t cc = clo; cc < chi; ++cc) {
        Real* row = out.data() + cc * cols;
        const Real bb = bias[cc], ss = sl[cc];
        for (int64_t i = 0; i < cols; ++i) {
          const Real v = row[i] + bb;
          row[i] = v >= Real(0) ? v : ss * v;
        }
      }
    });
  }

  auto xi = x.impl();
  auto wi = w.impl();
  auto si = slope.impl();
  Tensor<Real> result = make_node<Real>({co, t, f}, std::move(out), {x, w, b, slope}, nullptr);
  if (result.needs_grad()) {
    TensorImpl<Real>* self = result.impl().get();
    result.impl()->backfn = [xi, wi, si, self, ci, co, cols](const Real* dy,
                                                             const std::vector<Real*>& dp) {
      // d(pre-activation) from output sign, then the plain pointwise backward.
      std::vector<Real> dpre(static_cast<size_t>(co * cols));
      const Real* sl = si->values.data();
      parallel_for(co, [&](int64_t clo, int64_t chi) {
        for (int64_t cc = clo; cc < chi; ++cc) {
          const Real ss = sl[cc];
          const Real* yrow = self->values.data() + cc * cols;
          const Real* dyrow = dy + cc * cols;
          Real* drow = dpre.data() + cc * cols;
          for (int64_t i = 0; i < cols; ++i) {
            drow[i] = dyrow[i] * (yrow[i] >= Real(0) ? Real(1) : ss);
          }
        }
      });
      ConstMatMap<Real> dPre(dpre.data(), co, cols);
      if (dp[0] != nullptr) {
        ConstMatMap<Real> W(wi->values.data(), co, ci);
        MatMap<Real> dX(dp[0], ci, cols);
        if (thread_count() <= 1) {
          dX.noalias() += W.transpose() * dPre;
        } else {
          parallel_for(cols, [&](int64_t lo, int64_t hi) {
            dX.middleCols(lo, hi - lo).noalias() += W.transpose() * dPre.middleCols(lo, hi - lo);
          });
        }
      }
      if (dp[1] != nullptr) {
        ConstMatMap<Real> X(xi->values.data(), ci, cols);
        MatMap<Real> dW(dp[1], co, ci);
        if (thread_count() <= 1) {
          dW.noalias() += dPre * X.transpose();
        } else {
          parallel_for(co, [&](int64_t lo, int64_t hi) {
            dW.middleRows(lo, hi - lo).noalias() +=
                dPre.middleRows(lo, hi - lo) * X.transpose();
          });
        }
      }
      if (dp[2] != nullptr) {
        parallel_for(co, [&](int64_t lo, int64_t hi) {
          for (int64_t cc = lo; cc < hi; ++cc) {
            const Real* row = dpre.data() + cc * cols;
            Real acc = 0;
            for (int64_t i = 0; i < cols; ++i) acc += row[i];
            dp[2][cc] += acc;
          }
        });
      }
      if (dp[3] != nullptr) {
        const Real* sl2 = si->values.data();
        parallel_for(co, [&](int64_t lo, int64_t hi) {
          for (int64_t cc = lo; cc < hi; ++cc) {
            const Real ss = sl2[cc];
            const Real* yrow = self->values.data() + cc * cols;
            const Real* dyrow = dy + cc * cols;
            Real acc = 0;
            for (int64_t i = 0; i < cols; ++i) {
              if (yrow[i] < Real(0)) acc += dyrow[i] * (yrow[i] / ss);
            }
            dp[3][cc] += acc;
          }
        });
      }
    };
  }
  return result;
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

// Central finite differences of a scalar-valued function against the
// recorded backward pass. Returns the max relative error over the checked
// coordinates with denominator max(|analytic|, |numeric|, 1e-8).
template <class Real, class F>
Real gradient_check(F f, Tensor<Real>& x, Real eps, int64_t max_coords = -1,
                    uint64_t seed = 0x5AFC0DE) {
  SAF_CHECK(x.requires_grad(), "gradient_check: probe tensor must require grad");
  x.zero_grad();
  Tensor<Real> y = f(x);
  SAF_CHECK(y.numel() == 1, "gradient_check: function must be scalar-valued");
  backward(y);
  std::vector<Real> analytic(x.grad().begin(), x.grad().end());

  const int64_t n = x.numel();
  std::vector<int64_t> coords;
  if (max_coords < 0 || max_coords >= n) {
    coords.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
  } else {
    Rng rng(seed);
    std::unordered_set<int64_t> taken;
    while (static_cast<int64_t>(coords.size()) < max_coords) {
      int64_t i = rng.below(n);
      if (taken.insert(i).second) coords.push_back(i);
    }
  }

  Real worst = 0;
  auto vals = x.mutable_values();
  x.set_requires_grad(false);  // probe evaluations need no graph
  for (int64_t i : coords) {
    const Real keep = vals[static_cast<size_t>(i)];
    vals[static_cast<size_t>(i)] = keep + eps;
    const Real up = f(x).scalar();
    vals[static_cast<size_t>(i)] = keep - eps;
    const Real dn = f(x).scalar();
    vals[static_cast<size_t>(i)] = keep;
    const Real numeric = (up - dn) / (Real(2) * eps);
    const Real a = analytic[static_cast<size_t>(i)];
    const Real denom = std::max({std::abs(a), std::abs(numeric), Real(1e-8)});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  x.set_requires_grad(true);
  return worst;
}

}  // namespace saf
