// saf/training.hpp
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
// Dataset assembly, Adam, the training loop, and checkpoint lifecycle.
// Everything is reproducible from (seed, configs, data): shuffles and crop
// offsets are pure functions of the seed and the epoch/step indices.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "saf/checkpoint.hpp"
#include "saf/model.hpp"

namespace saf {

struct TrainConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.95;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 50;
  int batch_size = 4;
  double max_clip_seconds = 3.0;
  uint64_t seed = 0x5AF;
  std::vector<double> snr_levels = {0.0, 5.0, 10.0, 15.0};
  int64_t max_steps = 0;  // 0 = no cap

  void validate() const {
    SAF_CHECK(learning_rate > 0, "train config: learning_rate must be positive");
    SAF_CHECK(beta1 > 0 && beta1 < 1, "train config: beta1 must be in (0,1)");
    SAF_CHECK(beta2 > 0 && beta2 < 1, "train config: beta2 must be in (0,1)");
    SAF_CHECK(adam_eps > 0, "train config: adam_eps must be positive");
    SAF_CHECK(epochs >= 1, "train config: epochs must be >= 1");
    SAF_CHECK(batch_size >= 1, "train config: batch_size must be >= 1");
    SAF_CHECK(max_clip_seconds > 0, "train config: max_clip_seconds must be positive");
    SAF_CHECK(max_steps >= 0, "train config: max_steps must be >= 0");
  }

  std::string to_key_values() const;
};

// One manifest record: either a ready-made noisy/clean pair or a mix spec.
struct DatasetEntry {
  enum class Kind { kPair, kMix };
  Kind kind = Kind::kPair;
  std::string path_a;  // noisy (pair) or clean (mix)
  std::string path_b;  // clean (pair) or noise (mix)
  double snr_db = 0.0;
};

// Tab-separated manifest: `noisy<TAB>clean` or `clean<TAB>noise<TAB>snr_db`.
std::vector<DatasetEntry> load_manifest(const std::string& path);

class PairedDataset {
 public:
  explicit PairedDataset(std::vector<DatasetEntry> entries) : entries_(std::move(entries)) {
    SAF_CHECK(!entries_.empty(), "dataset: no entries");
  }

  size_t size() const { return entries_.size(); }
  const DatasetEntry& entry(size_t i) const { return entries_[i]; }

  // Deterministic Fisher-Yates order, a pure function of (seed, epoch).
  std::vector<size_t> epoch_order(uint64_t seed, int64_t epoch) const;

 private:
  std::vector<DatasetEntry> entries_;
};

struct BatchElement {
  SpectraBundle noisy;    // grids padded to the batch max T
  TargetSpectra target;
  int64_t valid_frames = 0;  // frames that carry real signal
};

struct PreparedBatch {
  std::vector<BatchElement> elements;
  int64_t padded_frames = 0;
};

// Loads, mixes, crops (seeded random offset) and bundles the requested
// entries. Unreadable files are skipped with a warning on stderr; an empty
// result is an error.
PreparedBatch prepare_batch(const PairedDataset& dataset, const std::vector<size_t>& indices,
                            const TrainConfig& cfg, int64_t epoch, int64_t step);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <class Real>
class Adam {
 public:
  explicit Adam(const TrainConfig& cfg) : cfg_(cfg) {}

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }

  // Standard bias-corrected update, in place, deterministic parameter order.
  void step(ParamStore<Real>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(static_cast<size_t>(params.tensor(i).numel()), Real(0));
        v_[i].assign(static_cast<size_t>(params.tensor(i).numel()), Real(0));
      }
    }
    SAF_CHECK(m_.size() == params.size(), "adam: parameter count changed mid-run");
    ++t_;
    const Real lr = static_cast<Real>(cfg_.learning_rate);
    const Real b1 = static_cast<Real>(cfg_.beta1);
    const Real b2 = static_cast<Real>(cfg_.beta2);
    const Real eps = static_cast<Real>(cfg_.adam_eps);
    const Real bc1 = Real(1) - static_cast<Real>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const Real bc2 = Real(1) - static_cast<Real>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<Real>& p = params.tensor(i);
      SAF_CHECK(p.has_grad(), "adam: missing gradient for parameter ", params.name(i));
      auto g = p.grad();
      auto w = p.mutable_values();
      Real* m = m_[i].data();
      Real* v = v_[i].data();
      const int64_t n = p.numel();
      for (int64_t j = 0; j < n; ++j) {
        m[j] = b1 * m[j] + (Real(1) - b1) * g[static_cast<size_t>(j)];
        v[j] = b2 * v[j] + (Real(1) - b2) * g[static_cast<size_t>(j)] * g[static_cast<size_t>(j)];
        const Real mhat = m[j] / bc1;
        const Real vhat = v[j] / bc2;
        w[static_cast<size_t>(j)] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  // Sidecar serialization: moments as arrays, step count in the text field.
  CheckpointData export_state(const ParamStore<Real>& params) const;
  void import_state(const CheckpointData& data, const ParamStore<Real>& params);

 private:
  TrainConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

template <class Real>
CheckpointData Adam<Real>::export_state(const ParamStore<Real>& params) const {
  CheckpointData out;
  out.config_text = "adam_t=" + std::to_string(t_) + "\n";
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& shape = params.tensor(i).shape();
    NamedArray ma, va;
    ma.name = "m." + params.name(i);
    va.name = "v." + params.name(i);
    ma.shape.assign(shape.begin(), shape.end());
    va.shape.assign(shape.begin(), shape.end());
    ma.data.assign(m_[i].begin(), m_[i].end());
    va.data.assign(v_[i].begin(), v_[i].end());
    out.arrays.push_back(std::move(ma));
    out.arrays.push_back(std::move(va));
  }
  return out;
}

template <class Real>
void Adam<Real>::import_state(const CheckpointData& data, const ParamStore<Real>& params) {
  const std::string tag = "adam_t=";
  const size_t at = data.config_text.find(tag);
  SAF_CHECK(at != std::string::npos, "adam state: missing step counter");
  t_ = std::stoll(data.config_text.substr(at + tag.size()));
  SAF_CHECK(data.arrays.size() == params.size() * 2, "adam state: array count mismatch");
  m_.resize(params.size());
  v_.resize(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const NamedArray& ma = data.arrays[2 * i];
    const NamedArray& va = data.arrays[2 * i + 1];
    SAF_CHECK(ma.name == "m." + params.name(i) && va.name == "v." + params.name(i),
              "adam state: parameter order mismatch at ", params.name(i));
    m_[i].assign(ma.data.begin(), ma.data.end());
    v_[i].assign(va.data.begin(), va.data.end());
  }
}

// ---------------------------------------------------------------------------
// model <-> checkpoint glue
// ---------------------------------------------------------------------------

template <class Real>
CheckpointData export_params(const Model<Real>& model) {
  CheckpointData out;
  out.config_text = model.config().to_key_values();
  const ParamStore<Real>& ps = model.params();
  for (size_t i = 0; i < ps.size(); ++i) {
    NamedArray arr;
    arr.name = ps.name(i);
    const auto& shape = ps.tensor(i).shape();
    arr.shape.assign(shape.begin(), shape.end());
    auto vals = ps.tensor(i).values();
    arr.data.resize(vals.size());
    for (size_t j = 0; j < vals.size(); ++j) arr.data[j] = static_cast<float>(vals[j]);
    out.arrays.push_back(std::move(arr));
  }
  return out;
}

template <class Real>
void import_params(Model<Real>& model, const CheckpointData& data) {
  ParamStore<Real>& ps = model.params();
  SAF_CHECK(data.arrays.size() == ps.size(), "checkpoint holds ", data.arrays.size(),
            " parameters, model expects ", ps.size(), " (config mismatch?)");
  for (size_t i = 0; i < ps.size(); ++i) {
    const NamedArray& arr = data.arrays[i];
    Tensor<Real>& p = ps.tensor(i);
    SAF_CHECK(arr.name == ps.name(i), "checkpoint parameter ", arr.name,
              " does not match model parameter ", ps.name(i));
    SAF_CHECK(static_cast<int64_t>(arr.data.size()) == p.numel(), "checkpoint parameter ",
              arr.name, " has wrong size");
    auto w = p.mutable_values();
    for (size_t j = 0; j < arr.data.size(); ++j) w[j] = static_cast<Real>(arr.data[j]);
  }
}

// ---------------------------------------------------------------------------
// the training loop
// ---------------------------------------------------------------------------

struct StepRecord {
  int64_t step = 0;
  double l_mag = 0, l_ri = 0, l_total = 0;
};

struct TrainResult {
  std::vector<StepRecord> history;
  std::string final_checkpoint;
  std::string best_checkpoint;
  int64_t steps_run = 0;
};

// Runs training, writing loss_log.txt, per-epoch checkpoints and adam
// sidecars, effective_config.txt and best.txt into out_dir. resume_from, if
// set, must name an epoch checkpoint produced by the same configuration;
// continuation is bit-identical to an unbroken run.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const PairedDataset& dataset, const std::string& out_dir,
                  const std::string& resume_from = "");

// Batch loss helper shared by train() and the tests: mean of the per-element
// losses; elements are processed at their own valid length.
LossTerms<float> batch_loss(Model<float>& model, const PreparedBatch& batch);

}  // namespace saf
