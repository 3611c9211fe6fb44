// saf/training.cpp
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

#include "saf/training.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "saf/wav.hpp"

namespace saf {

std::string TrainConfig::to_key_values() const {
  char buf[64];
  std::string out;
  auto add_f = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s=%.9g\n", key, v);
    out += buf;
  };
  add_f("learning_rate", learning_rate);
  add_f("beta1", beta1);
  add_f("beta2", beta2);
  add_f("adam_eps", adam_eps);
  out += "epochs=" + std::to_string(epochs) + "\n";
  out += "batch_size=" + std::to_string(batch_size) + "\n";
  add_f("max_clip_seconds", max_clip_seconds);
  out += "seed=" + std::to_string(seed) + "\n";
  out += "snr_levels=";
  for (size_t i = 0; i < snr_levels.size(); ++i) {
    if (i) out += ",";
    std::snprintf(buf, sizeof(buf), "%g", snr_levels[i]);
    out += buf;
  }
  out += "\n";
  out += "max_steps=" + std::to_string(max_steps) + "\n";
  return out;
}

std::vector<DatasetEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  SAF_CHECK(in.good(), "cannot open dataset manifest: ", path);
  std::vector<DatasetEntry> entries;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    size_t pos = 0;
    while (pos <= line.size()) {
      size_t tab = line.find('\t', pos);
      if (tab == std::string::npos) tab = line.size();
      fields.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    DatasetEntry e;
    if (fields.size() == 2) {
      e.kind = DatasetEntry::Kind::kPair;
      e.path_a = fields[0];
      e.path_b = fields[1];
    } else if (fields.size() == 3) {
      e.kind = DatasetEntry::Kind::kMix;
      e.path_a = fields[0];
      e.path_b = fields[1];
      try {
        e.snr_db = std::stod(fields[2]);
      } catch (const std::exception&) {
        fail("manifest ", path, " line ", line_no, ": bad snr value '", fields[2], "'");
      }
    } else {
      fail("manifest ", path, " line ", line_no,
           ": expected 2 or 3 tab-separated fields, got ", fields.size());
    }
    SAF_CHECK(!e.path_a.empty() && !e.path_b.empty(), "manifest ", path, " line ", line_no,
              ": empty path");
    entries.push_back(std::move(e));
  }
  SAF_CHECK(!entries.empty(), "manifest ", path, ": no records");
  return entries;
}

std::vector<size_t> PairedDataset::epoch_order(uint64_t seed, int64_t epoch) const {
  std::vector<size_t> order(entries_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(Rng::derive(seed, 0xE90C, static_cast<uint64_t>(epoch)));
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.below(static_cast<int64_t>(i)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

namespace {

struct LoadedPair {
  AudioClip noisy;
  AudioClip clean;
};

LoadedPair load_entry(const DatasetEntry& e) {
  LoadedPair p;
  if (e.kind == DatasetEntry::Kind::kPair) {
    p.noisy = read_wav(e.path_a);
    p.clean = read_wav(e.path_b);
    SAF_CHECK(p.noisy.size() == p.clean.size(), "pair length mismatch: ", e.path_a, " vs ",
              e.path_b);
  } else {
    AudioClip clean = read_wav(e.path_a);
    AudioClip noise = read_wav(e.path_b);
    auto mixed = mix_at_snr(clean, noise, e.snr_db);
    p.noisy = std::move(mixed.noisy);
    p.clean = std::move(mixed.clean);
  }
  return p;
}

void pad_grid(Grid& g, int64_t frames) {
  if (g.frames >= frames) return;
  g.data.resize(static_cast<size_t>(frames * g.bins), 0.0);
  g.frames = frames;
}

}  // namespace

PreparedBatch prepare_batch(const PairedDataset& dataset, const std::vector<size_t>& indices,
                            const TrainConfig& cfg, int64_t epoch, int64_t step) {
  const int64_t max_samples =
      static_cast<int64_t>(std::llround(cfg.max_clip_seconds * kSampleRate));
  PreparedBatch batch;
  for (size_t pos = 0; pos < indices.size(); ++pos) {
    const size_t idx = indices[pos];
    SAF_CHECK(idx < dataset.size(), "prepare_batch: index ", idx, " out of range");
    LoadedPair pair;
    try {
      pair = load_entry(dataset.entry(idx));
    } catch (const SafError& err) {
      std::cerr << "warning: skipping dataset entry " << idx << ": " << err.what() << "\n";
      continue;
    }
    // Seeded random crop; offsets replay exactly on resume.
    if (pair.clean.size() > max_samples) {
      Rng rng(Rng::derive(cfg.seed, static_cast<uint64_t>(epoch),
                          static_cast<uint64_t>(step), pos));
      const int64_t offset = rng.below(pair.clean.size() - max_samples + 1);
      std::vector<double> nc(pair.noisy.samples.begin() + offset,
                             pair.noisy.samples.begin() + offset + max_samples);
      std::vector<double> cc(pair.clean.samples.begin() + offset,
                             pair.clean.samples.begin() + offset + max_samples);
      pair.noisy.samples = std::move(nc);
      pair.clean.samples = std::move(cc);
    }
    BatchElement el;
    el.noisy = make_bundle(pair.noisy);
    el.target = make_targets(pair.clean);
    el.valid_frames = el.noisy.frames;
    batch.elements.push_back(std::move(el));
  }
  SAF_CHECK(!batch.elements.empty(), "prepare_batch: no readable entries in batch");

  // Rectangular storage: pad every grid to the batch max T. The model only
  // consumes the valid slice, so the loss is masked over padding by
  // construction.
  int64_t max_t = 0;
  for (const auto& el : batch.elements) max_t = std::max(max_t, el.valid_frames);
  for (auto& el : batch.elements) {
    pad_grid(el.noisy.mag, max_t);
    pad_grid(el.noisy.theta, max_t);
    pad_grid(el.noisy.real_part, max_t);
    pad_grid(el.noisy.imag_part, max_t);
    el.noisy.frames = max_t;
    pad_grid(el.target.mag, max_t);
    pad_grid(el.target.real_part, max_t);
    pad_grid(el.target.imag_part, max_t);
    el.target.frames = max_t;
  }
  batch.padded_frames = max_t;
  return batch;
}

LossTerms<float> batch_loss(Model<float>& model, const PreparedBatch& batch) {
  SAF_CHECK(!batch.elements.empty(), "batch_loss: empty batch");
  LossTerms<float> total;
  bool first = true;
  for (const auto& el : batch.elements) {
    auto bt = bundle_to_tensors<float>(el.noisy, el.valid_frames);
    auto tt = targets_to_tensors<float>(el.target, el.valid_frames);
    auto fwd = model.forward(bt);
    auto lt = model.loss(fwd.enhanced, tt);
    if (first) {
      total = lt;
      first = false;
    } else {
      total.l_mag = add(total.l_mag, lt.l_mag);
      total.l_ri = add(total.l_ri, lt.l_ri);
      total.l_total = add(total.l_total, lt.l_total);
    }
  }
  const float inv = 1.0f / static_cast<float>(batch.elements.size());
  if (batch.elements.size() > 1) {
    total.l_mag = scale(total.l_mag, inv);
    total.l_ri = scale(total.l_ri, inv);
    total.l_total = scale(total.l_total, inv);
  }
  return total;
}

namespace {

std::string epoch_ckpt_name(int64_t epoch) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "ckpt_epoch_%03" PRId64 ".saf", epoch);
  return buf;
}

std::string epoch_adam_name(int64_t epoch) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "adam_epoch_%03" PRId64 ".opt", epoch);
  return buf;
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const PairedDataset& dataset, const std::string& out_dir,
                  const std::string& resume_from) {
  model_cfg.validate();
  train_cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  SAF_CHECK(fs::is_directory(out_dir), "checkpoint directory is not writable: ", out_dir);

  Model<float> model(model_cfg, train_cfg.seed);
  Adam<float> adam(train_cfg);

  int64_t start_epoch = 0;
  if (!resume_from.empty()) {
    CheckpointData ck = load_checkpoint(resume_from);
    ModelConfig stored = ModelConfig::from_key_values(ck.config_text);
    SAF_CHECK(stored.to_key_values() == model_cfg.to_key_values(),
              "resume checkpoint was produced by a different model configuration");
    import_params(model, ck);
    // matching sidecar: same stem, .opt extension
    std::string opt = resume_from;
    const size_t slash = opt.find_last_of('/');
    const size_t us = opt.rfind("ckpt_epoch_");
    SAF_CHECK(us != std::string::npos, "resume path must name a ckpt_epoch_NNN.saf file: ",
              resume_from);
    const std::string digits = opt.substr(us + 11, 3);
    start_epoch = std::stoll(digits) + 1;
    const std::string opt_path =
        (slash == std::string::npos ? std::string() : opt.substr(0, slash + 1)) +
        epoch_adam_name(start_epoch - 1);
    adam.import_state(load_checkpoint(opt_path), model.params());
  }

  std::ofstream log(out_dir + "/loss_log.txt", start_epoch > 0 ? std::ios::app : std::ios::trunc);
  SAF_CHECK(log.good(), "cannot write loss log in ", out_dir);
  {
    std::ofstream cfg_echo(out_dir + "/effective_config.txt");
    cfg_echo << model_cfg.to_key_values() << train_cfg.to_key_values();
  }

  TrainResult result;
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(dataset.size()) + train_cfg.batch_size - 1) / train_cfg.batch_size;
  int64_t global_step = start_epoch * steps_per_epoch;
  adam.set_step_count(global_step);

  double best_epoch_loss = std::numeric_limits<double>::infinity();
  std::string best_name;

  for (int64_t epoch = start_epoch; epoch < train_cfg.epochs; ++epoch) {
    const std::vector<size_t> order = dataset.epoch_order(train_cfg.seed, epoch);
    double epoch_loss_sum = 0;
    int64_t epoch_steps = 0;
    for (int64_t b = 0; b < steps_per_epoch; ++b) {
      if (train_cfg.max_steps > 0 && global_step >= train_cfg.max_steps) break;
      std::vector<size_t> indices;
      for (int64_t i = b * train_cfg.batch_size;
           i < std::min<int64_t>(static_cast<int64_t>(order.size()),
                                 (b + 1) * train_cfg.batch_size);
           ++i) {
        indices.push_back(order[static_cast<size_t>(i)]);
      }
      if (indices.empty()) break;
      PreparedBatch batch = prepare_batch(dataset, indices, train_cfg, epoch, b);

      model.params().zero_grads();
      LossTerms<float> lt = batch_loss(model, batch);
      const double l_total = lt.l_total.scalar();
      const double l_mag = lt.l_mag.scalar();
      const double l_ri = lt.l_ri.scalar();
      SAF_CHECK(std::isfinite(l_total), "non-finite loss at epoch ", epoch, " step ", global_step,
                " (l_mag=", l_mag, ", l_ri=", l_ri, ")");
      backward(lt.l_total);
      adam.step(model.params());

      ++global_step;
      ++epoch_steps;
      epoch_loss_sum += l_total;
      char line[160];
      std::snprintf(line, sizeof(line), "%" PRId64 " %.9g %.9g %.9g", global_step,
                    l_mag, l_ri, l_total);
      log << line << "\n";
      result.history.push_back({global_step, l_mag, l_ri, l_total});
    }
    log.flush();

    const std::string ckpt = out_dir + "/" + epoch_ckpt_name(epoch);
    save_checkpoint(ckpt, export_params(model));
    save_checkpoint(out_dir + "/" + epoch_adam_name(epoch), adam.export_state(model.params()));
    result.final_checkpoint = ckpt;

    if (epoch_steps > 0 && epoch_loss_sum / static_cast<double>(epoch_steps) < best_epoch_loss) {
      best_epoch_loss = epoch_loss_sum / static_cast<double>(epoch_steps);
      best_name = epoch_ckpt_name(epoch);
      std::ofstream best(out_dir + "/best.txt");
      best << best_name << "\n";
    }
    if (train_cfg.max_steps > 0 && global_step >= train_cfg.max_steps) break;
  }
  result.best_checkpoint = best_name.empty() ? "" : out_dir + "/" + best_name;
  result.steps_run = global_step;
  return result;
}

}  // namespace saf
