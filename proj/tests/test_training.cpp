// tests/test_training.cpp
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
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "saf/training.hpp"
#include "saf/wav.hpp"
#include "testutil.hpp"

using namespace saf;
using namespace saf::testref;

namespace {

const std::string kDir = "/tmp/saf_test_training";

void ensure_dir() { std::filesystem::create_directories(kDir); }

// Small synthetic noisy/clean pair on disk, reused across tests.
std::pair<std::string, std::string> write_pair(const std::string& stem, int64_t samples,
                                               uint64_t seed) {
  ensure_dir();
  AudioClip clean;
  clean.samples = synth_tone_clip(samples, kSampleRate, seed);
  AudioClip noise;
  noise.samples = white_noise_clip(samples, seed + 1);
  auto mix = mix_at_snr(clean, noise, 5.0);
  const std::string noisy_path = kDir + "/" + stem + "_noisy.wav";
  const std::string clean_path = kDir + "/" + stem + "_clean.wav";
  write_wav(noisy_path, mix.noisy);
  write_wav(clean_path, mix.clean);
  return {noisy_path, clean_path};
}

ModelConfig tiny_model_cfg() {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.tcn_hidden = 16;
  cfg.tcn_dilations = {1, 2};
  cfg.tcn_repeats = 1;
  return cfg;
}

// Scalar Adam reference, written independently of the library version.
struct RefAdam {
  double m = 0, v = 0;
  int64_t t = 0;
  double step(double w, double g, const TrainConfig& cfg) {
    ++t;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mhat = m / (1 - std::pow(cfg.beta1, static_cast<double>(t)));
    const double vhat = v / (1 - std::pow(cfg.beta2, static_cast<double>(t)));
    return w - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
};

}  // namespace

TEST_CASE("adam: first-step closed form, zero grad, statelessness across parameters") {
  TrainConfig cfg;
  ParamStore<double> ps;
  auto p = ps.create("w", {1}, {0.0});
  auto q = ps.create("w2", {1}, {0.0});
  Adam<double> adam(cfg);

  // unit gradient on both parameters
  p.mutable_grad()[0] = 1.0;
  q.mutable_grad()[0] = 1.0;
  adam.step(ps);
  // first bias-corrected step is -lr within rounding of the eps term
  CHECK(std::abs(p.values()[0] - (-5e-4)) < 1e-9);
  // identical grads and history give identical updates
  CHECK(p.values()[0] == q.values()[0]);

  // zero gradient leaves the parameter unchanged
  ParamStore<double> ps2;
  auto r = ps2.create("r", {3}, {0.5, -0.25, 1.0});
  Adam<double> adam2(cfg);
  r.zero_grad();
  adam2.step(ps2);
  CHECK(r.values()[0] == 0.5);
  CHECK(r.values()[1] == -0.25);
  CHECK(r.values()[2] == 1.0);

  // missing gradient rejected
  ParamStore<double> ps3;
  auto s = ps3.create("s", {1}, {0.0});
  s.mutable_grad()[0] = 1.0;
  Adam<double> adam3(cfg);
  adam3.step(ps3);
  ps3.tensor(0).impl()->grad.clear();
  CHECK_THROWS_AS(adam3.step(ps3), SafError);
}

TEST_CASE("adam matches the reference trajectory to 1e-12") {
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.98;
  ParamStore<double> ps;
  auto p = ps.create("w", {1}, {0.7});
  Adam<double> adam(cfg);
  RefAdam ref;
  double w_ref = 0.7;
  Rng rng(0xADA);
  for (int step = 0; step < 100; ++step) {
    const double g = rng.uniform(-2, 2);
    p.zero_grad();
    p.mutable_grad()[0] = g;
    adam.step(ps);
    w_ref = ref.step(w_ref, g, cfg);
    CHECK(std::abs(p.values()[0] - w_ref) < 1e-12);
  }
}

TEST_CASE("manifest parsing") {
  ensure_dir();
  const std::string path = kDir + "/manifest.tsv";
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "/a/noisy.wav\t/a/clean.wav\n";
    out << "/b/clean.wav\t/b/noise.wav\t7.5\n";
  }
  auto entries = load_manifest(path);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].kind == DatasetEntry::Kind::kPair);
  CHECK(entries[0].path_a == "/a/noisy.wav");
  CHECK(entries[1].kind == DatasetEntry::Kind::kMix);
  CHECK(entries[1].snr_db == doctest::Approx(7.5));

  {
    std::ofstream out(path);
    out << "only_one_field\n";
  }
  CHECK_THROWS_AS(load_manifest(path), SafError);
  CHECK_THROWS_AS(load_manifest(kDir + "/missing.tsv"), SafError);
}

TEST_CASE("epoch order is a pure function of (seed, epoch)") {
  std::vector<DatasetEntry> entries(7);
  for (auto& e : entries) {
    e.path_a = "x";
    e.path_b = "y";
  }
  PairedDataset ds(std::move(entries));
  auto a = ds.epoch_order(42, 3);
  auto b = ds.epoch_order(42, 3);
  CHECK(a == b);
  auto c = ds.epoch_order(42, 4);
  CHECK(a != c);  // different epoch reshuffles
  auto d = ds.epoch_order(43, 3);
  CHECK(a != d);  // different seed reshuffles
  // a permutation of 0..6
  std::vector<size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("prepare_batch: 3-second framing, seeded crops, bad files skipped") {
  auto [noisy3, clean3] = write_pair("three_sec", 48000, 0xBA5E);
  std::vector<DatasetEntry> entries;
  entries.push_back({DatasetEntry::Kind::kPair, noisy3, clean3, 0.0});
  PairedDataset ds(std::move(entries));

  TrainConfig cfg;
  cfg.max_clip_seconds = 3.0;
  auto batch = prepare_batch(ds, {0}, cfg, 0, 0);
  REQUIRE(batch.elements.size() == 1);
  CHECK(batch.elements[0].noisy.frames == 299);  // (48000-320)/160 + 1
  CHECK(batch.elements[0].valid_frames == 299);

  // longer clip is cropped to the cap with a seeded offset
  auto [noisy_l, clean_l] = write_pair("long", 72000, 0xBA5F);
  std::vector<DatasetEntry> entries2;
  entries2.push_back({DatasetEntry::Kind::kPair, noisy_l, clean_l, 0.0});
  PairedDataset ds2(std::move(entries2));
  auto b1 = prepare_batch(ds2, {0}, cfg, 2, 5);
  auto b2 = prepare_batch(ds2, {0}, cfg, 2, 5);
  CHECK(b1.elements[0].noisy.frames == 299);
  // same (seed, epoch, step) -> identical crop
  CHECK(b1.elements[0].noisy.mag.data == b2.elements[0].noisy.mag.data);
  auto b3 = prepare_batch(ds2, {0}, cfg, 2, 6);
  CHECK(b1.elements[0].noisy.mag.data != b3.elements[0].noisy.mag.data);

  // unreadable entries are skipped; an empty batch is an error
  std::vector<DatasetEntry> entries3;
  entries3.push_back({DatasetEntry::Kind::kPair, "/nowhere/a.wav", "/nowhere/b.wav", 0.0});
  entries3.push_back({DatasetEntry::Kind::kPair, noisy3, clean3, 0.0});
  PairedDataset ds3(std::move(entries3));
  auto b4 = prepare_batch(ds3, {0, 1}, cfg, 0, 0);
  CHECK(b4.elements.size() == 1);
  CHECK_THROWS_AS(prepare_batch(ds3, {0}, cfg, 0, 0), SafError);
}

TEST_CASE("loss masking: extra padding leaves the batch loss unchanged") {
  auto [noisy, clean] = write_pair("masked", 8000, 0xFACE);
  std::vector<DatasetEntry> entries;
  entries.push_back({DatasetEntry::Kind::kPair, noisy, clean, 0.0});
  PairedDataset ds(std::move(entries));
  TrainConfig tcfg;
  auto batch = prepare_batch(ds, {0}, tcfg, 0, 0);

  Model<float> model(tiny_model_cfg(), 0x11);
  auto l_base = batch_loss(model, batch);

  // pad the stored grids further; the model reads only the valid slice
  auto pad_more = [](Grid& g, int64_t extra) {
    g.data.resize(static_cast<size_t>((g.frames + extra) * g.bins), 0.0);
    g.frames += extra;
  };
  for (int64_t extra : {5, 10}) {
    PreparedBatch padded = batch;
    for (auto& el : padded.elements) {
      pad_more(el.noisy.mag, extra);
      pad_more(el.noisy.theta, extra);
      pad_more(el.noisy.real_part, extra);
      pad_more(el.noisy.imag_part, extra);
      el.noisy.frames += extra;
      pad_more(el.target.mag, extra);
      pad_more(el.target.real_part, extra);
      pad_more(el.target.imag_part, extra);
      el.target.frames += extra;
    }
    auto l_padded = batch_loss(model, padded);
    CHECK(l_padded.l_total.scalar() == l_base.l_total.scalar());  // bitwise
  }
}

TEST_CASE("checkpoint: round trip bit-exact, corruption and mismatch rejected") {
  ensure_dir();
  Model<float> model(tiny_model_cfg(), 0x22);
  const std::string path = kDir + "/model.saf";
  save_checkpoint(path, export_params(model));

  Model<float> other(tiny_model_cfg(), 0x99);  // different init
  import_params(other, load_checkpoint(path));
  const auto& a = model.params();
  auto& b = other.params();
  for (size_t i = 0; i < a.size(); ++i) {
    auto va = a.tensor(i).values();
    auto vb = b.tensor(i).values();
    for (size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
  }

  // config echo survives
  auto data = load_checkpoint(path);
  auto cfg = ModelConfig::from_key_values(data.config_text);
  CHECK(cfg.channels == 8);

  // corrupt one payload byte (near the end, inside the last array's floats)
  {
    const auto file_size = std::filesystem::file_size(path);
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    const auto pos = static_cast<std::streamoff>(file_size) - 16;
    char c;
    f.seekg(pos);
    f.get(c);
    f.seekp(pos);
    f.put(static_cast<char>(c ^ 0x40));
  }
  CHECK_THROWS_AS(load_checkpoint(path), SafError);

  // config mismatch rejected on import
  Model<float> wide(ModelConfig{}, 0x22);
  save_checkpoint(path, export_params(model));
  CHECK_THROWS_AS(import_params(wide, load_checkpoint(path)), SafError);
}

TEST_CASE("train: loss drops on a repeated pair, deterministic reruns, resume") {
  auto [noisy, clean] = write_pair("train_pair", 8000, 0xC0FE);
  std::vector<DatasetEntry> entries;
  entries.push_back({DatasetEntry::Kind::kPair, noisy, clean, 0.0});
  PairedDataset ds(std::move(entries));

  ModelConfig mcfg = tiny_model_cfg();
  TrainConfig tcfg;
  tcfg.batch_size = 1;
  tcfg.epochs = 40;
  tcfg.seed = 0x7EA;

  const std::string out1 = kDir + "/run1";
  std::filesystem::remove_all(out1);
  auto r1 = train(mcfg, tcfg, ds, out1);
  REQUIRE(r1.history.size() == 40);
  // averaged late loss well below averaged early loss
  double early = 0, late = 0;
  for (int i = 0; i < 5; ++i) early += r1.history[static_cast<size_t>(i)].l_total;
  for (int i = 35; i < 40; ++i) late += r1.history[static_cast<size_t>(i)].l_total;
  CHECK(late < 0.8 * early);

  // 20-step moving average never increases on the single-clip task
  auto moving = [&](size_t end) {
    double s = 0;
    for (size_t i = end - 20; i < end; ++i) s += r1.history[i].l_total;
    return s / 20.0;
  };
  for (size_t end = 21; end <= r1.history.size(); ++end) {
    CHECK(moving(end) <= moving(end - 1) + 1e-12);
  }

  // identical rerun: bit-identical loss log
  const std::string out2 = kDir + "/run2";
  std::filesystem::remove_all(out2);
  auto r2 = train(mcfg, tcfg, ds, out2);
  REQUIRE(r2.history.size() == r1.history.size());
  for (size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].l_total == r2.history[i].l_total);
    CHECK(r1.history[i].l_mag == r2.history[i].l_mag);
  }
  std::ifstream f1(out1 + "/loss_log.txt"), f2(out2 + "/loss_log.txt");
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  // resume from the mid checkpoint reproduces the unbroken run exactly
  TrainConfig half = tcfg;
  half.epochs = 20;
  const std::string out3 = kDir + "/run3";
  std::filesystem::remove_all(out3);
  train(mcfg, half, ds, out3);
  TrainConfig full = tcfg;  // epochs = 40
  auto r3 = train(mcfg, full, ds, out3, out3 + "/ckpt_epoch_019.saf");
  // r3 history covers epochs 20..39
  REQUIRE(r3.history.size() == 20);
  for (size_t i = 0; i < 20; ++i) {
    CHECK(r3.history[i].l_total == r1.history[20 + i].l_total);
  }
  // final checkpoints bit-identical
  std::ifstream c1(out1 + "/ckpt_epoch_039.saf", std::ios::binary);
  std::ifstream c3(out3 + "/ckpt_epoch_039.saf", std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(c1)), std::istreambuf_iterator<char>());
  std::string b3((std::istreambuf_iterator<char>(c3)), std::istreambuf_iterator<char>());
  CHECK(b1 == b3);

  // loss history file exists with one line per step
  int64_t lines = 0;
  std::ifstream log(out1 + "/loss_log.txt");
  std::string line;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 40);
}

TEST_CASE("train: max_steps cap and non-finite loss diagnostics") {
  auto [noisy, clean] = write_pair("cap_pair", 6400, 0xCAB);
  std::vector<DatasetEntry> entries;
  entries.push_back({DatasetEntry::Kind::kPair, noisy, clean, 0.0});
  PairedDataset ds(std::move(entries));

  ModelConfig mcfg = tiny_model_cfg();
  TrainConfig tcfg;
  tcfg.batch_size = 1;
  tcfg.epochs = 50;
  tcfg.max_steps = 7;
  const std::string out = kDir + "/cap_run";
  std::filesystem::remove_all(out);
  auto r = train(mcfg, tcfg, ds, out);
  CHECK(r.steps_run == 7);
  CHECK(r.history.size() == 7);
}
