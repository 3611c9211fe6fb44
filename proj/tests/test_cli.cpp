// tests/test_cli.cpp
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
// End-to-end exercises of the installed binary: exit codes, artifacts,
// determinism. The binary path comes in via SAF_CLI.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "saf/enhance.hpp"
#include "saf/training.hpp"
#include "saf/wav.hpp"
#include "testutil.hpp"

using namespace saf;
using namespace saf::testref;

namespace {

const std::string kDir = "/tmp/saf_test_cli";

struct CmdResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
  std::filesystem::create_directories(kDir);
  const std::string out_file = kDir + "/cmd_out.txt";
  const std::string cmd = std::string(SAF_CLI) + " " + args + " > " + out_file + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(out_file);
  r.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Checkpoint whose decoders force mask == 1 and bias == 0: the enhance path
// must then reproduce its input through the analysis/synthesis round trip.
std::string write_identity_checkpoint(const ModelConfig& cfg) {
  Model<float> model(cfg, 0xF1DE);
  auto& ps = model.params();
  auto zero = [&](const std::string& name) {
    auto w = ps.get(name).mutable_values();
    std::fill(w.begin(), w.end(), 0.0f);
  };
  zero("dec_irm.head.w");
  zero("dec_bias.head.w");
  zero("dec_bias.head.b");
  {
    auto b = ps.get("dec_irm.head.b").mutable_values();
    std::fill(b.begin(), b.end(), 40.0f);  // sigmoid(40) rounds to exactly 1
  }
  const std::string path = kDir + "/identity.saf";
  save_checkpoint(path, export_params(model));
  return path;
}

}  // namespace

TEST_CASE("usage and validation errors exit with code 2") {
  auto missing_manifest = run_cli("train --data /nowhere/manifest.tsv --out " + kDir + "/t0");
  CHECK(missing_manifest.exit_code == 2);
  CHECK(missing_manifest.output.find("/nowhere/manifest.tsv") != std::string::npos);

  auto unknown_key = run_cli("params --set not_a_key=3");
  CHECK(unknown_key.exit_code == 2);
  CHECK(unknown_key.output.find("not_a_key") != std::string::npos);

  auto bad_flag = run_cli("train --frobnicate");
  CHECK(bad_flag.exit_code == 2);

  auto no_sub = run_cli("");
  CHECK(no_sub.exit_code == 2);
}

TEST_CASE("params prints per-module and total counts") {
  auto r = run_cli("params");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("# effective configuration") != std::string::npos);
  CHECK(r.output.find("604483") != std::string::npos);  // default total

  auto r2 = run_cli("params --set af_layers=2");
  CHECK(r2.exit_code == 0);
  CHECK(r2.output.find("1144707") != std::string::npos);
}

TEST_CASE("selfcheck passes on a fresh build") {
  auto r = run_cli("selfcheck");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("all self-checks passed") != std::string::npos);
  CHECK(r.output.find("FAIL") == std::string::npos);
}

TEST_CASE("train: runs, echoes config, writes artifacts") {
  std::filesystem::create_directories(kDir);
  AudioClip clean;
  clean.samples = synth_tone_clip(8000, kSampleRate, 0xCC1);
  AudioClip noise;
  noise.samples = white_noise_clip(8000, 0xCC2);
  auto mix = mix_at_snr(clean, noise, 5.0);
  write_wav(kDir + "/tn.wav", mix.noisy);
  write_wav(kDir + "/tc.wav", mix.clean);
  {
    std::ofstream m(kDir + "/train.tsv");
    m << kDir + "/tn.wav" << "\t" << kDir + "/tc.wav" << "\n";
  }
  std::filesystem::remove_all(kDir + "/run");
  auto r = run_cli(
      "train --data " + kDir + "/train.tsv --out " + kDir +
      "/run --set channels=8 --set tcn_hidden=16 --set tcn_dilations=1,2 --set tcn_repeats=1 "
      "--set max_steps=12 --set batch_size=1 --set epochs=20");
  CHECK(r.exit_code == 0);
  // config echo precedes the work
  CHECK(r.output.find("# effective configuration") != std::string::npos);
  CHECK(r.output.find("channels=8") != std::string::npos);
  CHECK(r.output.find("max_steps=12") != std::string::npos);
  CHECK(r.output.find("trained 12 steps") != std::string::npos);

  // loss log: one line per step
  std::ifstream log(kDir + "/run/loss_log.txt");
  REQUIRE(log.good());
  int64_t lines = 0;
  std::string line;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 12);
  CHECK(std::filesystem::exists(kDir + "/run/best.txt"));
  CHECK(std::filesystem::exists(kDir + "/run/effective_config.txt"));
}

TEST_CASE("enhance: identity checkpoint, exact length, deterministic output") {
  std::filesystem::create_directories(kDir);
  ModelConfig cfg;  // default architecture
  const std::string ckpt = write_identity_checkpoint(cfg);

  AudioClip clip;
  clip.samples = synth_tone_clip(16000 + 123, kSampleRate, 0xEE1);  // odd length
  write_wav(kDir + "/in.wav", clip);

  auto r = run_cli("enhance --model " + ckpt + " --in " + kDir + "/in.wav --out " + kDir +
                   "/out.wav");
  CHECK(r.exit_code == 0);

  auto out = read_wav(kDir + "/out.wav");
  auto in = read_wav(kDir + "/in.wav");
  REQUIRE(out.size() == in.size());  // exact sample count
  double num = 0, den = 0;
  for (int64_t i = 0; i < in.size(); ++i) {
    const double d = out.samples[static_cast<size_t>(i)] - in.samples[static_cast<size_t>(i)];
    num += d * d;
    den += in.samples[static_cast<size_t>(i)] * in.samples[static_cast<size_t>(i)];
  }
  CHECK(std::sqrt(num / den) < 1e-3);

  // bit-identical on a rerun
  auto r2 = run_cli("enhance --model " + ckpt + " --in " + kDir + "/in.wav --out " + kDir +
                    "/out2.wav");
  CHECK(r2.exit_code == 0);
  CHECK(read_file(kDir + "/out.wav") == read_file(kDir + "/out2.wav"));

  // missing checkpoint is a runtime failure
  auto r3 = run_cli("enhance --model /nowhere.saf --in " + kDir + "/in.wav --out " + kDir +
                    "/x.wav");
  CHECK(r3.exit_code == 1);
}

TEST_CASE("eval: clean-vs-clean pairs give unit STOI and a full report") {
  std::filesystem::create_directories(kDir);
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.tcn_hidden = 16;
  cfg.tcn_dilations = {1, 2};
  cfg.tcn_repeats = 1;
  const std::string ckpt = write_identity_checkpoint(cfg);

  for (int i = 0; i < 3; ++i) {
    AudioClip c;
    c.samples = synth_tone_clip(16000, kSampleRate, 0xEA0 + static_cast<uint64_t>(i));
    write_wav(kDir + "/ev" + std::to_string(i) + ".wav", c);
  }
  {
    std::ofstream m(kDir + "/eval.tsv");
    for (int i = 0; i < 3; ++i) {
      const std::string p = kDir + "/ev" + std::to_string(i) + ".wav";
      m << p << "\t" << p << "\n";  // clean as both sides
    }
  }
  auto r = run_cli("eval --model " + ckpt + " --pairs " + kDir + "/eval.tsv --report " + kDir +
                   "/report.tsv");
  CHECK(r.exit_code == 0);

  // identity model on clean==noisy pairs: enhanced == clean up to round trip
  std::ifstream rep(kDir + "/report.tsv");
  std::string line;
  int64_t data_rows = 0;
  double mean_stoi = -1;
  while (std::getline(rep, line)) {
    if (line.empty() || line[0] == '#') continue;
    ++data_rows;
    if (line.rfind("mean\t", 0) == 0) {
      std::sscanf(line.c_str(), "mean\t%lf", &mean_stoi);
    }
  }
  CHECK(data_rows == 4);  // 3 clips + aggregate
  CHECK(mean_stoi > 1.0 - 1e-6);
  CHECK(std::filesystem::exists(kDir + "/report.tsv.json"));

  // per-clip failure tolerated, aggregate still produced
  {
    std::ofstream m(kDir + "/eval_bad.tsv");
    m << "/nowhere/x.wav\t/nowhere/y.wav\n";
    m << kDir + "/ev0.wav\t" << kDir + "/ev0.wav\n";
  }
  auto r2 = run_cli("eval --model " + ckpt + " --pairs " + kDir + "/eval_bad.tsv --report " +
                    kDir + "/report2.tsv");
  CHECK(r2.exit_code == 0);
  CHECK(r2.output.find("skipping pair") != std::string::npos);
}
