// tools/saf.cpp
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
// Batch entry point: train, enhance, eval, params, selfcheck.
// Exit codes: 0 success, 1 runtime failure, 2 usage/validation error.

#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "saf/enhance.hpp"
#include "saf/metrics.hpp"
#include "saf/runconfig.hpp"
#include "saf/training.hpp"
#include "saf/wav.hpp"

namespace {

using namespace saf;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
};

RunConfig resolve_config(const ConfigArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  for (const auto& kv : args.overrides) {
    const size_t eq = kv.find('=');
    SAF_CHECK(eq != std::string::npos, "--set expects key=value, got '", kv, "'");
    cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void echo_config(const RunConfig& cfg) {
  std::cout << "# effective configuration\n" << cfg.echo();
  std::cout.flush();
}

Model<float> load_model_from(const std::string& path) {
  CheckpointData ck = load_checkpoint(path);
  ModelConfig cfg = ModelConfig::from_key_values(ck.config_text);
  Model<float> model(cfg, 0);
  import_params(model, ck);
  return model;
}

int cmd_train(const ConfigArgs& cargs, const std::string& manifest, const std::string& out_dir,
              const std::string& resume) {
  RunConfig cfg;
  std::vector<DatasetEntry> entries;
  try {
    cfg = resolve_config(cargs);
    entries = load_manifest(manifest);
  } catch (const SafError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  echo_config(cfg);
  try {
    PairedDataset dataset(std::move(entries));
    TrainResult result = train(cfg.model, cfg.train, dataset, out_dir, resume);
    const double final_loss =
        result.history.empty() ? 0.0 : result.history.back().l_total;
    std::printf("trained %" PRId64 " steps; final l_total %.6g; checkpoint %s\n",
                result.steps_run, final_loss, result.final_checkpoint.c_str());
    return kExitOk;
  } catch (const SafError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_enhance(const std::string& model_path, const std::string& in_path,
                const std::string& out_path) {
  try {
    Model<float> model = load_model_from(model_path);
    std::cout << "# effective configuration\n" << model.config().to_key_values();
    AudioClip input = read_wav(in_path);
    AudioClip output = enhance_clip(model, input);
    write_wav(out_path, output);
    std::printf("enhanced %s (%lld samples) -> %s\n", in_path.c_str(),
                static_cast<long long>(input.size()), out_path.c_str());
    return kExitOk;
  } catch (const SafError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_eval(const std::string& model_path, const std::string& pairs_path,
             const std::string& report_path) {
  std::vector<DatasetEntry> entries;
  try {
    entries = load_manifest(pairs_path);
  } catch (const SafError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    Model<float> model = load_model_from(model_path);
    std::cout << "# effective configuration\n" << model.config().to_key_values();
    EvalReport report;
    int64_t failures = 0;
    for (size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      try {
        SAF_CHECK(e.kind == DatasetEntry::Kind::kPair,
                  "eval manifest must hold noisy<TAB>clean pairs (line ", i + 1, ")");
        AudioClip noisy = read_wav(e.path_a);
        AudioClip clean = read_wav(e.path_b);
        SAF_CHECK(noisy.size() == clean.size(), "pair length mismatch: ", e.path_a);
        AudioClip enhanced = enhance_clip(model, noisy);
        ClipScores s;
        s.id = std::filesystem::path(e.path_a).stem().string();
        s.stoi = stoi(clean, enhanced);
        s.ssnr = ssnr_db(clean, enhanced);
        s.si_sdr = si_sdr_db(clean, enhanced);
        report.clips.push_back(s);
        std::printf("%s\tstoi %.4f\tssnr %.2f dB\tsi-sdr %.2f dB\n", s.id.c_str(), s.stoi, s.ssnr,
                    s.si_sdr);
      } catch (const SafError& clip_err) {
        ++failures;
        std::cerr << "warning: skipping pair " << i + 1 << ": " << clip_err.what() << "\n";
      }
    }
    SAF_CHECK(!report.clips.empty(), "no pair could be evaluated (", failures, " failures)");
    report.finalize();
    report.write_tsv(report_path);
    report.write_json(report_path + ".json");
    std::printf("mean\tstoi %.4f\tssnr %.2f dB\tsi-sdr %.2f dB  (%zu clips, %lld skipped)\n",
                report.aggregate.stoi, report.aggregate.ssnr, report.aggregate.si_sdr,
                report.clips.size(), static_cast<long long>(failures));
    return kExitOk;
  } catch (const SafError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_params(const ConfigArgs& cargs) {
  RunConfig cfg;
  try {
    cfg = resolve_config(cargs);
  } catch (const SafError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  echo_config(cfg);
  Model<float> model(cfg.model, cfg.train.seed);
  for (const auto& [module, count] : model.param_count_by_module()) {
    std::printf("%-10s %10lld\n", module.c_str(), static_cast<long long>(count));
  }
  std::printf("%-10s %10lld\n", "total", static_cast<long long>(model.param_count()));
  return kExitOk;
}

// Release gate: fast structural checks with one pass/fail line each.
int cmd_selfcheck() {
  int failures = 0;
  auto report = [&](const char* name, bool ok, double value = 0.0, const char* unit = "") {
    std::printf("[%s] %-38s", ok ? " ok " : "FAIL", name);
    if (unit[0] != '\0') std::printf(" %.3g %s", value, unit);
    std::printf("\n");
    if (!ok) ++failures;
  };

  try {
    Rng rng(0x5E1F);

    {  // operator gradients, double precision
      auto x = Tensor<double>::from_data({4, 3, 6}, [&] {
        std::vector<double> v(72);
        for (auto& e : v) e = rng.uniform(-1, 1);
        return v;
      }(), true);
      auto w = Tensor<double>::from_data({4, 4}, [&] {
        std::vector<double> v(16);
        for (auto& e : v) e = rng.uniform(-0.5, 0.5);
        return v;
      }());
      auto b = Tensor<double>::zeros({4});
      auto g = Tensor<double>::full({4}, 1.0);
      auto berr = gradient_check(
          [&](const Tensor<double>& t) { return sum_sq(conv2d_pointwise(t, w, b)); }, x, 1e-4);
      report("pointwise conv gradient", berr < 1e-4, berr, "rel");
      // random affine keeps the objective sensitive to x (with gamma=1 and
      // beta=0 the summed squares are nearly constant and the gradient
      // degenerates to roundoff scale)
      auto gr = Tensor<double>::from_data({4}, [&] {
        std::vector<double> v(4);
        for (auto& e : v) e = rng.uniform(0.5, 1.5);
        return v;
      }());
      auto br = Tensor<double>::from_data({4}, [&] {
        std::vector<double> v(4);
        for (auto& e : v) e = rng.uniform(-1.0, 1.0);
        return v;
      }());
      auto nerr = gradient_check(
          [&](const Tensor<double>& t) { return sum_sq(channel_norm(t, gr, br)); }, x, 1e-4);
      report("channel norm gradient", nerr < 1e-4, nerr, "rel");
      auto serr = gradient_check(
          [&](const Tensor<double>& t) { return sum_sq(softmax(t, 0)); }, x, 1e-4);
      report("softmax gradient", serr < 1e-4, serr, "rel");
    }

    {  // analysis/synthesis round trip, interior
      Rng r2(0xA0D10);
      AudioClip clip;
      clip.samples.resize(6400);
      for (auto& v : clip.samples) v = 0.4 * r2.normal();
      auto back = istft(stft(clip), clip.size());
      double num = 0, den = 0;
      for (int64_t i = kWindowLen; i < clip.size() - kWindowLen; ++i) {
        const double d = back.samples[static_cast<size_t>(i)] - clip.samples[static_cast<size_t>(i)];
        num += d * d;
        den += clip.samples[static_cast<size_t>(i)] * clip.samples[static_cast<size_t>(i)];
      }
      const double rel = std::sqrt(num / den);
      report("istft(stft(x)) interior round trip", rel < 1e-6, rel);

      auto spec = stft(clip);
      double time_e = 0, spec_e = 0;
      std::vector<double> win(kWindowLen);
      for (int i = 0; i < kWindowLen; ++i) {
        win[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / kWindowLen));
      }
      for (int i = 0; i < kWindowLen; ++i) {
        const double v = clip.samples[static_cast<size_t>(i)] * win[static_cast<size_t>(i)];
        time_e += v * v;
      }
      spec_e = std::norm(spec.at(0, 0)) + std::norm(spec.at(0, kFreqBins - 1));
      for (int f = 1; f < kFreqBins - 1; ++f) spec_e += 2.0 * std::norm(spec.at(0, f));
      spec_e /= kFftLen;
      const double prel = std::abs(time_e - spec_e) / time_e;
      report("windowed-frame energy conservation", prel < 1e-6, prel);
    }

    {  // compression round trip
      Grid g = Grid::zeros(2, kFreqBins);
      Rng r3(0xC02);
      for (auto& v : g.data) v = r3.uniform(1e-5, 9.0);
      auto round = decompress(compress(g));
      double worst = 0;
      for (size_t i = 0; i < g.data.size(); ++i) {
        worst = std::max(worst, std::abs(round.data[i] - g.data[i]) / g.data[i]);
      }
      report("compression round trip", worst < 1e-6, worst);
    }

    {  // unit mask + zero bias reproduces the input spectra
      Rng r4(0x1DE);
      AudioClip clip;
      clip.samples.resize(3200);
      for (auto& v : clip.samples) v = 0.3 * r4.normal();
      auto bundle = make_bundle(clip);
      auto bt = bundle_to_tensors<float>(bundle);
      MaskAndBias<float> mb;
      mb.mask = Tensor<float>::full({1, bt.frames, bt.bins}, 1.0f);
      mb.bias_r = Tensor<float>::zeros({1, bt.frames, bt.bins});
      mb.bias_i = Tensor<float>::zeros({1, bt.frames, bt.bins});
      auto enh = recombine(bt, mb);
      double worst = 0;
      for (size_t i = 0; i < enh.s_r.values().size(); ++i) {
        worst = std::max<double>(worst, std::abs(enh.s_r.values()[i] - bt.real_part.values()[i]));
        worst = std::max<double>(worst, std::abs(enh.s_i.values()[i] - bt.imag_part.values()[i]));
      }
      report("unit-mask/zero-bias identity", worst < 1e-6, worst);
    }

    {  // first Adam step against the closed form
      TrainConfig tc;
      ParamStore<double> ps;
      auto p = ps.create("w", {1}, {0.0});
      p.mutable_grad()[0] = 1.0;
      Adam<double> adam(tc);
      adam.step(ps);
      const double err = std::abs(p.values()[0] + 5e-4);
      report("adam first-step closed form", err < 1e-9, err);
    }

    {  // checkpoint round trip
      ModelConfig mc;
      mc.channels = 8;
      mc.tcn_hidden = 12;
      mc.tcn_dilations = {1, 2};
      mc.tcn_repeats = 1;
      Model<float> m1(mc, 0xABC);
      const std::string tmp = std::filesystem::temp_directory_path() / "saf_selfcheck.ckpt";
      save_checkpoint(tmp, export_params(m1));
      Model<float> m2(mc, 0xDEF);
      import_params(m2, load_checkpoint(tmp));
      bool same = true;
      for (size_t i = 0; i < m1.params().size(); ++i) {
        auto a = m1.params().tensor(i).values();
        auto b2 = m2.params().tensor(i).values();
        for (size_t j = 0; j < a.size(); ++j) same = same && a[j] == b2[j];
      }
      std::filesystem::remove(tmp);
      report("checkpoint save/load round trip", same);
    }
  } catch (const SafError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }

  if (failures > 0) {
    std::printf("%d self-check(s) failed\n", failures);
    return kExitRuntime;
  }
  std::printf("all self-checks passed\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saf: spectrum-attention-fusion speech enhancement"};
  app.require_subcommand(1);

  ConfigArgs train_cfg, params_cfg;
  std::string train_data, train_out, train_resume;
  auto* train_cmd = app.add_subcommand("train", "train a model from a dataset manifest");
  train_cmd->add_option("--config", train_cfg.config_path, "key=value config file");
  train_cmd->add_option("--set", train_cfg.overrides, "override: key=value (repeatable)");
  train_cmd->add_option("--data", train_data, "dataset manifest")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--resume", train_resume, "epoch checkpoint to resume from");

  std::string enh_model, enh_in, enh_out;
  auto* enh_cmd = app.add_subcommand("enhance", "denoise one WAV file");
  enh_cmd->add_option("--model", enh_model, "checkpoint file")->required();
  enh_cmd->add_option("--in", enh_in, "input WAV")->required();
  enh_cmd->add_option("--out", enh_out, "output WAV")->required();

  std::string eval_model, eval_pairs, eval_report;
  auto* eval_cmd = app.add_subcommand("eval", "score enhanced clips against clean references");
  eval_cmd->add_option("--model", eval_model, "checkpoint file")->required();
  eval_cmd->add_option("--pairs", eval_pairs, "noisy<TAB>clean manifest")->required();
  eval_cmd->add_option("--report", eval_report, "report path (.json twin written too)")
      ->required();

  auto* params_cmd = app.add_subcommand("params", "print trainable parameter counts");
  params_cmd->add_option("--config", params_cfg.config_path, "key=value config file");
  params_cmd->add_option("--set", params_cfg.overrides, "override: key=value (repeatable)");

  app.add_subcommand("selfcheck", "run built-in verification checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (app.got_subcommand("train")) return cmd_train(train_cfg, train_data, train_out, train_resume);
  if (app.got_subcommand("enhance")) return cmd_enhance(enh_model, enh_in, enh_out);
  if (app.got_subcommand("eval")) return cmd_eval(eval_model, eval_pairs, eval_report);
  if (app.got_subcommand("params")) return cmd_params(params_cfg);
  return cmd_selfcheck();
}
