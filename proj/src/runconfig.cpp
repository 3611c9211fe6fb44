// saf/runconfig.cpp
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

#include "saf/runconfig.hpp"

#include <fstream>

namespace saf {

namespace {

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int x = std::stoi(v, &used);
    SAF_CHECK(used == v.size(), "config key ", key, ": trailing junk in '", v, "'");
    return x;
  } catch (const SafError&) {
    throw;
  } catch (const std::exception&) {
    fail("config key ", key, ": expected an integer, got '", v, "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    SAF_CHECK(used == v.size(), "config key ", key, ": trailing junk in '", v, "'");
    return x;
  } catch (const SafError&) {
    throw;
  } catch (const std::exception&) {
    fail("config key ", key, ": expected a number, got '", v, "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail("config key ", key, ": expected true/false, got '", v, "'");
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= v.size()) {
    size_t comma = v.find(',', pos);
    if (comma == std::string::npos) comma = v.size();
    out.push_back(v.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  // model
  if (key == "channels") model.channels = to_int(key, value);
  else if (key == "af_layers") model.af_layers = to_int(key, value);
  else if (key == "af_outer_skip") model.af_outer_skip = to_bool(key, value);
  else if (key == "use_phase_input") model.use_phase_input = to_bool(key, value);
  else if (key == "tcn_hidden") model.tcn_hidden = to_int(key, value);
  else if (key == "tcn_dilations") {
    model.tcn_dilations.clear();
    for (const auto& part : split_commas(value)) model.tcn_dilations.push_back(to_int(key, part));
  } else if (key == "tcn_repeats") model.tcn_repeats = to_int(key, value);
  else if (key == "local_attention_window") model.local_attention_window = to_int(key, value);
  else if (key == "modulation_kernel") model.modulation_kernel = to_int(key, value);
  else if (key == "encoder_dw_kernel_t") model.encoder_dw_kernel_t = to_int(key, value);
  else if (key == "encoder_dw_kernel_f") model.encoder_dw_kernel_f = to_int(key, value);
  else if (key == "freq_bins") model.freq_bins = to_int(key, value);
  // training
  else if (key == "learning_rate") train.learning_rate = to_double(key, value);
  else if (key == "beta1") train.beta1 = to_double(key, value);
  else if (key == "beta2") train.beta2 = to_double(key, value);
  else if (key == "adam_eps") train.adam_eps = to_double(key, value);
  else if (key == "epochs") train.epochs = to_int(key, value);
  else if (key == "batch_size") train.batch_size = to_int(key, value);
  else if (key == "max_clip_seconds") train.max_clip_seconds = to_double(key, value);
  else if (key == "seed") train.seed = static_cast<uint64_t>(std::stoull(value));
  else if (key == "snr_levels") {
    train.snr_levels.clear();
    for (const auto& part : split_commas(value)) train.snr_levels.push_back(to_double(key, part));
  } else if (key == "max_steps") train.max_steps = to_int(key, value);
  else fail("unknown config key '", key, "'");
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  SAF_CHECK(in.good(), "cannot open config file: ", path);
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments and surrounding whitespace
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const size_t eq = line.find('=');
    SAF_CHECK(eq != std::string::npos, "config ", path, " line ", line_no,
              ": expected key=value, got '", line, "'");
    apply(line.substr(0, eq), line.substr(eq + 1));
  }
}

}  // namespace saf
