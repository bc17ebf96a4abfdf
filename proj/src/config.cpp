/* Copyright 2026 The PatchKWS Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "kws/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "kws/common.hpp"

namespace kws {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got \"" + v + "\"");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got \"" + v + "\"");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    unsigned long long i = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an unsigned integer, got \"" + v + "\"");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got \"" + v + "\"");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::vector<std::string> parse_string_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double d) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), d);
  (void)ec;
  return std::string(buf, p);
}

std::string fmt_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(v[i]);
  }
  return out;
}

std::string fmt_string_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

}  // namespace

void ExperimentConfig::set(const std::string& dotted_key, const std::string& raw) {
  const std::string value = trim(raw);
  const auto dot = dotted_key.find('.');
  const std::string section = dot == std::string::npos ? "" : dotted_key.substr(0, dot);
  const std::string key = dot == std::string::npos ? dotted_key : dotted_key.substr(dot + 1);
  const std::string& k = dotted_key;

  if (section.empty()) {
    if (key == "seed") { seed = parse_u64(k, value); return; }
    throw ConfigError("unknown top-level key: " + key);
  }
  if (section == "dataset") {
    if (key == "kind") {
      if (value != "gsc" && value != "jsonl")
        throw ConfigError("dataset.kind must be gsc or jsonl");
      dataset.kind = value; return;
    }
    if (key == "root") { dataset.root = value; return; }
    if (key == "manifest") { dataset.manifest = value; return; }
    if (key == "scheme") { dataset.scheme = value; return; }
    if (key == "clip_s") { dataset.clip_s = parse_double(k, value); return; }
    if (key == "noise_dir") { dataset.noise_dir = value; return; }
  } else if (section == "frontend") {
    if (key == "fft_size") { frontend.fft_size = static_cast<int>(parse_int(k, value)); return; }
    if (key == "window") { frontend.window = static_cast<int>(parse_int(k, value)); return; }
    if (key == "hop") { frontend.hop = static_cast<int>(parse_int(k, value)); return; }
    if (key == "n_mels") { frontend.n_mels = static_cast<int>(parse_int(k, value)); return; }
    if (key == "fmin") { frontend.fmin = parse_double(k, value); return; }
    if (key == "fmax") { frontend.fmax = parse_double(k, value); return; }
    if (key == "log_floor") { frontend.log_floor = parse_double(k, value); return; }
  } else if (section == "augment") {
    if (key == "enabled") { augment.enabled = parse_bool(k, value); return; }
    if (key == "shift_ms") { augment.shift_ms = parse_double(k, value); return; }
    if (key == "noise_prob") { augment.noise_prob = parse_double(k, value); return; }
    if (key == "trim") { augment.trim = parse_bool(k, value); return; }
    if (key == "noise_mode") {
      if (value != "gain" && value != "snr")
        throw ConfigError("augment.noise_mode must be gain or snr");
      augment.noise_mode = value; return;
    }
    if (key == "gain_max") { augment.gain_max = parse_double(k, value); return; }
    if (key == "snr_min_db") { augment.snr_min_db = parse_double(k, value); return; }
    if (key == "snr_max_db") { augment.snr_max_db = parse_double(k, value); return; }
  } else if (section == "uncertainty") {
    if (key == "method") { uncertainty.method = method_from_name(value); return; }
    if (key == "p") { uncertainty.p = parse_double(k, value); return; }
    if (key == "k_h") { uncertainty.k_h = static_cast<int>(parse_int(k, value)); return; }
    if (key == "k_w") { uncertainty.k_w = static_cast<int>(parse_int(k, value)); return; }
    if (key == "lambda") { uncertainty.lambda_mix = parse_double(k, value); return; }
    if (key == "eps") { uncertainty.eps = parse_double(k, value); return; }
    if (key == "variance_mode") {
      uncertainty.variance_mode = variance_mode_from_name(value); return;
    }
    if (key == "grad_through_variance") {
      uncertainty.grad_through_variance = parse_bool(k, value); return;
    }
  } else if (section == "model") {
    if (key == "channels") { model.channels = parse_int(k, value); return; }
    if (key == "n_blocks") { model.n_blocks = parse_int(k, value); return; }
    if (key == "kernel") { model.kernel = static_cast<int>(parse_int(k, value)); return; }
  } else if (section == "train") {
    if (key == "epochs") { train.epochs = parse_int(k, value); return; }
    if (key == "batch_size") { train.batch_size = parse_int(k, value); return; }
    if (key == "lr_peak") { train.lr_peak = parse_double(k, value); return; }
    if (key == "momentum") { train.momentum = parse_double(k, value); return; }
    if (key == "weight_decay") { train.weight_decay = parse_double(k, value); return; }
    if (key == "warmup_frac") { train.warmup_frac = parse_double(k, value); return; }
    if (key == "early_stop") { train.early_stop = parse_bool(k, value); return; }
    if (key == "patience") { train.patience = parse_int(k, value); return; }
  } else if (section == "eval") {
    if (key == "snr_grid") { eval.snr_grid = parse_double_list(k, value); return; }
    if (key == "noise_kinds") {
      eval.noise_kinds = parse_string_list(value);
      for (const auto& n : eval.noise_kinds)
        if (n != "wgn" && n != "bank")
          throw ConfigError("eval.noise_kinds entries must be wgn or bank");
      return;
    }
    if (key == "time_shift") { eval.time_shift = parse_bool(k, value); return; }
    if (key == "n_seeds") { eval.n_seeds = parse_int(k, value); return; }
    if (key == "seeds_mode") {
      if (value != "eval" && value != "train")
        throw ConfigError("eval.seeds_mode must be eval or train");
      eval.seeds_mode = value; return;
    }
    if (key == "batch_size") { eval.batch_size = parse_int(k, value); return; }
  } else if (section == "ablate") {
    if (key == "p_grid") { ablate.p_grid = parse_double_list(k, value); return; }
  } else {
    throw ConfigError("unknown config section: [" + section + "]");
  }
  throw ConfigError("unknown config key: " + dotted_key);
}

void ExperimentConfig::validate() const {
  uncertainty.validate();
  model.validate();
  train.validate();
  if (dataset.clip_s <= 0) throw ConfigError("dataset.clip_s must be > 0");
  if (dataset.kind == "gsc" && dataset.root.empty())
    throw ConfigError("dataset.kind = gsc requires dataset.root");
  if (dataset.kind == "jsonl" && dataset.manifest.empty())
    throw ConfigError("dataset.kind = jsonl requires dataset.manifest");
  if (eval.snr_grid.empty()) throw ConfigError("eval.snr_grid must be nonempty");
  if (eval.n_seeds < 1) throw ConfigError("eval.n_seeds must be >= 1");
  for (double p : ablate.p_grid)
    if (p < 0.0 || p > 1.0) throw ConfigError("ablate.p_grid entries must be in [0,1]");
}

std::string ExperimentConfig::dump() const {
  std::ostringstream out;
  out << "seed = " << seed << "\n\n";
  out << "[dataset]\n";
  out << "kind = " << dataset.kind << "\n";
  out << "root = " << dataset.root << "\n";
  out << "manifest = " << dataset.manifest << "\n";
  out << "scheme = " << dataset.scheme << "\n";
  out << "clip_s = " << fmt_double(dataset.clip_s) << "\n";
  out << "noise_dir = " << dataset.noise_dir << "\n\n";
  out << "[frontend]\n";
  out << "fft_size = " << frontend.fft_size << "\n";
  out << "window = " << frontend.window << "\n";
  out << "hop = " << frontend.hop << "\n";
  out << "n_mels = " << frontend.n_mels << "\n";
  out << "fmin = " << fmt_double(frontend.fmin) << "\n";
  out << "fmax = " << fmt_double(frontend.fmax) << "\n";
  out << "log_floor = " << fmt_double(frontend.log_floor) << "\n\n";
  out << "[augment]\n";
  out << "enabled = " << (augment.enabled ? "true" : "false") << "\n";
  out << "shift_ms = " << fmt_double(augment.shift_ms) << "\n";
  out << "noise_prob = " << fmt_double(augment.noise_prob) << "\n";
  out << "trim = " << (augment.trim ? "true" : "false") << "\n";
  out << "noise_mode = " << augment.noise_mode << "\n";
  out << "gain_max = " << fmt_double(augment.gain_max) << "\n";
  out << "snr_min_db = " << fmt_double(augment.snr_min_db) << "\n";
  out << "snr_max_db = " << fmt_double(augment.snr_max_db) << "\n\n";
  out << "[uncertainty]\n";
  out << "method = " << method_name(uncertainty.method) << "\n";
  out << "p = " << fmt_double(uncertainty.p) << "\n";
  out << "k_h = " << uncertainty.k_h << "\n";
  out << "k_w = " << uncertainty.k_w << "\n";
  out << "lambda = " << fmt_double(uncertainty.lambda_mix) << "\n";
  out << "eps = " << fmt_double(uncertainty.eps) << "\n";
  out << "variance_mode = " << variance_mode_name(uncertainty.variance_mode) << "\n";
  out << "grad_through_variance = "
      << (uncertainty.grad_through_variance ? "true" : "false") << "\n\n";
  out << "[model]\n";
  out << "channels = " << model.channels << "\n";
  out << "n_blocks = " << model.n_blocks << "\n";
  out << "kernel = " << model.kernel << "\n\n";
  out << "[train]\n";
  out << "epochs = " << train.epochs << "\n";
  out << "batch_size = " << train.batch_size << "\n";
  out << "lr_peak = " << fmt_double(train.lr_peak) << "\n";
  out << "momentum = " << fmt_double(train.momentum) << "\n";
  out << "weight_decay = " << fmt_double(train.weight_decay) << "\n";
  out << "warmup_frac = " << fmt_double(train.warmup_frac) << "\n";
  out << "early_stop = " << (train.early_stop ? "true" : "false") << "\n";
  out << "patience = " << train.patience << "\n\n";
  out << "[eval]\n";
  out << "snr_grid = " << fmt_double_list(eval.snr_grid) << "\n";
  out << "noise_kinds = " << fmt_string_list(eval.noise_kinds) << "\n";
  out << "time_shift = " << (eval.time_shift ? "true" : "false") << "\n";
  out << "n_seeds = " << eval.n_seeds << "\n";
  out << "seeds_mode = " << eval.seeds_mode << "\n";
  out << "batch_size = " << eval.batch_size << "\n\n";
  out << "[ablate]\n";
  out << "p_grid = " << fmt_double_list(ablate.p_grid) << "\n";
  return out.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text,
                                         const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      cfg.set(section.empty() ? key : section + "." + key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

}  // namespace kws
