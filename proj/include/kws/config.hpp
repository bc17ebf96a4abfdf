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

#ifndef KWS_CONFIG_HPP_
#define KWS_CONFIG_HPP_

#include <string>
#include <vector>

#include "kws/augment.hpp"
#include "kws/dsp.hpp"
#include "kws/nn.hpp"
#include "kws/train.hpp"
#include "kws/uncertainty.hpp"

namespace kws {

// Experiment configuration: INI-style sections of key = value entries.
// Unknown sections or keys are rejected; every field defaults to the
// reference training setup. `--set section.key=value` overrides reuse the
// same parsing path, and the resolved snapshot written into each run
// directory parses back to an identical configuration.
struct ExperimentConfig {
  std::uint64_t seed = 1234;

  struct Dataset {
    std::string kind = "gsc";  // gsc | jsonl
    std::string root;          // gsc: dataset tree root
    std::string manifest;      // jsonl: manifest path
    std::string scheme = "gsc12";
    double clip_s = 1.0;
    std::string noise_dir;     // optional extra noise bank (e.g. music)
  } dataset;

  FrontendParams frontend;

  struct Augment {
    bool enabled = true;
    double shift_ms = 100.0;  // symmetric range [-shift_ms, shift_ms]
    double noise_prob = 0.8;
    bool trim = false;
    std::string noise_mode = "gain";  // gain | snr
    double gain_max = 0.1;
    double snr_min_db = 0.0;
    double snr_max_db = 20.0;
  } augment;

  UncertaintyConfig uncertainty;
  ModelSpec model;
  TrainConfig train;

  struct Eval {
    std::vector<double> snr_grid = {20.0, 10.0, 5.0, 0.0, -5.0};
    std::vector<std::string> noise_kinds = {"wgn"};  // wgn | bank
    bool time_shift = false;
    std::int64_t n_seeds = 1;
    std::string seeds_mode = "eval";  // eval | train
    std::int64_t batch_size = 64;
  } eval;

  struct Ablate {
    std::vector<double> p_grid = {0.1, 0.2, 0.3, 0.4, 0.5,
                                  0.6, 0.7, 0.8, 0.9, 1.0};
  } ablate;

  // Applies one "section.key" = value assignment; throws ConfigError for
  // unknown keys or malformed values.
  void set(const std::string& dotted_key, const std::string& value);
  void validate() const;

  // Canonical resolved snapshot (INI text).
  std::string dump() const;

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig parse(const std::string& text, const std::string& origin);
};

}  // namespace kws

#endif  // KWS_CONFIG_HPP_
