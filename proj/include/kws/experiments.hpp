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

#ifndef KWS_EXPERIMENTS_HPP_
#define KWS_EXPERIMENTS_HPP_

#include <string>

#include "kws/config.hpp"
#include "kws/eval.hpp"
#include "kws/train.hpp"

namespace kws {

struct LoadedDataset {
  Manifest manifest;
  std::shared_ptr<const NoiseBank> bank;  // may be empty
};

// Builds the manifest per [dataset] (GSC-style tree or JSON-lines) and
// loads the noise bank from the tree's background directory plus the
// optional noise_dir.
LoadedDataset load_dataset(const ExperimentConfig& cfg);

AugmentPolicy make_policy(const ExperimentConfig& cfg,
                          std::shared_ptr<const NoiseBank> bank);
FitOptions make_fit_options(const ExperimentConfig& cfg, const std::string& out_dir);

// Writes the resolved config snapshot into the run directory.
void write_config_snapshot(const ExperimentConfig& cfg, const std::string& out_dir);

// train: fresh model per config, fit, metrics + best checkpoint in out_dir.
TrainReport run_train(const ExperimentConfig& cfg, const std::string& out_dir);

// eval: clean (plus optional time-shift) evaluation of a checkpoint;
// writes results.csv. Returns the clean macro F1.
double run_eval(const ExperimentConfig& cfg, const std::string& checkpoint,
                const std::string& out_dir);

// sweep: noise grid (kinds x SNRs [x shift]) over n_seeds; writes
// sweep.csv (one row per condition/seed) and sweep_summary.csv
// ("mean±std" percentages per condition).
void run_sweep(const ExperimentConfig& cfg, const std::string& checkpoint,
               const std::string& out_dir);

// ablate-p: trains one model per p in [ablate].p_grid and evaluates clean
// and time-shifted; writes ablate_p.csv (one row per p).
void run_ablate_p(const ExperimentConfig& cfg, const std::string& out_dir);

// spectro-stats: per-class mean log power spectrogram over a split; writes
// <class>.csv matrices and <class>.pgm graymaps under out_dir/spectro.
void run_spectro_stats(const ExperimentConfig& cfg, Split split,
                       const std::string& out_dir);

}  // namespace kws

#endif  // KWS_EXPERIMENTS_HPP_
