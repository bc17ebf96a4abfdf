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

// Command-line front end: keyword-spotting training, evaluation, noise
// sweeps, the application-probability ablation, spectrogram statistics, and
// a self-test of the numeric invariants. Exit codes: 0 success, 2
// configuration error, 3 data error, 4 numeric failure.

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kws/common.hpp"
#include "kws/experiments.hpp"
#include "kws/selftest.hpp"

namespace {

kws::ExperimentConfig load_config(const std::string& path,
                                  const std::vector<std::string>& overrides) {
  kws::ExperimentConfig cfg = path.empty() ? kws::ExperimentConfig()
                                           : kws::ExperimentConfig::load(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw kws::ConfigError("--set expects section.key=value, got " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void print_manifest_stats(const kws::Manifest& m) {
  const auto labels = m.class_map.all_labels();
  std::printf("classes: %lld, examples: %zu, noise clips: %zu\n",
              static_cast<long long>(m.class_map.num_classes()),
              m.examples.size(), m.noise_paths.size());
  for (kws::Split s :
       {kws::Split::kTrain, kws::Split::kValidation, kws::Split::kTest}) {
    std::map<std::int64_t, std::int64_t> per_class;
    for (const auto& e : m.examples)
      if (e.split == s) ++per_class[e.label];
    std::printf("%-10s %6lld examples\n", kws::split_name(s),
                static_cast<long long>(m.count(s)));
    for (const auto& [label, count] : per_class)
      std::printf("    %-12s %6lld\n", labels[static_cast<std::size_t>(label)].c_str(),
                  static_cast<long long>(count));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patchkws: keyword spotting with feature-statistics "
               "uncertainty augmentation"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "run", checkpoint, split_name = "test";
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "experiment config file");
  app.add_option("--set", overrides, "override config entries (section.key=value)")
      ->take_all();
  app.add_option("-o,--out", out_dir, "run directory for artifacts");

  auto* prepare = app.add_subcommand("prepare", "build/validate the dataset manifest");
  auto* train = app.add_subcommand("train", "train a model");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the clean test set");
  auto* sweep = app.add_subcommand("sweep", "noise-grid evaluation of a checkpoint");
  auto* ablate = app.add_subcommand("ablate-p", "train/evaluate across the p grid");
  auto* spectro = app.add_subcommand("spectro-stats",
                                     "per-class mean log-spectrogram data");
  auto* selftest = app.add_subcommand("selftest", "run the invariant suite");

  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  sweep->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  spectro->add_option("--split", split_name, "split to average over");

  // Convenience overrides mirrored onto config keys.
  std::string sweep_snr, sweep_noise, ablate_grid;
  sweep->add_option("--snr", sweep_snr, "comma-separated SNR grid (dB)");
  sweep->add_option("--noise", sweep_noise, "noise kinds: wgn,bank");
  ablate->add_option("--grid", ablate_grid, "comma-separated p grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (selftest->parsed()) {
      const int failures = kws::run_selftest();
      if (failures > 0) {
        std::fprintf(stderr, "%d selftest check(s) failed\n", failures);
        return 4;
      }
      std::printf("all selftest checks passed\n");
      return 0;
    }

    kws::ExperimentConfig cfg = load_config(config_path, overrides);
    if (!sweep_snr.empty()) cfg.set("eval.snr_grid", sweep_snr);
    if (!sweep_noise.empty()) cfg.set("eval.noise_kinds", sweep_noise);
    if (!ablate_grid.empty()) cfg.set("ablate.p_grid", ablate_grid);

    if (prepare->parsed()) {
      kws::write_config_snapshot(cfg, out_dir);
      kws::LoadedDataset data = kws::load_dataset(cfg);
      kws::write_jsonl_manifest(out_dir + "/manifest.jsonl", data.manifest);
      print_manifest_stats(data.manifest);
    } else if (train->parsed()) {
      const kws::TrainReport rep = kws::run_train(cfg, out_dir);
      std::printf("best epoch %lld, validation macro F1 %s%%\n",
                  static_cast<long long>(rep.best_epoch),
                  kws::format_pct(rep.best_val_f1).c_str());
    } else if (eval->parsed()) {
      kws::run_eval(cfg, checkpoint, out_dir);
    } else if (sweep->parsed()) {
      kws::run_sweep(cfg, checkpoint, out_dir);
    } else if (ablate->parsed()) {
      kws::run_ablate_p(cfg, out_dir);
    } else if (spectro->parsed()) {
      kws::run_spectro_stats(cfg, kws::split_from_name(split_name), out_dir);
    }
    return 0;
  } catch (const kws::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const kws::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const kws::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
