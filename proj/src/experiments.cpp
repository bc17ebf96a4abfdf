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

#include "kws/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "kws/common.hpp"

namespace fs = std::filesystem;

namespace kws {

namespace {

std::vector<std::string> wavs_in_dir(const std::string& dir) {
  std::vector<std::string> out;
  if (dir.empty()) return out;
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
  for (const auto& f : fs::directory_iterator(dir))
    if (f.path().extension() == ".wav") out.push_back(f.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  return out + "\"";
}

std::string per_class_json(const std::vector<double>& f1) {
  nlohmann::json j = nlohmann::json::array();
  for (double v : f1) {
    if (std::isnan(v))
      j.push_back(nullptr);
    else
      j.push_back(v);
  }
  return j.dump();
}

Res15<float> load_model_checked(const std::string& checkpoint, const Manifest& m) {
  nlohmann::json meta;
  Res15<float> model = load_checkpoint<float>(checkpoint, &meta);
  if (meta.contains("class_labels")) {
    const auto labels = meta["class_labels"].get<std::vector<std::string>>();
    if (labels != m.class_map.all_labels())
      throw DataError("checkpoint class labels do not match the dataset scheme");
  }
  return model;
}

struct SweepRow {
  std::string condition;
  double snr_db = 0.0;
  bool shifted = false;
  std::uint64_t seed = 0;
  double f1 = 0.0;
  std::vector<double> per_class;
};

}  // namespace

LoadedDataset load_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  LoadedDataset out;
  const ClassMap scheme = ClassMap::scheme(cfg.dataset.scheme);
  if (cfg.dataset.kind == "gsc")
    out.manifest = build_gsc_manifest(cfg.dataset.root, scheme);
  else
    out.manifest = load_jsonl_manifest(cfg.dataset.manifest, scheme);

  std::vector<std::string> noise_paths = out.manifest.noise_paths;
  for (auto& p : wavs_in_dir(cfg.dataset.noise_dir)) noise_paths.push_back(p);
  if (!noise_paths.empty()) out.bank = NoiseBank::load(noise_paths);
  return out;
}

AugmentPolicy make_policy(const ExperimentConfig& cfg,
                          std::shared_ptr<const NoiseBank> bank) {
  if (!cfg.augment.enabled) return AugmentPolicy::disabled();
  AugmentPolicy p;
  p.shift_min_ms = -cfg.augment.shift_ms;
  p.shift_max_ms = cfg.augment.shift_ms;
  p.trim_enabled = cfg.augment.trim;
  p.noise_mode = cfg.augment.noise_mode == "snr" ? NoiseMode::kSnr : NoiseMode::kGain;
  p.gain_max = cfg.augment.gain_max;
  p.snr_min_db = cfg.augment.snr_min_db;
  p.snr_max_db = cfg.augment.snr_max_db;
  p.noise_bank = bank;
  p.noise_prob = (bank && !bank->empty()) ? cfg.augment.noise_prob : 0.0;
  if (cfg.augment.noise_prob > 0.0 && p.noise_prob == 0.0)
    log_warn("no noise bank available; training noise mixing disabled");
  return p;
}

FitOptions make_fit_options(const ExperimentConfig& cfg, const std::string& out_dir) {
  FitOptions opt;
  opt.train = cfg.train;
  opt.uncertainty = cfg.uncertainty;
  opt.frontend = cfg.frontend;
  opt.clip_s = cfg.dataset.clip_s;
  opt.seed = cfg.seed;
  opt.out_dir = out_dir;
  opt.eval_batch = cfg.eval.batch_size;
  return opt;
}

void write_config_snapshot(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir + "/config.resolved.ini");
  if (!out) throw DataError("cannot write config snapshot in " + out_dir);
  out << cfg.dump();
}

TrainReport run_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  write_config_snapshot(cfg, out_dir);
  LoadedDataset data = load_dataset(cfg);
  data.manifest.validate_for_training();

  ModelSpec spec = cfg.model;
  spec.n_classes = data.manifest.class_map.num_classes();
  Res15<float> model(spec, Rng(cfg.seed).fork("init"));

  FitOptions opt = make_fit_options(cfg, out_dir);
  opt.policy = make_policy(cfg, data.bank);
  return fit(data.manifest, model, opt);
}

double run_eval(const ExperimentConfig& cfg, const std::string& checkpoint,
                const std::string& out_dir) {
  write_config_snapshot(cfg, out_dir);
  LoadedDataset data = load_dataset(cfg);
  Res15<float> model = load_model_checked(checkpoint, data.manifest);

  EvalOptions opt;
  opt.seed = cfg.seed;
  opt.frontend = cfg.frontend;
  opt.clip_s = cfg.dataset.clip_s;
  opt.batch_size = cfg.eval.batch_size;

  std::ofstream out(out_dir + "/results.csv");
  if (!out) throw DataError("cannot write results.csv in " + out_dir);
  out << "method,p,dataset,condition,snr_db,shifted,seed,macro_f1,per_class_f1\n";

  auto emit = [&](const EvalResult& r, const std::string& condition, bool shifted) {
    char head[128];
    std::snprintf(head, sizeof(head), "%s,%g,%s,%s,,%d,%llu,",
                  method_name(cfg.uncertainty.method), cfg.uncertainty.p,
                  cfg.dataset.scheme.c_str(), condition.c_str(), shifted ? 1 : 0,
                  static_cast<unsigned long long>(cfg.seed));
    out << head << format_pct(r.macro_f1) << ","
        << csv_quote(per_class_json(r.per_class_f1)) << "\n";
  };

  opt.condition = "clean";
  const EvalResult clean = evaluate(model, data.manifest, Split::kTest, opt);
  emit(clean, "clean", false);
  if (cfg.eval.time_shift) {
    EvalOptions shifted = opt;
    shifted.time_shift = true;
    shifted.condition = "clean+shift";
    emit(evaluate(model, data.manifest, Split::kTest, shifted), "clean", true);
  }
  log_info("clean test macro F1: " + format_pct(clean.macro_f1));
  return clean.macro_f1;
}

void run_sweep(const ExperimentConfig& cfg, const std::string& checkpoint,
               const std::string& out_dir) {
  write_config_snapshot(cfg, out_dir);
  LoadedDataset data = load_dataset(cfg);

  std::vector<bool> shift_variants = {false};
  if (cfg.eval.time_shift) shift_variants.push_back(true);

  std::vector<SweepRow> rows;
  for (std::int64_t s = 0; s < cfg.eval.n_seeds; ++s) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(s);
    // eval mode: one checkpoint, seed varies evaluation randomness;
    // train mode: a model re-trained per seed, fixed evaluation stream.
    Res15<float> model = [&]() {
      if (cfg.eval.seeds_mode == "train") {
        ExperimentConfig c2 = cfg;
        c2.seed = seed;
        const std::string run_dir =
            out_dir + "/retrain_seed" + std::to_string(seed);
        run_train(c2, run_dir);
        return load_model_checked(run_dir + "/checkpoint.best.ckpt", data.manifest);
      }
      return load_model_checked(checkpoint, data.manifest);
    }();

    for (const auto& kind : cfg.eval.noise_kinds) {
      for (double snr : cfg.eval.snr_grid) {
        for (bool shifted : shift_variants) {
          SnrSpec spec;
          spec.snr_db = snr;
          spec.kind = kind == "bank" ? SnrSpec::Kind::kBank : SnrSpec::Kind::kWGN;
          spec.bank = data.bank;
          EvalOptions opt;
          opt.noise = spec;
          opt.time_shift = shifted;
          opt.seed = cfg.eval.seeds_mode == "train" ? cfg.seed : seed;
          opt.frontend = cfg.frontend;
          opt.clip_s = cfg.dataset.clip_s;
          opt.batch_size = cfg.eval.batch_size;
          char cond[64];
          std::snprintf(cond, sizeof(cond), "%s@%g%s", kind.c_str(), snr,
                        shifted ? "+shift" : "");
          opt.condition = cond;
          const EvalResult r = evaluate(model, data.manifest, Split::kTest, opt);
          rows.push_back({cond, snr, shifted, seed, r.macro_f1, r.per_class_f1});
        }
      }
    }
  }

  std::ofstream out(out_dir + "/sweep.csv");
  if (!out) throw DataError("cannot write sweep.csv in " + out_dir);
  out << "method,p,dataset,condition,snr_db,shifted,seed,macro_f1,per_class_f1\n";
  for (const auto& r : rows) {
    char head[160];
    std::snprintf(head, sizeof(head), "%s,%g,%s,%s,%g,%d,%llu,",
                  method_name(cfg.uncertainty.method), cfg.uncertainty.p,
                  cfg.dataset.scheme.c_str(), r.condition.c_str(), r.snr_db,
                  r.shifted ? 1 : 0, static_cast<unsigned long long>(r.seed));
    out << head << format_pct(r.f1) << "," << csv_quote(per_class_json(r.per_class))
        << "\n";
  }

  // One summary line per condition, mean±std over seeds.
  std::map<std::string, std::vector<double>> by_condition;
  for (const auto& r : rows) by_condition[r.condition].push_back(r.f1);
  std::ofstream summary(out_dir + "/sweep_summary.csv");
  summary << "method,p,dataset,condition,f1_mean_std\n";
  for (const auto& [cond, f1s] : by_condition) {
    summary << method_name(cfg.uncertainty.method) << "," << cfg.uncertainty.p << ","
            << cfg.dataset.scheme << "," << cond << "," << format_mean_std(f1s)
            << "\n";
    log_info("sweep " + cond + ": " + format_mean_std(f1s));
  }
}

void run_ablate_p(const ExperimentConfig& cfg, const std::string& out_dir) {
  write_config_snapshot(cfg, out_dir);
  if (cfg.uncertainty.method == UncertaintyMethod::kNone)
    log_warn("ablate-p with method None: p has no effect; rows will match the baseline");

  std::ofstream out(out_dir + "/ablate_p.csv");
  if (!out) throw DataError("cannot write ablate_p.csv in " + out_dir);
  out << "p,clean_f1,shifted_f1\n";
  for (double p : cfg.ablate.p_grid) {
    ExperimentConfig c2 = cfg;
    c2.uncertainty.p = p;
    char tag[32];
    std::snprintf(tag, sizeof(tag), "p%g", p);
    const std::string run_dir = out_dir + "/" + tag;
    run_train(c2, run_dir);

    LoadedDataset data = load_dataset(c2);
    Res15<float> model =
        load_model_checked(run_dir + "/checkpoint.best.ckpt", data.manifest);
    EvalOptions opt;
    opt.seed = cfg.seed;
    opt.frontend = cfg.frontend;
    opt.clip_s = cfg.dataset.clip_s;
    opt.batch_size = cfg.eval.batch_size;
    opt.condition = "clean";
    const double clean = evaluate(model, data.manifest, Split::kTest, opt).macro_f1;
    opt.time_shift = true;
    opt.condition = "clean+shift";
    const double shifted = evaluate(model, data.manifest, Split::kTest, opt).macro_f1;
    out << p << "," << format_pct(clean) << "," << format_pct(shifted) << "\n";
    out.flush();
    log_info(std::string(tag) + ": clean " + format_pct(clean) + ", shifted " +
             format_pct(shifted));
  }
}

void run_spectro_stats(const ExperimentConfig& cfg, Split split,
                       const std::string& out_dir) {
  write_config_snapshot(cfg, out_dir);
  LoadedDataset data = load_dataset(cfg);
  const std::string dir = out_dir + "/spectro";
  fs::create_directories(dir);

  const auto labels = data.manifest.class_map.all_labels();
  const Rng root(cfg.seed);
  for (std::size_t cls = 0; cls < labels.size(); ++cls) {
    std::vector<const Example*> list;
    for (const auto& e : data.manifest.examples)
      if (e.split == split && e.label == static_cast<std::int64_t>(cls))
        list.push_back(&e);
    if (list.empty()) {
      log_warn("spectro-stats: no examples for class " + labels[cls]);
      continue;
    }
    std::vector<FeatureMap> maps(list.size());
    parallel_for(static_cast<std::int64_t>(list.size()), [&](std::int64_t i) {
      Rng ex_rng = root.fork("spectro").at(static_cast<std::uint64_t>(i));
      Waveform w = load_example_audio(*list[static_cast<std::size_t>(i)],
                                      data.manifest.class_map, ex_rng);
      maps[static_cast<std::size_t>(i)] = log_power_spectrogram(w, cfg.frontend);
    });
    const Eigen::MatrixXf mean = mean_spectrogram(maps);

    std::ofstream csv(dir + "/" + labels[cls] + ".csv");
    for (Eigen::Index h = 0; h < mean.rows(); ++h) {
      for (Eigen::Index t = 0; t < mean.cols(); ++t) {
        if (t) csv << ",";
        csv << mean(h, t);
      }
      csv << "\n";
    }

    // P2 graymap, frequency increasing upward, amplitudes scaled to 0..255.
    std::ofstream pgm(dir + "/" + labels[cls] + ".pgm");
    const float lo = mean.minCoeff(), hi = mean.maxCoeff();
    const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;
    pgm << "P2\n" << mean.cols() << " " << mean.rows() << "\n255\n";
    for (Eigen::Index h = mean.rows() - 1; h >= 0; --h) {
      for (Eigen::Index t = 0; t < mean.cols(); ++t) {
        if (t) pgm << " ";
        pgm << static_cast<int>((mean(h, t) - lo) * scale + 0.5f);
      }
      pgm << "\n";
    }
    log_info("spectro-stats: " + labels[cls] + " over " +
             std::to_string(list.size()) + " examples");
  }
}

}  // namespace kws
