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

#include "kws/train.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "kws/common.hpp"
#include "kws/pipeline.hpp"

namespace kws {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (lr_peak <= 0.0) throw ConfigError("lr_peak must be > 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (warmup_frac < 0.0 || warmup_frac > 0.5)
    throw ConfigError("warmup_frac must be in [0, 0.5]");
  if (patience < 0) throw ConfigError("patience must be >= 0");
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
  if (step < 0 || step >= total_steps)
    throw ConfigError("lr_schedule: step out of range");
  const std::int64_t warmup = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::llround(cfg.warmup_frac *
                                                static_cast<double>(total_steps))));
  if (step < warmup)
    return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (total_steps <= warmup) return cfg.lr_peak;
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total_steps - warmup);
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

namespace {

struct ValMetrics {
  double loss = 0.0;
  double f1 = 0.0;
};

// Clean eval-mode pass over one split; silence crops use a stable
// per-example stream so validation features do not drift across epochs.
ValMetrics validation_pass(Res15<float>& model, const Manifest& manifest,
                           const std::vector<const Example*>& list,
                           const FitOptions& opt) {
  const Rng val_rng = Rng(opt.seed).fork("val");
  ConfusionCounts counts(manifest.class_map.num_classes());
  double loss_sum = 0.0;
  for (std::size_t at = 0; at < list.size();
       at += static_cast<std::size_t>(opt.eval_batch)) {
    const std::size_t end =
        std::min(list.size(), at + static_cast<std::size_t>(opt.eval_batch));
    const auto n = static_cast<std::int64_t>(end - at);
    std::vector<FeatureMap> feats(static_cast<std::size_t>(n));
    parallel_for(n, [&](std::int64_t i) {
      const auto gi = at + static_cast<std::size_t>(i);
      Rng ex_rng = val_rng.at(static_cast<std::uint64_t>(gi));
      feats[static_cast<std::size_t>(i)] =
          featurize_eval(*list[gi], manifest.class_map, std::nullopt, false,
                         opt.frontend, opt.clip_s, ex_rng);
    });
    const Tensor<float> logits = model.logits_eval(stack_features(feats));
    std::vector<std::int64_t> labels;
    labels.reserve(static_cast<std::size_t>(n));
    for (std::size_t i = at; i < end; ++i) labels.push_back(list[i]->label);
    {
      NoGradGuard no_grad;
      const Var<float> ce =
          cross_entropy(Var<float>::constant(logits), labels);
      loss_sum += static_cast<double>(ce.value()[0]) * static_cast<double>(n);
    }
    const std::int64_t nc = logits.dim(1);
    for (std::int64_t b = 0; b < n; ++b) {
      std::int64_t arg = 0;
      for (std::int64_t j = 1; j < nc; ++j)
        if (logits.at2(b, j) > logits.at2(b, arg)) arg = j;
      counts.add(labels[static_cast<std::size_t>(b)], arg);
    }
  }
  return {loss_sum / static_cast<double>(list.size()), macro_f1(counts)};
}

}  // namespace

TrainReport fit(const Manifest& manifest, Res15<float>& model, const FitOptions& opt) {
  opt.train.validate();
  opt.uncertainty.validate();
  manifest.validate_for_training();
  if (model.spec().n_classes != manifest.class_map.num_classes())
    throw DataError("model class count does not match the manifest");
  if (opt.uncertainty.method != UncertaintyMethod::kNone && opt.train.batch_size < 2)
    log_warn("batch variance is undefined at batch_size 1; uncertainty "
             "perturbations collapse to identity");

  const auto train_list = manifest.split_examples(Split::kTrain);
  const auto val_list = manifest.split_examples(Split::kValidation);
  const auto n_train = static_cast<std::int64_t>(train_list.size());
  const std::int64_t steps_per_epoch =
      (n_train + opt.train.batch_size - 1) / opt.train.batch_size;
  const std::int64_t total_steps = steps_per_epoch * opt.train.epochs;

  const Rng root(opt.seed);
  SgdOptimizer<float> optimizer(model.params(), opt.train.momentum,
                                opt.train.weight_decay);

  TrainReport report;
  std::string ckpt_path;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    ckpt_path = opt.out_dir + "/checkpoint.best.ckpt";
  }

  std::vector<std::int64_t> indices(static_cast<std::size_t>(n_train));
  for (std::int64_t i = 0; i < n_train; ++i) indices[static_cast<std::size_t>(i)] = i;

  std::int64_t global_step = 0;
  for (std::int64_t epoch = 0; epoch < opt.train.epochs; ++epoch) {
    Rng shuffle_rng = root.fork("shuffle").at(static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(indices);
    const Rng aug_root = root.fork("augment").at(static_cast<std::uint64_t>(epoch));

    double loss_sum = 0.0;
    ConfusionCounts train_counts(manifest.class_map.num_classes());
    double last_lr = 0.0;

    for (std::int64_t at = 0; at < n_train; at += opt.train.batch_size) {
      const std::int64_t n = std::min<std::int64_t>(opt.train.batch_size, n_train - at);
      std::vector<FeatureMap> feats(static_cast<std::size_t>(n));
      std::vector<std::int64_t> labels(static_cast<std::size_t>(n));
      parallel_for(n, [&](std::int64_t i) {
        const std::int64_t idx = indices[static_cast<std::size_t>(at + i)];
        const Example& ex = *train_list[static_cast<std::size_t>(idx)];
        // Per-(epoch, example) streams keep results worker-count-independent.
        Rng ex_rng = aug_root.at(static_cast<std::uint64_t>(idx));
        feats[static_cast<std::size_t>(i)] = featurize_train(
            ex, manifest.class_map, opt.policy, opt.frontend, opt.clip_s, ex_rng);
        labels[static_cast<std::size_t>(i)] = ex.label;
      });

      Rng step_rng =
          root.fork("uncertainty").at(static_cast<std::uint64_t>(global_step));
      const Var<float> input = Var<float>::constant(stack_features(feats));
      Var<float> logits = model.forward(input, /*training=*/true, opt.uncertainty,
                                        &step_rng);
      Var<float> loss = cross_entropy(logits, labels);
      if (!std::isfinite(loss.value()[0]))
        throw NumericError("non-finite training loss at step " +
                           std::to_string(global_step));

      optimizer.zero_grad();
      backward(loss);
      last_lr = lr_schedule(global_step, total_steps, opt.train);
      optimizer.step(last_lr);

      loss_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(n);
      const std::int64_t nc = logits.value().dim(1);
      for (std::int64_t b = 0; b < n; ++b) {
        std::int64_t arg = 0;
        for (std::int64_t j = 1; j < nc; ++j)
          if (logits.value().at2(b, j) > logits.value().at2(b, arg)) arg = j;
        train_counts.add(labels[static_cast<std::size_t>(b)], arg);
      }
      ++global_step;
    }

    const ValMetrics val = validation_pass(model, manifest, val_list, opt);
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(n_train);
    em.train_f1 = macro_f1(train_counts);
    em.val_loss = val.loss;
    em.val_f1 = val.f1;
    em.lr = last_lr;
    report.history.push_back(em);

    const bool improved =
        report.best_epoch < 0 || em.val_f1 > report.best_val_f1 ||
        (em.val_f1 == report.best_val_f1 && em.val_loss < report.best_val_loss);
    if (improved) {
      report.best_epoch = epoch;
      report.best_val_f1 = em.val_f1;
      report.best_val_loss = em.val_loss;
      if (!ckpt_path.empty()) {
        nlohmann::json meta;
        meta["class_labels"] = manifest.class_map.all_labels();
        meta["scheme"] = manifest.class_map.scheme_name;
        meta["epoch"] = epoch;
        meta["step"] = global_step;
        nlohmann::json hist = nlohmann::json::array();
        for (const auto& h : report.history)
          hist.push_back({{"epoch", h.epoch},
                          {"train_loss", h.train_loss},
                          {"train_f1", h.train_f1},
                          {"val_loss", h.val_loss},
                          {"val_f1", h.val_f1},
                          {"lr", h.lr}});
        meta["history"] = hist;
        save_checkpoint(ckpt_path, model, meta);
        report.checkpoint_path = ckpt_path;
      }
    } else if (opt.train.early_stop &&
               epoch - report.best_epoch > opt.train.patience) {
      report.early_stopped = true;
      break;
    }
  }

  if (!opt.out_dir.empty())
    write_metrics_csv(opt.out_dir + "/metrics.csv", report.history);
  return report;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,split,loss,macro_f1,lr\n";
  char buf[160];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof(buf), "%lld,train,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(h.epoch), h.train_loss, h.train_f1, h.lr);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%lld,validation,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(h.epoch), h.val_loss, h.val_f1, h.lr);
    out << buf;
  }
}

}  // namespace kws
