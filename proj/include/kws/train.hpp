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

#ifndef KWS_TRAIN_HPP_
#define KWS_TRAIN_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "kws/augment.hpp"
#include "kws/eval.hpp"
#include "kws/manifest.hpp"
#include "kws/nn.hpp"

namespace kws {

struct TrainConfig {
  std::int64_t epochs = 200;
  std::int64_t batch_size = 100;
  double lr_peak = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.001;
  double warmup_frac = 0.05;
  bool early_stop = false;
  std::int64_t patience = 20;  // epochs without improvement before stopping

  void validate() const;
};

// Linear warmup from zero to lr_peak over max(1, warmup_frac * total)
// steps, then cosine annealing to zero at total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

// SGD with classic (coupled) weight decay folded into the momentum buffer:
//   v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v
// Parameters flagged weight_decay=false (batch-norm affine) skip the decay
// term. Throws NumericError when a gradient is non-finite.
template <typename S>
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<ParamRef<S>> params, double momentum, double weight_decay)
      : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    for (auto& p : params_) velocity_.push_back(Tensor<S>::zeros(p.var.shape()));
  }

  void step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.var.has_grad())
        throw NumericError("missing gradient for parameter " + p.name);
      const auto& g = p.var.grad();
      if (!g.all_finite())
        throw NumericError("non-finite gradient in parameter " + p.name +
                           "; aborting step");
      auto& v = velocity_[i];
      auto& w = p.var.value();
      const S mu = static_cast<S>(momentum_);
      const S wd = p.weight_decay ? static_cast<S>(weight_decay_) : S(0);
      for (std::int64_t j = 0; j < w.numel(); ++j) {
        v[j] = mu * v[j] + (g[j] + wd * w[j]);
        w[j] -= static_cast<S>(lr) * v[j];
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
  }

  const std::vector<ParamRef<S>>& params() const { return params_; }

 private:
  std::vector<ParamRef<S>> params_;
  std::vector<Tensor<S>> velocity_;
  double momentum_, weight_decay_;
};

struct EpochMetrics {
  std::int64_t epoch = 0;
  double train_loss = 0.0;
  double train_f1 = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochMetrics> history;
  std::int64_t best_epoch = -1;
  double best_val_f1 = 0.0;
  double best_val_loss = 0.0;
  std::string checkpoint_path;  // empty when out_dir unset
  bool early_stopped = false;
};

struct FitOptions {
  TrainConfig train;
  AugmentPolicy policy = AugmentPolicy::disabled();
  UncertaintyConfig uncertainty;
  FrontendParams frontend;
  double clip_s = 1.0;
  std::uint64_t seed = 0;
  std::string out_dir;  // writes metrics.csv + checkpoint.best.ckpt if set
  std::int64_t eval_batch = 64;
};

// Deterministic training loop: seeded shuffling, waveform augmentation,
// uncertainty-augmented forward, backward, SGD step; per-epoch validation
// with macro F1; best-checkpoint tracking (ties broken on lower loss) and
// optional early stopping. Bitwise reproducible for a fixed seed and
// single-worker loading.
TrainReport fit(const Manifest& manifest, Res15<float>& model, const FitOptions& opt);

// Metric-history CSV (epoch, split, loss, macro_f1, lr), two rows per epoch.
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);

}  // namespace kws

#endif  // KWS_TRAIN_HPP_
