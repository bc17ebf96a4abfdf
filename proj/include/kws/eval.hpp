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

#ifndef KWS_EVAL_HPP_
#define KWS_EVAL_HPP_

#include <optional>
#include <string>
#include <vector>

#include "kws/manifest.hpp"
#include "kws/nn.hpp"
#include "kws/pipeline.hpp"

namespace kws {

// Per-class confusion tallies; integer counting keeps aggregation
// order-independent.
struct ConfusionCounts {
  std::vector<std::int64_t> tp, fp, fn;

  explicit ConfusionCounts(std::int64_t n_classes = 0)
      : tp(static_cast<std::size_t>(n_classes), 0),
        fp(static_cast<std::size_t>(n_classes), 0),
        fn(static_cast<std::size_t>(n_classes), 0) {}

  std::int64_t n_classes() const { return static_cast<std::int64_t>(tp.size()); }
  void add(std::int64_t truth, std::int64_t pred) {
    if (truth == pred) {
      ++tp[static_cast<std::size_t>(truth)];
    } else {
      ++fn[static_cast<std::size_t>(truth)];
      if (pred >= 0) ++fp[static_cast<std::size_t>(pred)];
    }
  }
  std::int64_t support(std::int64_t c) const {
    return tp[static_cast<std::size_t>(c)] + fn[static_cast<std::size_t>(c)];
  }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (std::size_t c = 0; c < tp.size(); ++c) t += tp[c] + fn[c];
    return t;
  }
};

// Unweighted mean over classes of 2TP/(2TP+FP+FN); zero-support classes are
// excluded. Returns a fraction in [0, 1]; throws DataError if every class
// has zero support.
double macro_f1(const ConfusionCounts& counts);

// Per-class F1 fractions; NaN for zero-support classes.
std::vector<double> per_class_f1(const ConfusionCounts& counts);

// "91.20" style fixed two-decimal percentage.
std::string format_pct(double fraction);
// "91.20±0.40" style summary of percentages.
std::string format_mean_std(const std::vector<double>& fractions);

struct EvalOptions {
  std::optional<SnrSpec> noise;  // absent = clean
  bool time_shift = false;       // ±100 ms uniform draw per example
  std::uint64_t seed = 0;
  FrontendParams frontend;
  double clip_s = 1.0;
  std::int64_t batch_size = 64;
  // Condition label mixed into per-example rng streams and result rows.
  std::string condition = "clean";
};

struct EvalResult {
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  ConfusionCounts counts;
};

// Classifies one split in eval mode. Per-example randomness (silence crop,
// shift, noise) is seeded by (seed, condition, example index) so sweeps are
// reproducible and noise-free evaluation is bit-identical to clean.
EvalResult evaluate(Res15<float>& model, const Manifest& manifest, Split split,
                    const EvalOptions& opt);

// Argmax over source logits restricted to classes inside the shared set,
// reported in eval-class space.
std::int64_t masked_argmax(const float* logits, std::int64_t n_classes,
                           const std::vector<std::int64_t>& source_to_eval);

// Confusion counts over shared keywords for one batch of source logits.
// truth_eval holds eval-space keyword indices; predictions of shared
// non-keyword classes (e.g. Unknown) count as errors against the truth.
ConfusionCounts keywords_confusion(const Tensor<float>& logits,
                                   const std::vector<std::int64_t>& truth_eval,
                                   const ClassIntersection& inter);

// Keywords-only cross-domain evaluation: restricted to examples whose true
// target label is a shared keyword; model logits outside the shared class
// set are masked before argmax; non-keyword predictions (e.g. Unknown)
// count as errors against the true keyword. Macro F1 over shared keywords.
EvalResult keywords_f1(Res15<float>& model, const Manifest& target_manifest,
                       Split split, const ClassIntersection& inter,
                       const EvalOptions& opt);

}  // namespace kws

#endif  // KWS_EVAL_HPP_
