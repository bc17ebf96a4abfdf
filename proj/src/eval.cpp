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

#include "kws/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "kws/common.hpp"

namespace kws {

double macro_f1(const ConfusionCounts& counts) {
  double sum = 0.0;
  std::int64_t supported = 0;
  for (std::int64_t c = 0; c < counts.n_classes(); ++c) {
    if (counts.support(c) == 0) continue;
    const auto ci = static_cast<std::size_t>(c);
    const double denom =
        static_cast<double>(2 * counts.tp[ci] + counts.fp[ci] + counts.fn[ci]);
    sum += denom > 0 ? 2.0 * static_cast<double>(counts.tp[ci]) / denom : 0.0;
    ++supported;
  }
  if (supported == 0) throw DataError("macro_f1: every class has zero support");
  return sum / static_cast<double>(supported);
}

std::vector<double> per_class_f1(const ConfusionCounts& counts) {
  std::vector<double> out(static_cast<std::size_t>(counts.n_classes()));
  for (std::int64_t c = 0; c < counts.n_classes(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (counts.support(c) == 0) {
      out[ci] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double denom =
        static_cast<double>(2 * counts.tp[ci] + counts.fp[ci] + counts.fn[ci]);
    out[ci] = denom > 0 ? 2.0 * static_cast<double>(counts.tp[ci]) / denom : 0.0;
  }
  return out;
}

std::string format_pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return buf;
}

std::string format_mean_std(const std::vector<double>& fractions) {
  if (fractions.empty()) return "-";
  double mean = 0.0;
  for (double f : fractions) mean += f;
  mean /= static_cast<double>(fractions.size());
  double var = 0.0;
  for (double f : fractions) var += (f - mean) * (f - mean);
  var /= static_cast<double>(fractions.size());
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f±%.2f", mean * 100.0,
                std::sqrt(var) * 100.0);
  return buf;
}

namespace {

struct BatchPredictions {
  std::vector<std::int64_t> preds;
  Tensor<float> logits;
};

// Featurizes examples [begin, end) of `list` in parallel slots and runs one
// eval-mode forward.
BatchPredictions predict_batch(Res15<float>& model,
                               const std::vector<const Example*>& list,
                               std::size_t begin, std::size_t end,
                               const ClassMap& map, const EvalOptions& opt,
                               const Rng& cond_rng) {
  const auto n = static_cast<std::int64_t>(end - begin);
  std::vector<FeatureMap> feats(static_cast<std::size_t>(n));
  parallel_for(n, [&](std::int64_t i) {
    const auto gi = begin + static_cast<std::size_t>(i);
    Rng ex_rng = cond_rng.at(static_cast<std::uint64_t>(gi));
    feats[static_cast<std::size_t>(i)] =
        featurize_eval(*list[gi], map, opt.noise, opt.time_shift, opt.frontend,
                       opt.clip_s, ex_rng);
  });
  BatchPredictions out;
  out.logits = model.logits_eval(stack_features(feats));
  const std::int64_t nc = out.logits.dim(1);
  out.preds.resize(static_cast<std::size_t>(n));
  for (std::int64_t b = 0; b < n; ++b) {
    std::int64_t arg = 0;
    for (std::int64_t j = 1; j < nc; ++j)
      if (out.logits.at2(b, j) > out.logits.at2(b, arg)) arg = j;
    out.preds[static_cast<std::size_t>(b)] = arg;
  }
  return out;
}

Rng condition_rng(const EvalOptions& opt) {
  return Rng(opt.seed).fork("eval").fork(opt.condition);
}

}  // namespace

EvalResult evaluate(Res15<float>& model, const Manifest& manifest, Split split,
                    const EvalOptions& opt) {
  if (model.spec().n_classes != manifest.class_map.num_classes())
    throw DataError("model class count does not match the manifest");
  const auto list = manifest.split_examples(split);
  if (list.empty())
    throw DataError(std::string("no examples in split ") + split_name(split));

  const Rng cond = condition_rng(opt);
  ConfusionCounts counts(manifest.class_map.num_classes());
  for (std::size_t at = 0; at < list.size();
       at += static_cast<std::size_t>(opt.batch_size)) {
    const std::size_t end =
        std::min(list.size(), at + static_cast<std::size_t>(opt.batch_size));
    const auto bp = predict_batch(model, list, at, end, manifest.class_map, opt, cond);
    for (std::size_t i = at; i < end; ++i)
      counts.add(list[i]->label, bp.preds[i - at]);
  }

  EvalResult res{macro_f1(counts), per_class_f1(counts), counts};
  return res;
}

std::int64_t masked_argmax(const float* logits, std::int64_t n_classes,
                           const std::vector<std::int64_t>& source_to_eval) {
  std::int64_t best_eval = -1;
  float best = -std::numeric_limits<float>::infinity();
  for (std::int64_t s = 0; s < n_classes; ++s) {
    const auto ei = source_to_eval[static_cast<std::size_t>(s)];
    if (ei < 0) continue;
    if (logits[s] > best) {
      best = logits[s];
      best_eval = ei;
    }
  }
  return best_eval;
}

ConfusionCounts keywords_confusion(const Tensor<float>& logits,
                                   const std::vector<std::int64_t>& truth_eval,
                                   const ClassIntersection& inter) {
  const std::int64_t B = logits.dim(0), nc = logits.dim(1);
  if (static_cast<std::int64_t>(truth_eval.size()) != B)
    throw DataError("keywords_confusion: label count mismatch");
  ConfusionCounts counts(inter.map.num_keywords());
  for (std::int64_t b = 0; b < B; ++b) {
    const std::int64_t pred =
        masked_argmax(logits.data() + b * nc, nc, inter.source_to_eval);
    const bool pred_is_keyword = inter.map.is_keyword_index(pred);
    counts.add(truth_eval[static_cast<std::size_t>(b)],
               pred_is_keyword ? pred : -1);
  }
  return counts;
}

EvalResult keywords_f1(Res15<float>& model, const Manifest& target_manifest,
                       Split split, const ClassIntersection& inter,
                       const EvalOptions& opt) {
  const auto& source_to_eval = inter.source_to_eval;
  if (model.spec().n_classes !=
      static_cast<std::int64_t>(source_to_eval.size()))
    throw DataError("model class count does not match the intersection source");

  // Keyword-labeled target examples only.
  std::vector<const Example*> list;
  for (const auto& e : target_manifest.examples) {
    if (e.split != split) continue;
    const auto ei = inter.target_to_eval[static_cast<std::size_t>(e.label)];
    if (ei >= 0 && inter.map.is_keyword_index(ei)) list.push_back(&e);
  }
  if (list.empty()) throw DataError("no shared-keyword examples in this split");

  const Rng cond = condition_rng(opt);
  ConfusionCounts counts(inter.map.num_keywords());
  for (std::size_t at = 0; at < list.size();
       at += static_cast<std::size_t>(opt.batch_size)) {
    const std::size_t end =
        std::min(list.size(), at + static_cast<std::size_t>(opt.batch_size));
    auto bp = predict_batch(model, list, at, end, target_manifest.class_map, opt, cond);
    std::vector<std::int64_t> truth;
    truth.reserve(end - at);
    for (std::size_t i = at; i < end; ++i)
      truth.push_back(inter.target_to_eval[static_cast<std::size_t>(list[i]->label)]);
    const ConfusionCounts batch = keywords_confusion(bp.logits, truth, inter);
    for (std::int64_t c = 0; c < batch.n_classes(); ++c) {
      counts.tp[static_cast<std::size_t>(c)] += batch.tp[static_cast<std::size_t>(c)];
      counts.fp[static_cast<std::size_t>(c)] += batch.fp[static_cast<std::size_t>(c)];
      counts.fn[static_cast<std::size_t>(c)] += batch.fn[static_cast<std::size_t>(c)];
    }
  }
  EvalResult res{macro_f1(counts), per_class_f1(counts), counts};
  return res;
}

}  // namespace kws
