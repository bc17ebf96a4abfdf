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

#ifndef KWS_PIPELINE_HPP_
#define KWS_PIPELINE_HPP_

#include <optional>
#include <vector>

#include "kws/augment.hpp"
#include "kws/dsp.hpp"
#include "kws/manifest.hpp"
#include "kws/rng.hpp"
#include "kws/tensor.hpp"

namespace kws {

// Audio -> fixed-shape feature map glue shared by training and evaluation.

// Evaluation-time perturbation at an exact SNR.
struct SnrSpec {
  double snr_db = 20.0;
  enum class Kind { kWGN, kBank } kind = Kind::kWGN;
  std::shared_ptr<const NoiseBank> bank;  // required for kBank

  void validate() const;
};

// Loads the example's waveform. Silence-class examples are cropped 1-s
// windows of their background-noise file at an rng-drawn offset.
Waveform load_example_audio(const Example& ex, const ClassMap& map, Rng& rng);

// Zero-pads on the right or center-crops to exactly n samples.
Waveform pad_or_crop(const Waveform& w, std::int64_t n);

// Training featurization: load, apply the augmentation policy, fit to the
// clip length, then MFCC. Deterministic given rng.
FeatureMap featurize_train(const Example& ex, const ClassMap& map,
                           const AugmentPolicy& policy, const FrontendParams& fe,
                           double clip_s, Rng& rng);

// Evaluation featurization: optional ±100 ms shift, optional noise mixing
// at an exact SNR, fit to clip length, MFCC. Draw order: silence crop (if
// any), shift, then noise.
FeatureMap featurize_eval(const Example& ex, const ClassMap& map,
                          const std::optional<SnrSpec>& noise, bool time_shift,
                          const FrontendParams& fe, double clip_s, Rng& rng);

// Stacks (1,1,H,W) maps with equal H and W into a (B,1,H,W) batch.
Tensor<float> stack_features(const std::vector<FeatureMap>& maps);

}  // namespace kws

#endif  // KWS_PIPELINE_HPP_
