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

#include "kws/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "kws/common.hpp"

namespace kws {

void SnrSpec::validate() const {
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");
  if (kind == Kind::kBank && (!bank || bank->empty()))
    throw ConfigError("bank noise requested but no noise bank is loaded");
}

Waveform load_example_audio(const Example& ex, const ClassMap& map, Rng& rng) {
  Waveform w = read_wav(ex.audio_path);
  if (ex.label == map.silence_index()) {
    const std::int64_t want = kSampleRate;  // 1-s silence crops
    if (w.size() > want) {
      const auto max_off = static_cast<std::uint64_t>(w.size() - want);
      const auto off = static_cast<std::int64_t>(rng.uniform_int(max_off + 1));
      Waveform crop;
      crop.sample_rate = w.sample_rate;
      crop.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(off),
                          w.samples.begin() + static_cast<std::ptrdiff_t>(off + want));
      return crop;
    }
  }
  return w;
}

Waveform pad_or_crop(const Waveform& w, std::int64_t n) {
  if (w.size() == n) return w;
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(static_cast<std::size_t>(n), 0.0f);
  if (w.size() < n) {
    std::copy(w.samples.begin(), w.samples.end(), out.samples.begin());
  } else {
    const std::int64_t off = (w.size() - n) / 2;  // center crop
    std::copy(w.samples.begin() + static_cast<std::ptrdiff_t>(off),
              w.samples.begin() + static_cast<std::ptrdiff_t>(off + n),
              out.samples.begin());
  }
  return out;
}

FeatureMap featurize_train(const Example& ex, const ClassMap& map,
                           const AugmentPolicy& policy, const FrontendParams& fe,
                           double clip_s, Rng& rng) {
  Waveform w = load_example_audio(ex, map, rng);
  w = apply_policy(w, policy, rng);
  w = pad_or_crop(w, static_cast<std::int64_t>(std::llround(clip_s * kSampleRate)));
  return mfcc(w, fe);
}

FeatureMap featurize_eval(const Example& ex, const ClassMap& map,
                          const std::optional<SnrSpec>& noise, bool time_shift_on,
                          const FrontendParams& fe, double clip_s, Rng& rng) {
  Waveform w = load_example_audio(ex, map, rng);
  if (time_shift_on) w = time_shift(w, rng.uniform(-100.0, 100.0));
  if (noise.has_value()) {
    noise->validate();
    if (noise->kind == SnrSpec::Kind::kWGN) {
      Waveform n = white_noise(w.size(), rng);
      w = mix_at_snr(w, n, noise->snr_db, rng);
    } else {
      const auto idx = rng.uniform_int(noise->bank->clips.size());
      w = mix_at_snr(w, noise->bank->clips[idx], noise->snr_db, rng);
    }
  }
  w = pad_or_crop(w, static_cast<std::int64_t>(std::llround(clip_s * kSampleRate)));
  return mfcc(w, fe);
}

Tensor<float> stack_features(const std::vector<FeatureMap>& maps) {
  if (maps.empty()) throw DataError("stack_features: empty batch");
  const std::int64_t H = maps.front().dim(2), W = maps.front().dim(3);
  const auto B = static_cast<std::int64_t>(maps.size());
  Tensor<float> out(Shape{B, 1, H, W});
  for (std::int64_t b = 0; b < B; ++b) {
    const auto& m = maps[static_cast<std::size_t>(b)];
    if (m.dim(2) != H || m.dim(3) != W)
      throw DataError("stack_features: inconsistent feature shapes in batch");
    std::copy(m.data(), m.data() + m.numel(), out.data() + b * H * W);
  }
  return out;
}

}  // namespace kws
