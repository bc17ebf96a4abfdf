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

#ifndef KWS_AUGMENT_HPP_
#define KWS_AUGMENT_HPP_

#include <memory>
#include <string>
#include <vector>

#include "kws/rng.hpp"
#include "kws/wav.hpp"

namespace kws {

// Loaded noise recordings shared across workers (read-only after load).
struct NoiseBank {
  std::vector<Waveform> clips;
  std::vector<std::string> paths;

  bool empty() const { return clips.empty(); }
  static std::shared_ptr<const NoiseBank> load(const std::vector<std::string>& wav_paths);
};

enum class NoiseMode {
  kGain,  // additive noise at a uniform random gain (GSC training recipe)
  kSnr,   // additive noise at an exact SNR drawn from snr range
};

// Waveform-domain training augmentation policy.
struct AugmentPolicy {
  double shift_min_ms = -100.0;
  double shift_max_ms = 100.0;
  double noise_prob = 0.8;
  bool trim_enabled = false;
  NoiseMode noise_mode = NoiseMode::kGain;
  double gain_max = 0.1;     // kGain: gain ~ U(0, gain_max)
  double snr_min_db = 0.0;   // kSnr: snr ~ U(snr_min_db, snr_max_db)
  double snr_max_db = 20.0;
  std::shared_ptr<const NoiseBank> noise_bank;

  void validate() const;  // throws ConfigError
  // Disabled policy: no trim, zero shift, zero noise probability.
  static AugmentPolicy disabled();
};

// Displaces samples by round(shift_ms * 16); the vacated region is
// zero-filled and length is preserved. Positive shifts move content later.
Waveform time_shift(const Waveform& w, double shift_ms);

// Trims both ends by min(0.05 s, quarter of the signal length) so at least
// half of the signal always survives. Throws DataError if the result is
// shorter than one analysis window (480 samples).
Waveform trim_edges(const Waveform& w);

// signal + a * noise with a chosen so the mixture hits snr_db exactly
// (within 1e-6 dB). Noise is tiled if shorter than the signal and cropped
// at a random offset drawn from rng. Throws DataError on silent signal.
Waveform mix_at_snr(const Waveform& signal, const Waveform& noise, double snr_db,
                    Rng& rng);

// i.i.d. standard normal samples (unit RMS in expectation).
Waveform white_noise(std::int64_t length, Rng& rng);

double rms(const Waveform& w);

// Training-time augmentation. Draw order per call: shift (1 uniform),
// noise gate (1 uniform), then if gated on: clip index, crop offset, and
// gain or SNR (1 uniform each). Trim consumes no randomness.
Waveform apply_policy(const Waveform& w, const AugmentPolicy& policy, Rng& rng);

}  // namespace kws

#endif  // KWS_AUGMENT_HPP_
