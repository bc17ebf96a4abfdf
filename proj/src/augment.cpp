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

#include "kws/augment.hpp"

#include <algorithm>
#include <cmath>

#include "kws/common.hpp"

namespace kws {

std::shared_ptr<const NoiseBank> NoiseBank::load(
    const std::vector<std::string>& wav_paths) {
  auto bank = std::make_shared<NoiseBank>();
  for (const auto& p : wav_paths) {
    bank->clips.push_back(read_wav(p));
    bank->paths.push_back(p);
  }
  return bank;
}

void AugmentPolicy::validate() const {
  if (noise_prob < 0.0 || noise_prob > 1.0)
    throw ConfigError("noise_prob must be in [0, 1]");
  if (shift_min_ms > shift_max_ms)
    throw ConfigError("time shift range is inverted");
  if (std::abs(shift_min_ms + shift_max_ms) > 1e-9)
    throw ConfigError("time shift range must be symmetric around 0");
  if (gain_max < 0.0) throw ConfigError("gain_max must be >= 0");
  if (snr_min_db > snr_max_db) throw ConfigError("snr range is inverted");
  if (noise_prob > 0.0 && (!noise_bank || noise_bank->empty()))
    throw ConfigError("noise_prob > 0 but the noise bank is empty");
}

AugmentPolicy AugmentPolicy::disabled() {
  AugmentPolicy p;
  p.shift_min_ms = 0.0;
  p.shift_max_ms = 0.0;
  p.noise_prob = 0.0;
  p.trim_enabled = false;
  return p;
}

Waveform time_shift(const Waveform& w, double shift_ms) {
  const auto n = w.size();
  const auto s = static_cast<std::int64_t>(
      std::llround(shift_ms * w.sample_rate / 1000.0));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(static_cast<std::size_t>(n), 0.0f);
  if (s >= 0) {
    for (std::int64_t i = s; i < n; ++i)
      out.samples[static_cast<std::size_t>(i)] =
          w.samples[static_cast<std::size_t>(i - s)];
  } else {
    for (std::int64_t i = 0; i < n + s; ++i)
      out.samples[static_cast<std::size_t>(i)] =
          w.samples[static_cast<std::size_t>(i - s)];
  }
  return out;
}

Waveform trim_edges(const Waveform& w) {
  const std::int64_t n = w.size();
  if (n <= 0) throw DataError("trim_edges: empty waveform");
  const std::int64_t cap = w.sample_rate / 20;  // 0.05 s
  const std::int64_t k = std::min<std::int64_t>(cap, n / 4);
  const std::int64_t kept = n - 2 * k;
  if (kept < 480)
    throw DataError("trim_edges: result shorter than one analysis window (" +
                    std::to_string(kept) + " samples)");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(k),
                     w.samples.begin() + static_cast<std::ptrdiff_t>(k + kept));
  return out;
}

double rms(const Waveform& w) {
  double acc = 0.0;
  for (float s : w.samples) acc += static_cast<double>(s) * s;
  return w.samples.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(w.size()));
}

namespace {

// Noise segment matched to `length`, tiling the clip if needed, starting at
// a uniform random offset into the (tiled) noise.
Waveform crop_noise(const Waveform& noise, std::int64_t length, Rng& rng) {
  if (noise.size() <= 0) throw DataError("empty noise clip");
  const auto n = noise.size();
  const std::int64_t offset =
      static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(n)));
  Waveform out;
  out.sample_rate = noise.sample_rate;
  out.samples.resize(static_cast<std::size_t>(length));
  for (std::int64_t i = 0; i < length; ++i)
    out.samples[static_cast<std::size_t>(i)] =
        noise.samples[static_cast<std::size_t>((offset + i) % n)];
  return out;
}

}  // namespace

Waveform mix_at_snr(const Waveform& signal, const Waveform& noise, double snr_db,
                    Rng& rng) {
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");
  const double rms_s = rms(signal);
  if (rms_s <= 0.0) throw DataError("undefined SNR for a silent signal");
  Waveform seg = crop_noise(noise, signal.size(), rng);
  const double rms_n = rms(seg);
  if (rms_n <= 0.0) throw DataError("noise segment is silent; cannot set SNR");
  const double a = rms_s / rms_n * std::pow(10.0, -snr_db / 20.0);

  Waveform out;
  out.sample_rate = signal.sample_rate;
  out.samples.resize(signal.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = signal.samples[i] + static_cast<float>(a) * seg.samples[i];
  return out;
}

Waveform white_noise(std::int64_t length, Rng& rng) {
  if (length <= 0) throw DataError("white_noise: length must be > 0");
  Waveform out;
  out.samples.resize(static_cast<std::size_t>(length));
  for (auto& s : out.samples) s = static_cast<float>(rng.normal());
  return out;
}

Waveform apply_policy(const Waveform& w, const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  Waveform cur = policy.trim_enabled ? trim_edges(w) : w;

  const double shift_ms = rng.uniform(policy.shift_min_ms, policy.shift_max_ms);
  cur = time_shift(cur, shift_ms);

  const bool add_noise = rng.uniform() < policy.noise_prob;
  if (add_noise && policy.noise_bank && !policy.noise_bank->empty()) {
    const auto idx = rng.uniform_int(policy.noise_bank->clips.size());
    const Waveform& clip = policy.noise_bank->clips[idx];
    if (policy.noise_mode == NoiseMode::kGain) {
      Waveform seg = crop_noise(clip, cur.size(), rng);
      const auto gain = static_cast<float>(rng.uniform(0.0, policy.gain_max));
      for (std::size_t i = 0; i < cur.samples.size(); ++i)
        cur.samples[i] += gain * seg.samples[i];
    } else {
      const double snr = rng.uniform(policy.snr_min_db, policy.snr_max_db);
      cur = mix_at_snr(cur, clip, snr, rng);
    }
  }
  return cur;
}

}  // namespace kws
