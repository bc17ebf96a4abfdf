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

#ifndef KWS_WAV_HPP_
#define KWS_WAV_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace kws {

constexpr int kSampleRate = 16000;

// Mono waveform at 16 kHz, samples in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  std::int64_t size() const { return static_cast<std::int64_t>(samples.size()); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Reads a PCM16 mono WAV file; requires 16 kHz. Throws DataError on any
// format mismatch or truncation.
Waveform read_wav(const std::string& path);

// Header-only probe: returns the sample count without decoding data.
std::int64_t wav_sample_count(const std::string& path);

// Writes a PCM16 mono WAV at 16 kHz; samples are clamped to [-1, 1].
void write_wav(const std::string& path, const Waveform& w);

}  // namespace kws

#endif  // KWS_WAV_HPP_
