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

// Synthetic audio fixtures: class-distinct waveforms and on-disk datasets
// in the Speech-Commands directory layout (class subdirectories, list
// files, background-noise directory).

#ifndef KWS_TESTS_FIXTURES_HPP_
#define KWS_TESTS_FIXTURES_HPP_

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "kws/rng.hpp"
#include "kws/wav.hpp"

namespace kws::fixtures {

inline std::string fresh_dir(const std::string& tag) {
  const auto dir =
      std::filesystem::temp_directory_path() / ("patchkws_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline Waveform sine(double freq_hz, double seconds, float amplitude = 0.5f) {
  Waveform w;
  const auto n = static_cast<std::int64_t>(seconds * kSampleRate);
  w.samples.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    w.samples[static_cast<std::size_t>(i)] = amplitude *
        static_cast<float>(std::sin(2.0 * 3.14159265358979323846 * freq_hz *
                                    static_cast<double>(i) / kSampleRate));
  return w;
}

inline Waveform noise_clip(double seconds, float amplitude, Rng& rng) {
  Waveform w;
  const auto n = static_cast<std::int64_t>(seconds * kSampleRate);
  w.samples.resize(static_cast<std::size_t>(n));
  for (auto& s : w.samples)
    s = amplitude * static_cast<float>(rng.normal());
  return w;
}

// A keyword-like clip: a harmonic stack whose fundamental glides with a
// class-specific chirp direction plus amplitude modulation, with random
// per-example pitch/level jitter and a little noise. Classes are spectrally
// separable but not trivially identical across examples.
inline Waveform keyword_clip(int class_id, double seconds, Rng& rng) {
  const double base[] = {220.0, 440.0, 880.0};
  const double chirp[] = {1.6, 1.0, 0.6};  // f(t) multiplier at clip end
  const double f0 = base[class_id % 3] * (1.0 + 0.1 * (rng.uniform() - 0.5));
  const double cr = chirp[class_id % 3];
  const float level = static_cast<float>(0.35 + 0.2 * rng.uniform());

  Waveform w;
  const auto n = static_cast<std::int64_t>(seconds * kSampleRate);
  w.samples.resize(static_cast<std::size_t>(n));
  double phase1 = 0, phase2 = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n);
    const double f = f0 * (1.0 + (cr - 1.0) * t);
    phase1 += 2.0 * 3.14159265358979323846 * f / kSampleRate;
    phase2 += 2.0 * 3.14159265358979323846 * 2.0 * f / kSampleRate;
    const double env = 0.5 * (1.0 - std::cos(2.0 * 3.14159265358979323846 * t));
    w.samples[static_cast<std::size_t>(i)] = static_cast<float>(
        env * (level * std::sin(phase1) + 0.4 * level * std::sin(phase2) +
               0.02 * rng.normal()));
  }
  return w;
}

struct GscTreeSpec {
  std::vector<std::string> classes;  // directory names; clips generated per class
  int clips_per_class = 20;
  double clip_seconds = 1.0;
  int val_every = 5;   // every n-th file goes to the validation list
  int test_every = 4;  // every n-th of the rest goes to the testing list
  int noise_files = 2;
  double noise_seconds = 3.0;
  std::uint64_t seed = 1;
};

// Writes a Speech-Commands-style tree and returns its root.
inline std::string make_gsc_tree(const std::string& dir, const GscTreeSpec& spec) {
  namespace fs = std::filesystem;
  Rng rng(spec.seed);
  std::ofstream val_list(dir + "/validation_list.txt");
  std::ofstream test_list(dir + "/testing_list.txt");
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const std::string cls_dir = dir + "/" + spec.classes[c];
    fs::create_directories(cls_dir);
    for (int i = 0; i < spec.clips_per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "clip_%03d.wav", i);
      Rng clip_rng = rng.fork(spec.classes[c]).at(static_cast<std::uint64_t>(i));
      write_wav(cls_dir + "/" + name,
                keyword_clip(static_cast<int>(c), spec.clip_seconds, clip_rng));
      const std::string rel = spec.classes[c] + "/" + name;
      if (i % spec.val_every == 1)
        val_list << rel << "\n";
      else if (i % spec.test_every == 2)
        test_list << rel << "\n";
    }
  }
  if (spec.noise_files > 0) {
    const std::string noise_dir = dir + "/_background_noise_";
    fs::create_directories(noise_dir);
    for (int i = 0; i < spec.noise_files; ++i) {
      Rng nr = rng.fork("noise").at(static_cast<std::uint64_t>(i));
      write_wav(noise_dir + "/noise_" + std::to_string(i) + ".wav",
                noise_clip(spec.noise_seconds, 0.1f, nr));
    }
  }
  return dir;
}

}  // namespace kws::fixtures

#endif  // KWS_TESTS_FIXTURES_HPP_
