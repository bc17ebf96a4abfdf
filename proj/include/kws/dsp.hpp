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

#ifndef KWS_DSP_HPP_
#define KWS_DSP_HPP_

#include <Eigen/Core>

#include <string>
#include <vector>

#include "kws/tensor.hpp"
#include "kws/wav.hpp"

namespace kws {

// MFCC front-end parameters. Defaults give 40 coefficients per frame from
// 512-point FFTs over 480-sample windows with a 160-sample hop at 16 kHz.
struct FrontendParams {
  int fft_size = 512;
  int window = 480;
  int hop = 160;
  int n_mels = 40;
  double fmin = 20.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;  // added to mel energies before log

  int n_bins() const { return fft_size / 2 + 1; }
  // Frames for an n-sample input: floor((n - window)/hop) + 1.
  std::int64_t n_frames(std::int64_t n_samples) const {
    if (n_samples < window) return 0;
    return (n_samples - window) / hop + 1;
  }
};

double mel_from_hz(double hz);
double hz_from_mel(double mel);

// Periodic Hann window of the given length.
std::vector<double> hann_window(int length);

// In-place radix-2 FFT over interleaved complex pairs; n must be a power
// of two.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

// Magnitude-squared spectrogram, one column per frame: (n_bins x T).
// Frames are windowed with a periodic Hann window and zero-padded to
// fft_size. Throws DataError for inputs shorter than one window.
Eigen::MatrixXd stft_power(const Waveform& w, const FrontendParams& p = {});

// Triangular mel filterbank, rows = filters (n_mels x n_bins). Filter
// centers are equally spaced on the mel scale; every row must have
// nonempty support or a ConfigError is thrown.
Eigen::MatrixXd mel_filterbank(const FrontendParams& p = {});

// Orthonormal DCT-II matrix (n x n); D * D^T = I.
Eigen::MatrixXd dct2_matrix(int n);

// Full front-end: log(mel energies + floor) then orthonormal DCT-II over
// the mel axis, all coefficients kept. Output shape (1, 1, n_mels, T).
FeatureMap mfcc(const Waveform& w, const FrontendParams& p = {});

// Elementwise mean across maps; all maps must share H. Shorter maps are
// right-padded with their own minimum value. Returns (H x W_max).
Eigen::MatrixXf mean_spectrogram(const std::vector<FeatureMap>& maps);

// Log power spectrogram as a feature map (1, 1, n_bins, T); used by the
// spectro-stats command.
FeatureMap log_power_spectrogram(const Waveform& w, const FrontendParams& p = {});

// Feature cache: raw little-endian float32 block (<path>.f32) plus a JSON
// sidecar (<path>.json) recording shape and front-end parameters.
void write_feature_cache(const std::string& path_base, const FeatureMap& fm,
                         const FrontendParams& p);
FeatureMap read_feature_cache(const std::string& path_base, const FrontendParams& expected);

}  // namespace kws

#endif  // KWS_DSP_HPP_
