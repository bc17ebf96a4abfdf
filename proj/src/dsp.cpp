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

#include "kws/dsp.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kws/common.hpp"

using json = nlohmann::json;

namespace kws {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double mel_from_hz(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double hz_from_mel(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int n = 0; n < length; ++n)
    w[static_cast<std::size_t>(n)] =
        0.5 - 0.5 * std::cos(2.0 * kPi * n / length);
  return w;
}

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
    throw NumericError("fft size must be a power of two");

  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

Eigen::MatrixXd stft_power(const Waveform& w, const FrontendParams& p) {
  const std::int64_t n = w.size();
  if (n < p.window)
    throw DataError("input too short for STFT: " + std::to_string(n) +
                    " samples < window " + std::to_string(p.window));
  const std::int64_t frames = p.n_frames(n);
  const int bins = p.n_bins();
  const auto win = hann_window(p.window);

  Eigen::MatrixXd out(bins, frames);
  std::vector<double> re(static_cast<std::size_t>(p.fft_size));
  std::vector<double> im(static_cast<std::size_t>(p.fft_size));
  for (std::int64_t t = 0; t < frames; ++t) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    const std::int64_t off = t * p.hop;
    for (int i = 0; i < p.window; ++i)
      re[static_cast<std::size_t>(i)] =
          static_cast<double>(w.samples[static_cast<std::size_t>(off + i)]) *
          win[static_cast<std::size_t>(i)];
    fft_radix2(re, im);
    for (int k = 0; k < bins; ++k) {
      const std::size_t ki = static_cast<std::size_t>(k);
      out(k, t) = re[ki] * re[ki] + im[ki] * im[ki];
    }
  }
  return out;
}

Eigen::MatrixXd mel_filterbank(const FrontendParams& p) {
  if (!(p.fmin < p.fmax) || p.fmax > kSampleRate / 2.0)
    throw ConfigError("mel filterbank requires fmin < fmax <= 8000");
  const int bins = p.n_bins();
  const double mel_lo = mel_from_hz(p.fmin);
  const double mel_hi = mel_from_hz(p.fmax);

  // n_mels + 2 edge frequencies, equally spaced in mel.
  std::vector<double> edges(static_cast<std::size_t>(p.n_mels) + 2);
  for (int i = 0; i < p.n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] = hz_from_mel(
        mel_lo + (mel_hi - mel_lo) * i / static_cast<double>(p.n_mels + 1));

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(p.n_mels, bins);
  const double bin_hz = static_cast<double>(kSampleRate) / p.fft_size;
  for (int m = 0; m < p.n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      double v = 0.0;
      if (f > lo && f < center)
        v = (f - lo) / (center - lo);
      else if (f >= center && f < hi)
        v = (hi - f) / (hi - center);
      fb(m, k) = v;
    }
    if (fb.row(m).sum() <= 0.0)
      throw ConfigError("mel filter " + std::to_string(m) +
                        " has empty support; reduce n_mels or widen the band");
  }
  return fb;
}

Eigen::MatrixXd dct2_matrix(int n) {
  Eigen::MatrixXd d(n, n);
  const double s0 = std::sqrt(1.0 / n);
  const double s = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k)
    for (int m = 0; m < n; ++m)
      d(k, m) = (k == 0 ? s0 : s) * std::cos(kPi * (m + 0.5) * k / n);
  return d;
}

FeatureMap mfcc(const Waveform& w, const FrontendParams& p) {
  const Eigen::MatrixXd power = stft_power(w, p);           // bins x T
  const Eigen::MatrixXd fb = mel_filterbank(p);             // n_mels x bins
  Eigen::MatrixXd mel = fb * power;                         // n_mels x T
  mel = (mel.array() + p.log_floor).log().matrix();
  const Eigen::MatrixXd coeffs = dct2_matrix(p.n_mels) * mel;  // n_mels x T

  const std::int64_t T = coeffs.cols();
  FeatureMap out(Shape{1, 1, p.n_mels, T});
  for (int h = 0; h < p.n_mels; ++h)
    for (std::int64_t t = 0; t < T; ++t)
      out.at4(0, 0, h, t) = static_cast<float>(coeffs(h, t));
  return out;
}

FeatureMap log_power_spectrogram(const Waveform& w, const FrontendParams& p) {
  const Eigen::MatrixXd power = stft_power(w, p);
  const std::int64_t H = power.rows(), T = power.cols();
  FeatureMap out(Shape{1, 1, H, T});
  for (std::int64_t h = 0; h < H; ++h)
    for (std::int64_t t = 0; t < T; ++t)
      out.at4(0, 0, h, t) = static_cast<float>(std::log(power(h, t) + p.log_floor));
  return out;
}

Eigen::MatrixXf mean_spectrogram(const std::vector<FeatureMap>& maps) {
  if (maps.empty()) throw DataError("mean_spectrogram: empty input list");
  const std::int64_t H = maps.front().dim(2);
  std::int64_t W = 0;
  for (const auto& m : maps) {
    if (m.rank() != 4 || m.dim(0) != 1 || m.dim(1) != 1)
      throw DataError("mean_spectrogram expects (1,1,H,W) maps");
    if (m.dim(2) != H) throw DataError("mean_spectrogram: maps differ in H");
    W = std::max(W, m.dim(3));
  }
  // Accumulate in double; shorter maps are padded with their own minimum.
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(H, W);
  for (const auto& m : maps) {
    const std::int64_t w_m = m.dim(3);
    float pad = m.array().minCoeff();
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t w = 0; w < W; ++w)
        acc(h, w) += (w < w_m) ? static_cast<double>(m.at4(0, 0, h, w))
                               : static_cast<double>(pad);
  }
  return (acc / static_cast<double>(maps.size())).cast<float>();
}

void write_feature_cache(const std::string& path_base, const FeatureMap& fm,
                         const FrontendParams& p) {
  {
    std::ofstream raw(path_base + ".f32", std::ios::binary);
    if (!raw) throw DataError("cannot write " + path_base + ".f32");
    static_assert(sizeof(float) == 4);
    // Little-endian hosts only; this codebase targets x86-64/aarch64.
    raw.write(reinterpret_cast<const char*>(fm.data()),
              static_cast<std::streamsize>(fm.numel() * 4));
  }
  json side;
  side["shape"] = fm.shape();
  side["frontend"] = {{"fft_size", p.fft_size}, {"window", p.window},
                      {"hop", p.hop},           {"n_mels", p.n_mels},
                      {"fmin", p.fmin},         {"fmax", p.fmax},
                      {"log_floor", p.log_floor}};
  std::ofstream meta(path_base + ".json");
  if (!meta) throw DataError("cannot write " + path_base + ".json");
  meta << side.dump(2) << "\n";
}

FeatureMap read_feature_cache(const std::string& path_base,
                              const FrontendParams& expected) {
  std::ifstream meta(path_base + ".json");
  if (!meta) throw DataError("cannot open " + path_base + ".json");
  json side = json::parse(meta, nullptr, true);
  const auto dims = side.at("shape").get<std::vector<std::int64_t>>();
  const auto& fe = side.at("frontend");
  if (fe.at("fft_size").get<int>() != expected.fft_size ||
      fe.at("window").get<int>() != expected.window ||
      fe.at("hop").get<int>() != expected.hop ||
      fe.at("n_mels").get<int>() != expected.n_mels)
    throw DataError("feature cache " + path_base +
                    " was written with different front-end parameters");

  FeatureMap fm(Shape(dims.begin(), dims.end()));
  std::ifstream raw(path_base + ".f32", std::ios::binary);
  if (!raw) throw DataError("cannot open " + path_base + ".f32");
  raw.read(reinterpret_cast<char*>(fm.data()),
           static_cast<std::streamsize>(fm.numel() * 4));
  if (!raw) throw DataError("feature cache " + path_base + " is truncated");
  return fm;
}

}  // namespace kws
