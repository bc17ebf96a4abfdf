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

// Independent straight-line reference implementations used as oracles.
// Everything here is deliberately naive (direct summation, scalar loops)
// and shares no code with the library paths it checks.

#ifndef KWS_TESTS_ORACLES_HPP_
#define KWS_TESTS_ORACLES_HPP_

#include <cmath>
#include <complex>
#include <vector>

#include "kws/rng.hpp"
#include "kws/tensor.hpp"
#include "kws/uncertainty.hpp"
#include "kws/wav.hpp"

namespace kws::oracle {

constexpr double kPi = 3.14159265358979323846;

// O(N^2) DFT power spectrum of one Hann-windowed, zero-padded frame.
inline std::vector<double> dft_power_frame(const std::vector<double>& frame,
                                           int fft_size, int n_bins) {
  std::vector<double> out(static_cast<std::size_t>(n_bins));
  for (int k = 0; k < n_bins; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t n = 0; n < frame.size(); ++n) {
      const double ang = -2.0 * kPi * k * static_cast<double>(n) / fft_size;
      acc += frame[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[static_cast<std::size_t>(k)] = std::norm(acc);
  }
  return out;
}

// Full STFT power oracle (window 480, hop 160, Hann, fft 512, 257 bins).
inline std::vector<std::vector<double>> stft_power_full(const Waveform& w,
                                                   int fft_size = 512,
                                                   int window = 480,
                                                   int hop = 160) {
  const int n_bins = fft_size / 2 + 1;
  const std::int64_t frames = (w.size() - window) / hop + 1;
  std::vector<std::vector<double>> out;
  for (std::int64_t t = 0; t < frames; ++t) {
    std::vector<double> frame(static_cast<std::size_t>(window));
    for (int i = 0; i < window; ++i) {
      const double win = 0.5 - 0.5 * std::cos(2.0 * kPi * i / window);
      frame[static_cast<std::size_t>(i)] =
          static_cast<double>(
              w.samples[static_cast<std::size_t>(t * hop + i)]) * win;
    }
    out.push_back(dft_power_frame(frame, fft_size, n_bins));
  }
  return out;
}

// Direct-summation orthonormal DCT-II.
inline std::vector<double> dct2(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0;
    for (std::size_t m = 0; m < n; ++m)
      acc += x[m] * std::cos(kPi * (static_cast<double>(m) + 0.5) *
                             static_cast<double>(k) / static_cast<double>(n));
    const double s = k == 0 ? std::sqrt(1.0 / static_cast<double>(n))
                            : std::sqrt(2.0 / static_cast<double>(n));
    out[k] = s * acc;
  }
  return out;
}

// Full MFCC oracle: DFT power -> triangular mel filters (HTK scale) ->
// log -> direct DCT-II. Mirrors the documented front-end contract without
// touching the library code.
inline std::vector<std::vector<double>> mfcc(const Waveform& w, int n_mels = 40,
                                             double fmin = 20.0,
                                             double fmax = 8000.0,
                                             double log_floor = 1e-10) {
  const auto power = stft_power_full(w);
  const int n_bins = 257;
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto imel = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] =
        imel(mel(fmin) + (mel(fmax) - mel(fmin)) * i / (n_mels + 1));

  std::vector<std::vector<double>> coeffs;
  for (const auto& frame : power) {
    std::vector<double> mel_e(static_cast<std::size_t>(n_mels), 0.0);
    for (int m = 0; m < n_mels; ++m) {
      for (int k = 0; k < n_bins; ++k) {
        const double f = k * 16000.0 / 512.0;
        const double lo = edges[static_cast<std::size_t>(m)];
        const double c = edges[static_cast<std::size_t>(m) + 1];
        const double hi = edges[static_cast<std::size_t>(m) + 2];
        double v = 0.0;
        if (f > lo && f < c)
          v = (f - lo) / (c - lo);
        else if (f >= c && f < hi)
          v = (hi - f) / (hi - c);
        mel_e[static_cast<std::size_t>(m)] += v * frame[static_cast<std::size_t>(k)];
      }
      mel_e[static_cast<std::size_t>(m)] =
          std::log(mel_e[static_cast<std::size_t>(m)] + log_floor);
    }
    coeffs.push_back(dct2(mel_e));
  }
  return coeffs;
}

// Scalar-loop channel statistics: mean and biased std per (b, c).
template <typename S>
inline void loop_channel_stats(const Tensor<S>& x, Tensor<double>& mu,
                               Tensor<double>& sigma) {
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  mu = Tensor<double>(Shape{B, C});
  sigma = Tensor<double>(Shape{B, C});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c) {
      double acc = 0;
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) acc += x.at4(b, c, h, w);
      const double m = acc / static_cast<double>(H * W);
      double var = 0;
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) {
          const double d = x.at4(b, c, h, w) - m;
          var += d * d;
        }
      mu.at2(b, c) = m;
      sigma.at2(b, c) = std::sqrt(var / static_cast<double>(H * W));
    }
}

// Straight-line scalar DSU/PatchDSU forward, replaying the library's draw
// order: B gates, then mean-offset normals in (b, c, k) order, then
// deviation-offset normals. Grid geometry is recomputed with ceiling
// arithmetic. Computes entirely in double.
template <typename S>
inline Tensor<double> scalar_patchdsu(const Tensor<S>& x, int k_h, int k_w,
                                      double p, double eps, VarianceMode mode,
                                      Rng& rng) {
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t kh = std::min<std::int64_t>(k_h, H);
  const std::int64_t kw = std::min<std::int64_t>(k_w, W);
  const std::int64_t ph = (H + kh - 1) / kh, pw = (W + kw - 1) / kw;
  const std::int64_t nr = (H + ph - 1) / ph, nc = (W + pw - 1) / pw;
  const std::int64_t K = nr * nc;

  std::vector<int> gate(static_cast<std::size_t>(B));
  for (std::int64_t b = 0; b < B; ++b)
    gate[static_cast<std::size_t>(b)] = rng.uniform() < p ? 1 : 0;

  // Patch stats.
  Tensor<double> mu(Shape{B, C, K}), sig(Shape{B, C, K});
  auto bounds = [&](std::int64_t k, std::int64_t& h0, std::int64_t& h1,
                    std::int64_t& w0, std::int64_t& w1) {
    const std::int64_t r = k / nc, c = k % nc;
    h0 = r * ph;
    h1 = std::min<std::int64_t>(H, h0 + ph);
    w0 = c * pw;
    w1 = std::min<std::int64_t>(W, w0 + pw);
  };
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t k = 0; k < K; ++k) {
        std::int64_t h0, h1, w0, w1;
        bounds(k, h0, h1, w0, w1);
        double acc = 0;
        for (std::int64_t h = h0; h < h1; ++h)
          for (std::int64_t w = w0; w < w1; ++w) acc += x.at4(b, c, h, w);
        const double n = static_cast<double>((h1 - h0) * (w1 - w0));
        const double m = acc / n;
        double var = 0;
        for (std::int64_t h = h0; h < h1; ++h)
          for (std::int64_t w = w0; w < w1; ++w) {
            const double d = x.at4(b, c, h, w) - m;
            var += d * d;
          }
        mu.at3(b, c, k) = m;
        sig.at3(b, c, k) = std::sqrt(var / n);
      }

  // Batch variances of the stats.
  auto variance_of = [&](const Tensor<double>& s) {
    Tensor<double> v(Shape{B, C, K});
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t k = 0; k < K; ++k) {
        double mean = 0;
        for (std::int64_t b = 0; b < B; ++b) mean += s.at3(b, c, k);
        mean /= static_cast<double>(B);
        double shared = 0;
        for (std::int64_t b = 0; b < B; ++b) {
          const double d = s.at3(b, c, k) - mean;
          shared += d * d;
        }
        shared /= static_cast<double>(B);
        for (std::int64_t b = 0; b < B; ++b) {
          const double d = s.at3(b, c, k) - mean;
          v.at3(b, c, k) = mode == VarianceMode::kBatchShared ? shared : d * d;
        }
      }
    return v;
  };
  const Tensor<double> var_mu = variance_of(mu);
  const Tensor<double> var_sig = variance_of(sig);

  // Draws in (b, c, k) storage order: all betas, then all gammas.
  Tensor<double> beta(Shape{B, C, K}), gamma(Shape{B, C, K});
  for (std::int64_t i = 0; i < beta.numel(); ++i)
    beta[i] = mu[i] + rng.normal() * std::sqrt(var_mu[i]);
  for (std::int64_t i = 0; i < gamma.numel(); ++i)
    gamma[i] = sig[i] + rng.normal() * std::sqrt(var_sig[i]);

  Tensor<double> out(Shape{B, C, H, W});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t k = 0; k < K; ++k) {
        std::int64_t h0, h1, w0, w1;
        bounds(k, h0, h1, w0, w1);
        for (std::int64_t h = h0; h < h1; ++h)
          for (std::int64_t w = w0; w < w1; ++w) {
            const double xv = x.at4(b, c, h, w);
            out.at4(b, c, h, w) =
                gate[static_cast<std::size_t>(b)]
                    ? gamma.at3(b, c, k) * (xv - mu.at3(b, c, k)) /
                              (sig.at3(b, c, k) + eps) +
                          beta.at3(b, c, k)
                    : xv;
          }
      }
  return out;
}

// Hand-derived DSU input gradient for the BLOCKED-variance configuration
// (grad_through_variance = false): beta and gamma are mu + const and
// sigma + const, so for each (b, c) plane with N elements, t_i = x_i - mu,
// d = sigma + eps, S_g = sum(g), S_gt = sum(g * t), s'_j = t_j / (N sigma):
//   dL/dx_j = gamma/d * (g_j - S_g/N) + s'_j * S_gt * (1/d - gamma/d^2)
//             + S_g/N
template <typename S>
inline Tensor<double> scalar_dsu_input_grad(const Tensor<S>& x,
                                            const Tensor<double>& upstream,
                                            double p, double eps, Rng& rng,
                                            VarianceMode mode) {
  const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const double N = static_cast<double>(H * W);

  std::vector<int> gate(static_cast<std::size_t>(B));
  for (std::int64_t b = 0; b < B; ++b)
    gate[static_cast<std::size_t>(b)] = rng.uniform() < p ? 1 : 0;

  Tensor<double> mu, sig;
  loop_channel_stats(x, mu, sig);
  // Batch variance (values only needed to burn the correct draws).
  Tensor<double> var_mu(Shape{B, C}), var_sig(Shape{B, C});
  for (std::int64_t c = 0; c < C; ++c) {
    double mm = 0, ms = 0;
    for (std::int64_t b = 0; b < B; ++b) {
      mm += mu.at2(b, c);
      ms += sig.at2(b, c);
    }
    mm /= static_cast<double>(B);
    ms /= static_cast<double>(B);
    double sm = 0, ss = 0;
    for (std::int64_t b = 0; b < B; ++b) {
      sm += (mu.at2(b, c) - mm) * (mu.at2(b, c) - mm);
      ss += (sig.at2(b, c) - ms) * (sig.at2(b, c) - ms);
    }
    sm /= static_cast<double>(B);
    ss /= static_cast<double>(B);
    for (std::int64_t b = 0; b < B; ++b) {
      var_mu.at2(b, c) = mode == VarianceMode::kBatchShared
                             ? sm
                             : (mu.at2(b, c) - mm) * (mu.at2(b, c) - mm);
      var_sig.at2(b, c) = mode == VarianceMode::kBatchShared
                              ? ss
                              : (sig.at2(b, c) - ms) * (sig.at2(b, c) - ms);
    }
  }
  Tensor<double> gamma(Shape{B, C});
  for (std::int64_t i = 0; i < B * C; ++i)
    (void)rng.normal();  // beta draws shift nothing in the input gradient
  for (std::int64_t i = 0; i < B * C; ++i)
    gamma[i] = sig[i] + rng.normal() * std::sqrt(var_sig[i]);

  Tensor<double> grad(Shape{B, C, H, W});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      if (!gate[static_cast<std::size_t>(b)]) {
        for (std::int64_t h = 0; h < H; ++h)
          for (std::int64_t w = 0; w < W; ++w)
            grad.at4(b, c, h, w) = upstream.at4(b, c, h, w);
        continue;
      }
      const double d = sig.at2(b, c) + eps;
      const double g_c = gamma.at2(b, c);
      double S_g = 0, S_gt = 0;
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) {
          const double t = x.at4(b, c, h, w) - mu.at2(b, c);
          S_g += upstream.at4(b, c, h, w);
          S_gt += upstream.at4(b, c, h, w) * t;
        }
      const double sigma_safe = std::max(sig.at2(b, c), 1e-20);
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t w = 0; w < W; ++w) {
          const double t = x.at4(b, c, h, w) - mu.at2(b, c);
          const double sprime = t / (N * sigma_safe);
          grad.at4(b, c, h, w) =
              g_c / d * (upstream.at4(b, c, h, w) - S_g / N) +
              sprime * S_gt * (1.0 / d - g_c / (d * d)) + S_g / N;
        }
    }
  }
  return grad;
}

// Direct per-class F1 from raw (truth, prediction) pairs.
inline double direct_macro_f1(const std::vector<std::int64_t>& truth,
                              const std::vector<std::int64_t>& pred,
                              std::int64_t n_classes) {
  double sum = 0;
  std::int64_t used = 0;
  for (std::int64_t c = 0; c < n_classes; ++c) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c && pred[i] == c) ++tp;
      if (truth[i] != c && pred[i] == c) ++fp;
      if (truth[i] == c && pred[i] != c) ++fn;
    }
    if (tp + fn == 0) continue;
    sum += (2 * tp + fp + fn) > 0
               ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn)
               : 0.0;
    ++used;
  }
  return sum / static_cast<double>(used);
}

}  // namespace kws::oracle

#endif  // KWS_TESTS_ORACLES_HPP_
