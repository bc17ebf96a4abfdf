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

#ifndef KWS_UNCERTAINTY_HPP_
#define KWS_UNCERTAINTY_HPP_

#include <atomic>
#include <cmath>
#include <string>
#include <vector>

#include "kws/autodiff.hpp"
#include "kws/common.hpp"
#include "kws/rng.hpp"
#include "kws/tensor.hpp"

namespace kws {

// Training-time stochastic renormalization of feature-map statistics.
//
// DSU treats each example's per-channel mean and standard deviation as
// Gaussians centered on the observed statistics, with variances estimated
// across the mini-batch, and re-styles the example with sampled statistics.
// PatchDSU applies the same construction independently per tile of a
// ceiling-partitioned grid over the (frequency, time) plane. Freq-MixStyle
// normalizes per-frequency statistics and re-styles with a deterministic
// lambda-mix of a random batch permutation's statistics.
//
// RNG discipline (all three transforms, training mode only): draws are
// consumed in a fixed order so a straight-line scalar oracle can replay
// them -- DSU/PatchDSU: per-example Bernoulli gates (b ascending), then the
// mean-offset normals in storage order of the (B,C,K) statistics tensor
// (b, then c, then k), then the deviation-offset normals in the same
// order. Draws are consumed whether or not an example is gated on, so the
// stream layout does not depend on p or on gate outcomes. Freq-MixStyle:
// one batch gate, then (if on) B-1 Fisher-Yates words.

enum class UncertaintyMethod { kNone, kDSU, kPatchDSU, kFreqMixStyle };
enum class VarianceMode { kBatchShared, kPerExample };

const char* method_name(UncertaintyMethod m);
UncertaintyMethod method_from_name(const std::string& name);
const char* variance_mode_name(VarianceMode m);
VarianceMode variance_mode_from_name(const std::string& name);

struct UncertaintyConfig {
  UncertaintyMethod method = UncertaintyMethod::kNone;
  double p = 0.8;           // per-example application probability
  int k_h = 6;              // patch count target along frequency
  int k_w = 10;             // patch count target along time
  double lambda_mix = 0.5;  // Freq-MixStyle mixing weight
  double eps = 1e-6;        // sigma floor in divisions
  VarianceMode variance_mode = VarianceMode::kBatchShared;
  bool grad_through_variance = false;

  void validate() const;
};

// Ceiling partition of an (H, W) plane: interior patches are
// (ceil(H/k_h), ceil(W/k_w)); trailing patches may be smaller. Patches are
// disjoint and cover the plane. Patch k = row * n_cols + col.
struct PatchGrid {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::int64_t> row_bounds;  // n_rows + 1 entries, 0 .. H
  std::vector<std::int64_t> col_bounds;  // n_cols + 1 entries, 0 .. W

  std::int64_t n_rows() const { return static_cast<std::int64_t>(row_bounds.size()) - 1; }
  std::int64_t n_cols() const { return static_cast<std::int64_t>(col_bounds.size()) - 1; }
  std::int64_t n_patches() const { return n_rows() * n_cols(); }
  std::int64_t patch_height(std::int64_t r) const {
    return row_bounds[static_cast<std::size_t>(r) + 1] - row_bounds[static_cast<std::size_t>(r)];
  }
  std::int64_t patch_width(std::int64_t c) const {
    return col_bounds[static_cast<std::size_t>(c) + 1] - col_bounds[static_cast<std::size_t>(c)];
  }

  // k values exceeding the axis length are clamped (warned once per
  // process); deep layers can shrink below the configured patch counts.
  static PatchGrid make(std::int64_t H, std::int64_t W, int k_h, int k_w);
};

// ---------------------------------------------------------------------------
// Plain-tensor statistics ops (also used by tests and oracles).

template <typename S>
struct StatPair {
  Tensor<S> mu;     // (B, C)  or (B, C, K)
  Tensor<S> sigma;  // same shape; sqrt of the biased variance
};

// Per-(example, channel) mean and standard deviation over the plane.
template <typename S>
StatPair<S> channel_stats(const Tensor<S>& x) {
  const auto& sh = x.shape();
  const std::int64_t BC = sh[0] * sh[1], HW = sh[2] * sh[3];
  StatPair<S> out{Tensor<S>(Shape{sh[0], sh[1]}), Tensor<S>(Shape{sh[0], sh[1]})};
  for (std::int64_t i = 0; i < BC; ++i) {
    const S* p = x.data() + i * HW;
    double acc = 0;
    for (std::int64_t j = 0; j < HW; ++j) acc += static_cast<double>(p[j]);
    const double mean = acc / static_cast<double>(HW);
    double var = 0;
    for (std::int64_t j = 0; j < HW; ++j) {
      const double d = static_cast<double>(p[j]) - mean;
      var += d * d;
    }
    out.mu[i] = static_cast<S>(mean);
    out.sigma[i] = static_cast<S>(std::sqrt(var / static_cast<double>(HW)));
  }
  return out;
}

// Variance of per-example statistics across the batch. batch_shared mode
// averages the squared deviations over the batch (result drops dim 0);
// per_example keeps each example's squared deviation (same shape as input).
template <typename S>
Tensor<S> stat_variance(const Tensor<S>& stats, VarianceMode mode) {
  const auto& sh = stats.shape();
  const std::int64_t B = sh[0];
  const std::int64_t rest = stats.numel() / B;
  Tensor<S> centered(sh);
  for (std::int64_t j = 0; j < rest; ++j) {
    double acc = 0;
    for (std::int64_t b = 0; b < B; ++b)
      acc += static_cast<double>(stats[b * rest + j]);
    const double mean = acc / static_cast<double>(B);
    for (std::int64_t b = 0; b < B; ++b) {
      const double d = static_cast<double>(stats[b * rest + j]) - mean;
      centered[b * rest + j] = static_cast<S>(d * d);
    }
  }
  if (mode == VarianceMode::kPerExample) return centered;
  Shape out_shape(sh.begin() + 1, sh.end());
  Tensor<S> out(out_shape);
  for (std::int64_t j = 0; j < rest; ++j) {
    double acc = 0;
    for (std::int64_t b = 0; b < B; ++b)
      acc += static_cast<double>(centered[b * rest + j]);
    out[j] = static_cast<S>(acc / static_cast<double>(B));
  }
  return out;
}

// center + eps ⊙ sqrt(variance), eps ~ N(0, I) drawn once per call in the
// storage order of `center`. `variance` either matches center's shape or
// drops its leading (batch) axis.
template <typename S>
Tensor<S> sample_reparam(const Tensor<S>& center, const Tensor<S>& variance, Rng& rng) {
  const std::int64_t n = center.numel();
  const std::int64_t vn = variance.numel();
  if (vn != n && vn * center.shape()[0] != n)
    throw NumericError("sample_reparam: variance shape mismatch");
  Tensor<S> out(center.shape());
  for (std::int64_t i = 0; i < n; ++i) {
    const S v = variance[vn == n ? i : i % vn];
    out[i] = center[i] + static_cast<S>(rng.normal()) *
                             static_cast<S>(std::sqrt(std::max(v, S(0))));
  }
  return out;
}

// Differentiable reparameterized sample. Gradients flow to `center`; they
// flow to `variance` only when grad_through_variance is set. Consumes
// center.numel() normal draws in storage order.
template <typename S>
Var<S> sample_reparam_ad(const Var<S>& center, const Var<S>& variance, Rng& rng,
                         bool grad_through_variance) {
  const std::int64_t B = center.shape()[0];
  Var<S> var_full = variance;
  if (variance.value().numel() != center.value().numel())
    var_full = expand_batch(variance, B);
  if (!grad_through_variance) var_full = detach(var_full);
  Tensor<S> eps(center.shape());
  for (std::int64_t i = 0; i < eps.numel(); ++i)
    eps[i] = static_cast<S>(rng.normal());
  return add(center, mul(sqrt_v(var_full), Var<S>::constant(std::move(eps))));
}

// ---------------------------------------------------------------------------
// Patch partition ops.

// Patch-major split into (B, C, ph, pw) tensors, k = row * n_cols + col.
template <typename S>
std::vector<Tensor<S>> split_patches(const Tensor<S>& x, const PatchGrid& g) {
  const auto& sh = x.shape();
  const std::int64_t B = sh[0], C = sh[1], H = sh[2], W = sh[3];
  if (H != g.height || W != g.width)
    throw NumericError("split_patches: grid does not match the map");
  std::vector<Tensor<S>> out;
  out.reserve(static_cast<std::size_t>(g.n_patches()));
  for (std::int64_t r = 0; r < g.n_rows(); ++r) {
    for (std::int64_t c = 0; c < g.n_cols(); ++c) {
      const std::int64_t h0 = g.row_bounds[static_cast<std::size_t>(r)];
      const std::int64_t w0 = g.col_bounds[static_cast<std::size_t>(c)];
      const std::int64_t ph = g.patch_height(r), pw = g.patch_width(c);
      Tensor<S> patch(Shape{B, C, ph, pw});
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t ch = 0; ch < C; ++ch)
          for (std::int64_t h = 0; h < ph; ++h)
            for (std::int64_t w = 0; w < pw; ++w)
              patch.at4(b, ch, h, w) = x.at4(b, ch, h0 + h, w0 + w);
      out.push_back(std::move(patch));
    }
  }
  return out;
}

template <typename S>
Tensor<S> merge_patches(const std::vector<Tensor<S>>& patches, const PatchGrid& g,
                        std::int64_t B, std::int64_t C) {
  if (static_cast<std::int64_t>(patches.size()) != g.n_patches())
    throw NumericError("merge_patches: patch count mismatch");
  Tensor<S> out(Shape{B, C, g.height, g.width});
  std::size_t k = 0;
  for (std::int64_t r = 0; r < g.n_rows(); ++r) {
    for (std::int64_t c = 0; c < g.n_cols(); ++c, ++k) {
      const auto& patch = patches[k];
      const std::int64_t h0 = g.row_bounds[static_cast<std::size_t>(r)];
      const std::int64_t w0 = g.col_bounds[static_cast<std::size_t>(c)];
      const std::int64_t ph = g.patch_height(r), pw = g.patch_width(c);
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t ch = 0; ch < C; ++ch)
          for (std::int64_t h = 0; h < ph; ++h)
            for (std::int64_t w = 0; w < pw; ++w)
              out.at4(b, ch, h0 + h, w0 + w) = patch.at4(b, ch, h, w);
    }
  }
  return out;
}

// Spec surface: grid plus materialized patches.
template <typename S>
std::pair<PatchGrid, std::vector<Tensor<S>>> patch_split(const Tensor<S>& x,
                                                         int k_h, int k_w) {
  PatchGrid g = PatchGrid::make(x.shape()[2], x.shape()[3], k_h, k_w);
  return {g, split_patches(x, g)};
}

// Autodiff: per-patch mean, (B,C,H,W) -> (B,C,K).
template <typename S>
Var<S> patch_mean(const Var<S>& x, const PatchGrid& g) {
  const auto& sh = x.shape();
  const std::int64_t B = sh[0], C = sh[1], H = sh[2], W = sh[3];
  const std::int64_t K = g.n_patches();
  Tensor<S> out(Shape{B, C, K});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t ch = 0; ch < C; ++ch) {
      const S* plane = x.value().data() + (b * C + ch) * H * W;
      std::int64_t k = 0;
      for (std::int64_t r = 0; r < g.n_rows(); ++r) {
        for (std::int64_t c = 0; c < g.n_cols(); ++c, ++k) {
          double acc = 0;
          for (std::int64_t h = g.row_bounds[static_cast<std::size_t>(r)];
               h < g.row_bounds[static_cast<std::size_t>(r) + 1]; ++h)
            for (std::int64_t w = g.col_bounds[static_cast<std::size_t>(c)];
                 w < g.col_bounds[static_cast<std::size_t>(c) + 1]; ++w)
              acc += static_cast<double>(plane[h * W + w]);
          out.at3(b, ch, k) = static_cast<S>(
              acc / static_cast<double>(g.patch_height(r) * g.patch_width(c)));
        }
      }
    }
  }
  return make_op<S>(std::move(out), {x}, [g, B, C, H, W](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<S>& gx = n.parents[0]->grad_buffer();
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t ch = 0; ch < C; ++ch) {
        S* plane = gx.data() + (b * C + ch) * H * W;
        std::int64_t k = 0;
        for (std::int64_t r = 0; r < g.n_rows(); ++r) {
          for (std::int64_t c = 0; c < g.n_cols(); ++c, ++k) {
            const S gk = n.grad.at3(b, ch, k) /
                         static_cast<S>(g.patch_height(r) * g.patch_width(c));
            for (std::int64_t h = g.row_bounds[static_cast<std::size_t>(r)];
                 h < g.row_bounds[static_cast<std::size_t>(r) + 1]; ++h)
              for (std::int64_t w = g.col_bounds[static_cast<std::size_t>(c)];
                   w < g.col_bounds[static_cast<std::size_t>(c) + 1]; ++w)
                plane[h * W + w] += gk;
          }
        }
      }
    }
  });
}

// Autodiff: paint per-patch scalars back over the plane, (B,C,K) -> (B,C,H,W).
template <typename S>
Var<S> expand_patch(const Var<S>& s, const PatchGrid& g) {
  const auto& sh = s.shape();
  const std::int64_t B = sh[0], C = sh[1], K = sh[2];
  const std::int64_t H = g.height, W = g.width;
  if (K != g.n_patches()) throw NumericError("expand_patch: patch count mismatch");
  Tensor<S> out(Shape{B, C, H, W});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t ch = 0; ch < C; ++ch) {
      S* plane = out.data() + (b * C + ch) * H * W;
      std::int64_t k = 0;
      for (std::int64_t r = 0; r < g.n_rows(); ++r) {
        for (std::int64_t c = 0; c < g.n_cols(); ++c, ++k) {
          const S v = s.value().at3(b, ch, k);
          for (std::int64_t h = g.row_bounds[static_cast<std::size_t>(r)];
               h < g.row_bounds[static_cast<std::size_t>(r) + 1]; ++h)
            for (std::int64_t w = g.col_bounds[static_cast<std::size_t>(c)];
                 w < g.col_bounds[static_cast<std::size_t>(c) + 1]; ++w)
              plane[h * W + w] = v;
        }
      }
    }
  }
  return make_op<S>(std::move(out), {s}, [g, B, C, H, W](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<S>& gs = n.parents[0]->grad_buffer();
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t ch = 0; ch < C; ++ch) {
        const S* plane = n.grad.data() + (b * C + ch) * H * W;
        std::int64_t k = 0;
        for (std::int64_t r = 0; r < g.n_rows(); ++r) {
          for (std::int64_t c = 0; c < g.n_cols(); ++c, ++k) {
            double acc = 0;
            for (std::int64_t h = g.row_bounds[static_cast<std::size_t>(r)];
                 h < g.row_bounds[static_cast<std::size_t>(r) + 1]; ++h)
              for (std::int64_t w = g.col_bounds[static_cast<std::size_t>(c)];
                   w < g.col_bounds[static_cast<std::size_t>(c) + 1]; ++w)
                acc += static_cast<double>(plane[h * W + w]);
            gs.at3(b, ch, k) += static_cast<S>(acc);
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Forward transforms.

namespace detail {

// Batch variance of per-example statistics as an autodiff expression,
// broadcast back to the statistics' own shape.
template <typename S>
Var<S> stat_variance_expr(const Var<S>& stats, VarianceMode mode) {
  const std::int64_t B = stats.shape()[0];
  Var<S> mean = reduce_mean_batch(stats);
  Var<S> centered = sub(stats, expand_batch(mean, B));
  Var<S> sq = mul(centered, centered);
  if (mode == VarianceMode::kPerExample) return sq;
  return expand_batch(reduce_mean_batch(sq), B);
}

inline std::vector<std::uint8_t> draw_gates(std::int64_t B, double p, Rng& rng,
                                            bool& any) {
  std::vector<std::uint8_t> gates(static_cast<std::size_t>(B));
  any = false;
  for (auto& g : gates) {
    g = rng.bernoulli(p) ? 1 : 0;
    any |= (g != 0);
  }
  return gates;
}

}  // namespace detail

// DSU: per-channel statistics over the whole plane.
template <typename S>
Var<S> dsu_forward(const Var<S>& x, const UncertaintyConfig& cfg, Rng& rng,
                   bool training) {
  if (!training) return x;
  const auto& sh = x.shape();
  const std::int64_t B = sh[0], H = sh[2], W = sh[3];

  bool any = false;
  const auto gates = detail::draw_gates(B, cfg.p, rng, any);

  Var<S> mu = mean_hw(x);                                   // (B,C)
  Var<S> centered = sub(x, expand_bc(mu, H, W));
  Var<S> sigma = sqrt_v(mean_hw(mul(centered, centered)));  // (B,C)

  Var<S> beta = sample_reparam_ad(
      mu, detail::stat_variance_expr(mu, cfg.variance_mode), rng,
      cfg.grad_through_variance);
  Var<S> gamma = sample_reparam_ad(
      sigma, detail::stat_variance_expr(sigma, cfg.variance_mode), rng,
      cfg.grad_through_variance);
  if (!any) return x;  // draws above keep the stream layout gate-independent

  Var<S> normalized =
      div(centered, expand_bc(add_scalar(sigma, static_cast<S>(cfg.eps)), H, W));
  Var<S> styled =
      add(mul(expand_bc(gamma, H, W), normalized), expand_bc(beta, H, W));
  return select_rows(gates, styled, x);
}

// PatchDSU: the DSU construction independently per grid patch.
template <typename S>
Var<S> patchdsu_forward(const Var<S>& x, const UncertaintyConfig& cfg, Rng& rng,
                        bool training) {
  if (!training) return x;
  const auto& sh = x.shape();
  const std::int64_t B = sh[0], H = sh[2], W = sh[3];
  const PatchGrid grid = PatchGrid::make(H, W, cfg.k_h, cfg.k_w);

  bool any = false;
  const auto gates = detail::draw_gates(B, cfg.p, rng, any);

  Var<S> mu = patch_mean(x, grid);                               // (B,C,K)
  Var<S> centered = sub(x, expand_patch(mu, grid));
  Var<S> sigma = sqrt_v(patch_mean(mul(centered, centered), grid));

  Var<S> beta = sample_reparam_ad(
      mu, detail::stat_variance_expr(mu, cfg.variance_mode), rng,
      cfg.grad_through_variance);
  Var<S> gamma = sample_reparam_ad(
      sigma, detail::stat_variance_expr(sigma, cfg.variance_mode), rng,
      cfg.grad_through_variance);
  if (!any) return x;

  Var<S> normalized = div(
      centered, expand_patch(add_scalar(sigma, static_cast<S>(cfg.eps)), grid));
  Var<S> styled =
      add(mul(expand_patch(gamma, grid), normalized), expand_patch(beta, grid));
  return select_rows(gates, styled, x);
}

// Freq-MixStyle: normalize per-frequency statistics (mean/std over time),
// then re-style with a deterministic lambda-mix of a random permutation
// partner's statistics. Gated per batch; no Gaussian sampling.
template <typename S>
Var<S> freq_mixstyle_forward(const Var<S>& x, const UncertaintyConfig& cfg,
                             Rng& rng, bool training) {
  if (!training) return x;
  const auto& sh = x.shape();
  const std::int64_t B = sh[0], W = sh[3];
  if (B < 2) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
      log_warn("freq-mixstyle needs batch size >= 2; passing through");
    return x;
  }
  if (!rng.bernoulli(cfg.p)) return x;
  std::vector<std::int64_t> perm(static_cast<std::size_t>(B));
  for (std::int64_t b = 0; b < B; ++b) perm[static_cast<std::size_t>(b)] = b;
  rng.shuffle(perm);

  const S lam = static_cast<S>(cfg.lambda_mix);
  Var<S> mu = mean_w(x);                                   // (B,C,H)
  Var<S> centered = sub(x, expand_bch(mu, W));
  Var<S> sigma = sqrt_v(mean_w(mul(centered, centered)));  // (B,C,H)
  Var<S> normalized =
      div(centered, expand_bch(add_scalar(sigma, static_cast<S>(cfg.eps)), W));

  Var<S> beta = add(mul_scalar(mu, lam), mul_scalar(permute_batch(mu, perm), S(1) - lam));
  Var<S> gamma =
      add(mul_scalar(sigma, lam), mul_scalar(permute_batch(sigma, perm), S(1) - lam));
  return add(mul(expand_bch(gamma, W), normalized), expand_bch(beta, W));
}

// Dispatcher used at the model's insertion points.
template <typename S>
Var<S> apply_uncertainty(const Var<S>& x, const UncertaintyConfig& cfg, Rng& rng,
                         bool training) {
  switch (cfg.method) {
    case UncertaintyMethod::kNone:
      return x;
    case UncertaintyMethod::kDSU:
      return dsu_forward(x, cfg, rng, training);
    case UncertaintyMethod::kPatchDSU:
      return patchdsu_forward(x, cfg, rng, training);
    case UncertaintyMethod::kFreqMixStyle:
      return freq_mixstyle_forward(x, cfg, rng, training);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Verification harness: Monte Carlo check of E[method(x)] == x at p = 1.

struct ExpectationReport {
  double max_abs_deviation = 0.0;  // max |mean_draws - x|
  // max over elements of |mean - x| / (std_draw / sqrt(n)); under the CLT
  // this is approximately a standard normal's absolute value per element.
  double max_normalized_deviation = 0.0;
};

template <typename S>
ExpectationReport expectation_identity_check(const Tensor<S>& x,
                                             const UncertaintyConfig& cfg,
                                             std::int64_t n_draws, Rng& rng) {
  const std::int64_t n = x.numel();
  std::vector<double> sum(static_cast<std::size_t>(n), 0.0);
  std::vector<double> sum_sq(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t d = 0; d < n_draws; ++d) {
    Var<S> in = Var<S>::constant(x);
    Var<S> out = apply_uncertainty(in, cfg, rng, /*training=*/true);
    const Tensor<S>& v = out.value();
    for (std::int64_t i = 0; i < n; ++i) {
      const double val = static_cast<double>(v[i]);
      sum[static_cast<std::size_t>(i)] += val;
      sum_sq[static_cast<std::size_t>(i)] += val * val;
    }
  }
  ExpectationReport rep;
  for (std::int64_t i = 0; i < n; ++i) {
    const double mean = sum[static_cast<std::size_t>(i)] / static_cast<double>(n_draws);
    const double var = std::max(
        sum_sq[static_cast<std::size_t>(i)] / static_cast<double>(n_draws) - mean * mean,
        0.0);
    const double dev = std::abs(mean - static_cast<double>(x[i]));
    const double se = std::sqrt(var / static_cast<double>(n_draws));
    rep.max_abs_deviation = std::max(rep.max_abs_deviation, dev);
    rep.max_normalized_deviation =
        std::max(rep.max_normalized_deviation, dev / std::max(se, 1e-300));
  }
  return rep;
}

}  // namespace kws

#endif  // KWS_UNCERTAINTY_HPP_
