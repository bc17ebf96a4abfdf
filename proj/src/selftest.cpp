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

#include "kws/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "kws/augment.hpp"
#include "kws/dsp.hpp"
#include "kws/nn.hpp"
#include "kws/train.hpp"
#include "kws/uncertainty.hpp"

namespace kws {

namespace {

Tensor<float> random_map(Shape shape, Rng& rng) {
  Tensor<float> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<float>(rng.normal());
  return t;
}

bool bitwise_equal(const Tensor<float>& a, const Tensor<float>& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

double max_rel_diff(const Tensor<float>& a, const Tensor<float>& b) {
  double worst = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - b[i]);
    const double scale = std::max({1e-6, std::abs(static_cast<double>(a[i])),
                                   std::abs(static_cast<double>(b[i]))});
    worst = std::max(worst, d / scale);
  }
  return worst;
}

bool check_identity_gates() {
  Rng rng(7);
  for (auto method : {UncertaintyMethod::kDSU, UncertaintyMethod::kPatchDSU,
                      UncertaintyMethod::kFreqMixStyle}) {
    for (int rep = 0; rep < 10; ++rep) {
      UncertaintyConfig cfg;
      cfg.method = method;
      cfg.k_h = 3;
      cfg.k_w = 4;
      Tensor<float> x = random_map({3, 2, 6, 9}, rng);
      cfg.p = 0.0;
      Rng r1(11);
      if (!bitwise_equal(
              apply_uncertainty(Var<float>::constant(x), cfg, r1, true).value(), x))
        return false;
      cfg.p = 1.0;
      Rng r2(12);
      if (!bitwise_equal(
              apply_uncertainty(Var<float>::constant(x), cfg, r2, false).value(), x))
        return false;
    }
  }
  return true;
}

bool check_patch_reduction() {
  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    UncertaintyConfig dsu;
    dsu.method = UncertaintyMethod::kDSU;
    dsu.p = 0.7;
    UncertaintyConfig pd = dsu;
    pd.method = UncertaintyMethod::kPatchDSU;
    pd.k_h = 1;
    pd.k_w = 1;
    Tensor<float> x = random_map({4, 3, 5, 6}, rng);
    Rng ra(100 + rep), rb(100 + rep);
    const auto a = dsu_forward(Var<float>::constant(x), dsu, ra, true).value();
    const auto b = patchdsu_forward(Var<float>::constant(x), pd, rb, true).value();
    if (max_rel_diff(a, b) > 1e-6) return false;
  }
  return true;
}

bool check_patch_roundtrip() {
  Rng rng(33);
  for (int rep = 0; rep < 30; ++rep) {
    const auto H = static_cast<std::int64_t>(1 + rng.uniform_int(40));
    const auto W = static_cast<std::int64_t>(1 + rng.uniform_int(40));
    const int kh = 1 + static_cast<int>(rng.uniform_int(10));
    const int kw = 1 + static_cast<int>(rng.uniform_int(10));
    Tensor<float> x = random_map({2, 2, H, W}, rng);
    const auto [grid, patches] = patch_split(x, kh, kw);
    if (!bitwise_equal(merge_patches(patches, grid, 2, 2), x)) return false;
  }
  return true;
}

bool check_snr_exactness() {
  Rng rng(55);
  for (double snr : {20.0, 10.0, 5.0, 0.0, -5.0}) {
    Waveform s = white_noise(4000, rng);
    Waveform n = white_noise(5000, rng);
    Rng mix_rng(77);
    Waveform mixed = mix_at_snr(s, n, snr, mix_rng);
    double ps = 0, pn = 0;
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
      ps += static_cast<double>(s.samples[i]) * s.samples[i];
      const double d = static_cast<double>(mixed.samples[i]) - s.samples[i];
      pn += d * d;
    }
    const double measured = 10.0 * std::log10(ps / pn);
    if (std::abs(measured - snr) > 1e-6) return false;
  }
  return true;
}

bool check_expectation_identity() {
  Rng rng(91);
  Tensor<float> x = random_map({4, 1, 8, 8}, rng);
  for (auto method : {UncertaintyMethod::kDSU, UncertaintyMethod::kPatchDSU}) {
    UncertaintyConfig cfg;
    cfg.method = method;
    cfg.p = 1.0;
    cfg.k_h = 2;
    cfg.k_w = 2;
    Rng draw_rng(123);
    const auto rep = expectation_identity_check(x, cfg, 4000, draw_rng);
    if (rep.max_normalized_deviation > 6.0) return false;
  }
  return true;
}

bool check_gradients() {
  // Spot check: DSU composite vs central differences, double precision.
  // Finite differences see the variance estimates move with the input, so
  // the fully differentiable configuration is checked here; the default
  // blocked-variance gradient is covered by the scalar oracle tests.
  Rng rng(17);
  Tensor<double> x({2, 2, 3, 4});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
  UncertaintyConfig cfg;
  cfg.method = UncertaintyMethod::kDSU;
  cfg.p = 1.0;
  cfg.grad_through_variance = true;

  Tensor<double> cotangent(x.shape());
  for (std::int64_t i = 0; i < cotangent.numel(); ++i) cotangent[i] = rng.normal();

  auto loss_at = [&](const Tensor<double>& input) {
    Rng r(4242);
    Var<double> in = Var<double>::constant(input);
    Var<double> out = dsu_forward(in, cfg, r, true);
    double acc = 0;
    for (std::int64_t i = 0; i < out.value().numel(); ++i)
      acc += out.value()[i] * cotangent[i];
    return acc;
  };

  Var<double> in = Var<double>::leaf(x, true);
  Rng r(4242);
  Var<double> out = dsu_forward(in, cfg, r, true);
  Var<double> loss = make_op<double>(
      Tensor<double>(Shape{1}), {out}, [&cotangent](Node<double>& n) {
        n.parents[0]->grad_buffer().array() +=
            cotangent.array() * n.grad[0];
      });
  loss.value()[0] = 0;  // value unused
  backward(loss);

  const double h = 1e-5;
  for (std::int64_t i = 0; i < x.numel(); i += 5) {
    Tensor<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (loss_at(xp) - loss_at(xm)) / (2 * h);
    const double an = in.grad()[i];
    if (std::abs(fd - an) > 1e-4 * std::max({1.0, std::abs(fd), std::abs(an)}))
      return false;
  }
  return true;
}

bool check_frontend() {
  const Eigen::MatrixXd d = dct2_matrix(40);
  const Eigen::MatrixXd eye = d * d.transpose();
  if ((eye - Eigen::MatrixXd::Identity(40, 40)).cwiseAbs().maxCoeff() > 1e-6)
    return false;
  if (std::abs(mel_from_hz(700.0) - 781.17) > 0.01) return false;

  Waveform w;
  w.samples.assign(16000, 0.0f);
  for (int i = 0; i < 16000; ++i)
    w.samples[static_cast<std::size_t>(i)] =
        0.5f * std::sin(2.0f * 3.14159265f * 1000.0f * i / 16000.0f);
  const FeatureMap fm = mfcc(w);
  if (fm.dim(2) != 40 || fm.dim(3) != 98) return false;
  return true;
}

bool check_lr_and_sgd() {
  TrainConfig cfg;
  const std::int64_t total = 1000;
  if (lr_schedule(0, total, cfg) != 0.0) return false;
  const std::int64_t warmup = 50;  // 5% of 1000
  if (std::abs(lr_schedule(warmup, total, cfg) - cfg.lr_peak) > 1e-12) return false;
  if (lr_schedule(total - 1, total, cfg) > 1e-4) return false;

  Var<float> w = Var<float>::leaf(Tensor<float>::full(Shape{1}, 1.0f), true);
  SgdOptimizer<float> opt({{"w", w, true}}, 0.9, 0.001);
  w.node()->grad_buffer()[0] = 0.0f;
  opt.step(1.0);
  return std::abs(w.value()[0] - 0.999f) < 1e-6f;
}

}  // namespace

int run_selftest() {
  struct Check {
    const char* name;
    std::function<bool()> fn;
  };
  const Check checks[] = {
      {"identity gates (p=0, eval mode)", check_identity_gates},
      {"patchdsu k=1 reduces to dsu", check_patch_reduction},
      {"patch split/merge round-trip", check_patch_roundtrip},
      {"snr mixing exactness", check_snr_exactness},
      {"expectation preservation (monte carlo)", check_expectation_identity},
      {"dsu gradient vs finite differences", check_gradients},
      {"mfcc front-end properties", check_frontend},
      {"lr schedule and sgd step", check_lr_and_sgd},
  };
  int failures = 0;
  for (const auto& c : checks) {
    bool ok = false;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "  (%s threw: %s)\n", c.name, e.what());
    }
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", c.name);
    if (!ok) ++failures;
  }
  return failures;
}

}  // namespace kws
