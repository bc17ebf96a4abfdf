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

#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "kws/nn.hpp"

using namespace kws;
using gradcheck::random_tensor;

namespace {

template <typename S>
Tensor<S> random_map(Shape shape, Rng& rng) {
  Tensor<S> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<S>(rng.normal());
  return t;
}

}  // namespace

TEST_CASE("batchnorm statistics and gradients") {
  Rng rng(1);

  SUBCASE("training output is zero-mean unit-variance per channel pre-affine") {
    BatchNorm2d<double> bn(3);
    const auto x = random_map<double>({4, 3, 5, 6}, rng);
    const auto y = bn.forward(Var<double>::constant(x), true).value();
    for (std::int64_t c = 0; c < 3; ++c) {
      double sum = 0, sum_sq = 0;
      for (std::int64_t b = 0; b < 4; ++b)
        for (std::int64_t h = 0; h < 5; ++h)
          for (std::int64_t w = 0; w < 6; ++w) {
            sum += y.at4(b, c, h, w);
            sum_sq += y.at4(b, c, h, w) * y.at4(b, c, h, w);
          }
      const double n = 4 * 5 * 6;
      CHECK(std::abs(sum / n) < 1e-5);
      CHECK(sum_sq / n == doctest::Approx(1.0).epsilon(1e-4));
    }
  }

  SUBCASE("eval with unit running stats and identity affine is the identity") {
    BatchNorm2d<double> bn(2);
    const auto x = random_map<double>({2, 2, 3, 3}, rng);
    const auto y = bn.forward(Var<double>::constant(x), false).value();
    for (std::int64_t i = 0; i < x.numel(); ++i)
      CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-5));
  }

  SUBCASE("running statistics update with momentum 0.1") {
    BatchNorm2d<double> bn(1);
    Tensor<double> x(Shape{1, 1, 1, 2});
    x[0] = 1.0;
    x[1] = 3.0;  // mean 2, biased var 1
    bn.forward(Var<double>::constant(x), true);
    CHECK(bn.running_mean()[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
    CHECK(bn.running_var()[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
  }

  SUBCASE("input gradient vs finite differences, training mode") {
    const auto x0 = random_tensor({3, 2, 4, 4}, rng);
    auto make_bn = []() {
      BatchNorm2d<double> bn(2);
      // Non-trivial affine so the gradient exercises gamma scaling.
      bn.gamma().value()[0] = 1.3;
      bn.gamma().value()[1] = 0.7;
      bn.beta().value()[0] = 0.2;
      bn.beta().value()[1] = -0.4;
      return bn;
    };
    auto fwd = [&](const Var<double>& v) {
      BatchNorm2d<double> bn = make_bn();
      return bn.forward(v, true);
    };
    auto val = [&](const Tensor<double>& t) {
      BatchNorm2d<double> bn = make_bn();
      return bn.forward(Var<double>::constant(t), true).value();
    };
    CHECK(gradcheck::check_input_grad(fwd, val, x0, rng).max_rel_err < 1e-5);
  }

  SUBCASE("affine parameter gradients vs finite differences") {
    const auto x = random_map<double>({2, 2, 3, 3}, rng);
    Tensor<double> cot(x.shape());
    for (std::int64_t i = 0; i < cot.numel(); ++i) cot[i] = rng.normal();

    BatchNorm2d<double> bn(2);
    Var<double> out = bn.forward(Var<double>::constant(x), true);
    Var<double> loss = make_op<double>(
        Tensor<double>(Shape{1}), {out}, [&cot](Node<double>& n) {
          n.parents[0]->grad_buffer().array() += cot.array() * n.grad[0];
        });
    backward(loss);

    const double h = 1e-6;
    for (std::int64_t c = 0; c < 2; ++c) {
      auto probe_gamma = [&](double delta) {
        BatchNorm2d<double> bn2(2);
        bn2.gamma().value()[c] += delta;
        const auto y = bn2.forward(Var<double>::constant(x), true).value();
        double acc = 0;
        for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * cot[i];
        return acc;
      };
      const double fd = (probe_gamma(h) - probe_gamma(-h)) / (2 * h);
      CHECK(bn.gamma().grad()[c] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("model spec arithmetic") {
  ModelSpec spec;
  CHECK(spec.n_convs() == 13);
  CHECK(spec.dilation(0) == 1);
  CHECK(spec.dilation(1) == 1);
  CHECK(spec.dilation(3) == 1);
  CHECK(spec.dilation(4) == 2);
  CHECK(spec.dilation(7) == 4);
  CHECK(spec.dilation(10) == 8);
  CHECK(spec.dilation(12) == 8);

  // Frozen from the default architecture walk: one 1->45 stem conv, twelve
  // 45->45 convs, 13 batchnorm affine pairs, and the 45->12 classifier.
  CHECK(spec.param_count() == 220827);
}

TEST_CASE("res15 forward") {
  ModelSpec spec;
  spec.channels = 6;
  spec.n_classes = 12;
  Res15<float> model(spec, Rng(7));

  SUBCASE("logit shape and eval determinism") {
    Rng rng(2);
    const auto x = random_map<float>({1, 1, 40, 98}, rng);
    const auto a = model.logits_eval(x);
    CHECK(a.shape() == Shape{1, 12});
    const auto b = model.logits_eval(x);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  }

  SUBCASE("parameter count matches the analytic walk") {
    CHECK(model.param_count() == spec.param_count());
    ModelSpec full;
    Res15<float> ref(full, Rng(8));
    CHECK(ref.param_count() == 220827);
  }

  SUBCASE("checkpoint walk order is stable") {
    const auto params = model.params();
    CHECK(params.front().name == "conv0.weight");
    CHECK(params[13].name == "bn0.gamma");
    CHECK(params.back().name == "fc.bias");
    // Batch-norm affine parameters are excluded from weight decay.
    for (const auto& p : params) {
      if (p.name.rfind("bn", 0) == 0)
        CHECK_FALSE(p.weight_decay);
      else
        CHECK(p.weight_decay);
    }
  }
}

TEST_CASE("residual block with zero second conv is an exact pass-through") {
  ModelSpec spec;
  spec.channels = 5;
  spec.n_blocks = 1;
  spec.n_classes = 3;
  Res15<float> model(spec, Rng(11));
  // Zero only the second convolution: its output is all zeros, relu keeps
  // zeros, and training-mode batchnorm of a zero map is beta = 0, so the
  // residual branch vanishes exactly and the block passes the stem through.
  model.conv_weight(2).value().array().setZero();

  Rng rng(12);
  const auto x = random_map<float>({2, 1, 6, 8}, rng);

  // Stem-only reference through the same layer objects.
  const Var<float> xc = Var<float>::constant(x);
  Var<float> stem = model.bn(0).forward(
      relu(conv2d(xc, model.conv_weight(0), spec.dilation(0))), true);
  Var<float> blocked = model.bn(2).forward(
      relu(conv2d(
          model.bn(1).forward(
              relu(conv2d(stem, model.conv_weight(1), spec.dilation(1))), true),
          model.conv_weight(2), spec.dilation(2))),
      true);
  // Block output = blocked + stem must equal stem exactly.
  for (std::int64_t i = 0; i < stem.value().numel(); ++i)
    CHECK(blocked.value()[i] == 0.0f);
}

TEST_CASE("uncertainty hooks") {
  ModelSpec spec;
  spec.channels = 4;
  spec.n_classes = 3;
  Res15<float> model(spec, Rng(13));
  Rng rng(14);
  const auto x = random_map<float>({2, 1, 8, 10}, rng);

  SUBCASE("method none equals the plain forward bitwise") {
    UncertaintyConfig none;
    Rng aug(15);
    const auto a =
        model.forward(Var<float>::constant(x), true, none, &aug).value();
    const auto b = model.forward(Var<float>::constant(x), true).value();
    // Training BN mutates running stats between calls but the outputs of
    // the two calls must match bitwise given identical inputs and weights.
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  }

  SUBCASE("p = 0 equals the plain forward bitwise") {
    UncertaintyConfig cfg;
    cfg.method = UncertaintyMethod::kDSU;
    cfg.p = 0.0;
    Rng aug(16);
    const auto a = model.forward(Var<float>::constant(x), true, cfg, &aug).value();
    const auto b = model.forward(Var<float>::constant(x), true).value();
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  }

  SUBCASE("eval mode ignores the hooks") {
    UncertaintyConfig cfg;
    cfg.method = UncertaintyMethod::kPatchDSU;
    cfg.p = 1.0;
    Rng aug(17);
    const auto a = model.forward(Var<float>::constant(x), false, cfg, &aug).value();
    const auto b = model.logits_eval(x);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("end-to-end gradient with active hooks on a small net") {
  // Two blocks (5 convolutions, 5 hooks); the full 13-layer check runs in
  // the acceptance suite.
  ModelSpec spec;
  spec.channels = 3;
  spec.n_blocks = 2;
  spec.n_classes = 3;

  UncertaintyConfig cfg;
  cfg.method = UncertaintyMethod::kDSU;
  cfg.p = 1.0;
  cfg.grad_through_variance = true;

  Rng rng(18);
  const auto x0 = random_tensor({2, 1, 6, 8}, rng);
  const std::vector<std::int64_t> labels = {0, 2};

  auto run = [&](const Var<double>& v) {
    Res15<double> model(spec, Rng(19));
    Rng aug(20);
    return cross_entropy(model.forward(v, true, cfg, &aug), labels);
  };
  auto fwd = [&](const Var<double>& v) { return run(v); };
  auto val = [&](const Tensor<double>& t) {
    return run(Var<double>::constant(t)).value();
  };
  const auto rep = gradcheck::check_input_grad(fwd, val, x0, rng, 1e-5);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("checkpoint round-trip preserves behavior and metadata") {
  const std::string dir = fixtures::fresh_dir("ckpt");
  ModelSpec spec;
  spec.channels = 5;
  spec.n_classes = 4;
  Res15<float> model(spec, Rng(21));

  // Perturb running stats so state blocks are exercised.
  Rng rng(22);
  const auto x = random_map<float>({3, 1, 10, 12}, rng);
  model.forward(Var<float>::constant(x), true);

  nlohmann::json meta;
  meta["epoch"] = 7;
  meta["class_labels"] = {"a", "b", "c", "d"};
  save_checkpoint(dir + "/m.ckpt", model, meta);

  nlohmann::json meta2;
  Res15<float> loaded = load_checkpoint<float>(dir + "/m.ckpt", &meta2);
  CHECK(meta2["epoch"] == 7);
  CHECK(loaded.spec().channels == 5);

  const auto probe = random_map<float>({2, 1, 10, 12}, rng);
  const auto a = model.logits_eval(probe);
  const auto b = loaded.logits_eval(probe);
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

  // Same-config reconstruction from a fresh seed differs (sanity check
  // that loading actually restored weights rather than re-initializing).
  Res15<float> fresh(spec, Rng(999));
  const auto c = fresh.logits_eval(probe);
  bool all_equal = true;
  for (std::int64_t i = 0; i < a.numel(); ++i) all_equal &= (a[i] == c[i]);
  CHECK_FALSE(all_equal);
}
