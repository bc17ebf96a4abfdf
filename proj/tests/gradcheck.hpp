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

#ifndef KWS_TESTS_GRADCHECK_HPP_
#define KWS_TESTS_GRADCHECK_HPP_

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kws/autodiff.hpp"
#include "kws/rng.hpp"

namespace kws::gradcheck {

// <G, f(x)> for a fixed random cotangent G turns any tensor-valued op into
// a scalar for central differencing.
template <typename Fn>
double probe(Fn&& fn, const Tensor<double>& x, const Tensor<double>& cotangent) {
  const Tensor<double> y = fn(x);
  double acc = 0;
  for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * cotangent[i];
  return acc;
}

struct Report {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::int64_t checked = 0;
};

// Compares d<G, f(x)>/dx against central differences. `forward` must build
// the graph from the given leaf; `value_fn` must evaluate the same function
// on a plain tensor (no graph). Coordinates are subsampled via `stride`.
inline Report check_input_grad(
    const std::function<Var<double>(const Var<double>&)>& forward,
    const std::function<Tensor<double>(const Tensor<double>&)>& value_fn,
    const Tensor<double>& x0, Rng& rng, double h = 1e-5, std::int64_t stride = 1) {
  const Tensor<double> y0 = value_fn(x0);
  Tensor<double> cot(y0.shape());
  for (std::int64_t i = 0; i < cot.numel(); ++i) cot[i] = rng.normal();

  Var<double> leaf = Var<double>::leaf(x0, true);
  Var<double> out = forward(leaf);
  Var<double> loss = make_op<double>(
      Tensor<double>(Shape{1}), {out}, [cot](Node<double>& n) {
        n.parents[0]->grad_buffer().array() += cot.array() * n.grad[0];
      });
  backward(loss);

  Report rep;
  for (std::int64_t i = 0; i < x0.numel(); i += stride) {
    Tensor<double> xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const double fd =
        (probe(value_fn, xp, cot) - probe(value_fn, xm, cot)) / (2 * h);
    const double an = leaf.grad()[i];
    const double abs_err = std::abs(fd - an);
    rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
    rep.max_rel_err = std::max(
        rep.max_rel_err, abs_err / std::max({1e-8, std::abs(fd), std::abs(an)}));
    ++rep.checked;
  }
  return rep;
}

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

}  // namespace kws::gradcheck

#endif  // KWS_TESTS_GRADCHECK_HPP_
