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

#ifndef KWS_AUTODIFF_HPP_
#define KWS_AUTODIFF_HPP_

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kws/common.hpp"
#include "kws/tensor.hpp"

namespace kws {

// Reverse-mode autodiff over dense tensors. Nodes form a DAG via shared
// parent pointers; each op installs a closure that scatters the node's
// cotangent into its parents. Ops are free functions so composite
// transforms read like array expressions. When no parent requires a
// gradient the op returns a detached node and the graph is not grown.

template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<S>& grad_buffer() {
    if (!grad_ready) {
      grad = Tensor<S>::zeros(value.shape());
      grad_ready = true;
    }
    return grad;
  }
};

template <typename S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<S> t, bool requires_grad) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var constant(Tensor<S> t) { return leaf(std::move(t), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<S>& value() const { return node_->value; }
  Tensor<S>& value() { return node_->value; }
  const Tensor<S>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad_ready; }
  bool requires_grad() const { return node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }

  std::shared_ptr<Node<S>> node() const { return node_; }

  void zero_grad() { node_->grad_ready = false; }

 private:
  std::shared_ptr<Node<S>> node_;
};

// Thread-local gradient switch; inference paths disable graph building so
// intermediates are freed as soon as the next op consumes them.
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

namespace detail {

template <typename S>
inline bool any_requires_grad(const std::vector<Var<S>>& parents) {
  for (const auto& p : parents)
    if (p.requires_grad()) return true;
  return false;
}

}  // namespace detail

// Builds an op node; `bw` receives the finished node and must accumulate
// into node.parents[i]->grad_buffer().
template <typename S>
Var<S> make_op(Tensor<S> value, std::vector<Var<S>> parents,
               std::function<void(Node<S>&)> bw) {
  if (!GradMode::enabled() || !detail::any_requires_grad(parents))
    return Var<S>::constant(std::move(value));
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->parents.reserve(parents.size());
  for (auto& p : parents) n->parents.push_back(p.node());
  n->backward_fn = std::move(bw);
  return Var<S>(std::move(n));
}

// Runs reverse-mode accumulation from `root`, seeding d(root)/d(root) = 1.
template <typename S>
void backward(const Var<S>& root) {
  if (!root.requires_grad())
    throw NumericError("backward() on a graph with no gradients");

  // Iterative post-order DFS: parents first, then the node itself.
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> visited;
  std::vector<std::pair<Node<S>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next == 0 && visited.count(node)) {
      stack.pop_back();
      continue;
    }
    if (next < node->parents.size()) {
      Node<S>* parent = node->parents[next++].get();
      if (!visited.count(parent) && parent->requires_grad)
        stack.emplace_back(parent, 0);
    } else {
      if (!visited.count(node)) {
        visited.insert(node);
        order.push_back(node);
      }
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().array().setOnes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward_fn && n->grad_ready) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops.

template <typename S>
inline void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw NumericError(std::string(op) + ": shape mismatch " +
                       shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "add");
  Tensor<S> out(a.shape(), a.value().array() + b.value().array());
  return make_op<S>(std::move(out), {a, b}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_buffer().array() += n.grad.array();
    if (n.parents[1]->requires_grad)
      n.parents[1]->grad_buffer().array() += n.grad.array();
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "sub");
  Tensor<S> out(a.shape(), a.value().array() - b.value().array());
  return make_op<S>(std::move(out), {a, b}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_buffer().array() += n.grad.array();
    if (n.parents[1]->requires_grad)
      n.parents[1]->grad_buffer().array() -= n.grad.array();
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "mul");
  Tensor<S> out(a.shape(), a.value().array() * b.value().array());
  return make_op<S>(std::move(out), {a, b}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_buffer().array() +=
          n.grad.array() * n.parents[1]->value.array();
    if (n.parents[1]->requires_grad)
      n.parents[1]->grad_buffer().array() +=
          n.grad.array() * n.parents[0]->value.array();
  });
}

template <typename S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a, b, "div");
  Tensor<S> out(a.shape(), a.value().array() / b.value().array());
  return make_op<S>(std::move(out), {a, b}, [](Node<S>& n) {
    const auto& bv = n.parents[1]->value.array();
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_buffer().array() += n.grad.array() / bv;
    if (n.parents[1]->requires_grad)
      n.parents[1]->grad_buffer().array() -=
          n.grad.array() * n.value.array() / bv;
  });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S c) {
  Tensor<S> out(a.shape(), a.value().array() + c);
  return make_op<S>(std::move(out), {a}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_buffer().array() += n.grad.array();
  });
}

template <typename S>
Var<S> mul_scalar(const Var<S>& a, S c) {
  Tensor<S> out(a.shape(), a.value().array() * c);
  return make_op<S>(std::move(out), {a}, [c](Node<S>& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->grad_buffer().array() += n.grad.array() * c;
  });
}

// sqrt with a guarded derivative: d/dx sqrt(x) at x == 0 would be infinite;
// the guard keeps 0 * inf out of degenerate-variance paths, where the
// incoming cotangent is exactly zero.
template <typename S>
Var<S> sqrt_v(const Var<S>& a) {
  Tensor<S> out(a.shape(), a.value().array().max(S(0)).sqrt());
  return make_op<S>(std::move(out), {a}, [](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    const S tiny = S(1e-20);
    n.parents[0]->grad_buffer().array() +=
        n.grad.array() * S(0.5) / n.value.array().max(tiny);
  });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  Tensor<S> out(a.shape(), a.value().array().max(S(0)));
  return make_op<S>(std::move(out), {a}, [](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    const auto& x = n.parents[0]->value.array();
    n.parents[0]->grad_buffer().array() +=
        n.grad.array() * (x > S(0)).template cast<S>();
  });
}

template <typename S>
Var<S> detach(const Var<S>& a) {
  return Var<S>::constant(a.value());
}

template <typename S> Var<S> operator+(const Var<S>& a, const Var<S>& b) { return add(a, b); }
template <typename S> Var<S> operator-(const Var<S>& a, const Var<S>& b) { return sub(a, b); }
template <typename S> Var<S> operator*(const Var<S>& a, const Var<S>& b) { return mul(a, b); }
template <typename S> Var<S> operator/(const Var<S>& a, const Var<S>& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Reductions and broadcasts between feature maps (B,C,H,W) and statistics
// tensors: (B,C) per-channel scalars and (B,C,H) per-frequency rows.

template <typename S>
Var<S> mean_hw(const Var<S>& x) {
  const auto& sh = x.shape();
  const std::int64_t B = sh[0], C = sh[1], HW = sh[2] * sh[3];
  Tensor<S> out(Shape{B, C});
  for (std::int64_t i = 0; i < B * C; ++i) {
    double acc = 0;  // 64-bit accumulation inside reductions
    const S* p = x.value().data() + i * HW;
    for (std::int64_t j = 0; j < HW; ++j) acc += static_cast<double>(p[j]);
    out[i] = static_cast<S>(acc / static_cast<double>(HW));
  }
  return make_op<S>(std::move(out), {x}, [B, C, HW](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<S>& gx = n.parents[0]->grad_buffer();
    const S inv = S(1) / static_cast<S>(HW);
    for (std::int64_t i = 0; i < B * C; ++i) {
      const S g = n.grad[i] * inv;
      S* p = gx.data() + i * HW;
      for (std::int64_t j = 0; j < HW; ++j) p[j] += g;
    }
  });
}

template <typename S>
Var<S> mean_w(const Var<S>& x) {
  const auto& sh = x.shape();
  const std::int64_t BCH = sh[0] * sh[1] * sh[2], W = sh[3];
  Tensor<S> out(Shape{sh[0], sh[1], sh[2]});
  for (std::int64_t i = 0; i < BCH; ++i) {
    double acc = 0;
    const S* p = x.value().data() + i * W;
    for (std::int64_t j = 0; j < W; ++j) acc += static_cast<double>(p[j]);
    out[i] = static_cast<S>(acc / static_cast<double>(W));
  }
  return make_op<S>(std::move(out), {x}, [BCH, W](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<S>& gx = n.parents[0]->grad_buffer();
    const S inv = S(1) / static_cast<S>(W);
    for (std::int64_t i = 0; i < BCH; ++i) {
      const S g = n.grad[i] * inv;
      S* p = gx.data() + i * W;
      for (std::int64_t j = 0; j < W; ++j) p[j] += g;
    }
  });
}

template <typename S>
Var<S> expand_bc(const Var<S>& s, std::int64_t H, std::int64_t W) {
  const auto& sh = s.shape();
  const std::int64_t B = sh[0], C = sh[1], HW = H * W;
  Tensor<S> out(Shape{B, C, H, W});
  for (std::int64_t i = 0; i < B * C; ++i) {
    S* p = out.data() + i * HW;
    const S v = s.value()[i];
    for (std::int64_t j = 0; j < HW; ++j) p[j] = v;
  }
  return make_op<S>(std::move(out), {s}, [B, C, HW](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<S>& gs = n.parents[0]->grad_buffer();
    for (std::int64_t i = 0; i < B * C; ++i) {
      double acc = 0;
      const S* p = n.grad.data() + i * HW;
      for (std::int64_t j = 0; j < HW; ++j) acc += static_cast<double>(p[j]);
      gs[i] += static_cast<S>(acc);
    }
  });
}

template <typename S>
Var<S> expand_bch(const Var<S>& s, std::int64_t W) {
  const auto& sh = s.shape();
  const std::int64_t BCH = sh[0] * sh[1] * sh[2];
  Tensor<S> out(Shape{sh[0], sh[1], sh[2], W});
  for (std::int64_t i = 0; i < BCH; ++i) {
    S* p = out.data() + i * W;
    const S v = s.value()[i];
    for (std::int64_t j = 0; j < W; ++j) p[j] = v;
  }
  return make_op<S>(std::move(out), {s}, [BCH, W](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<S>& gs = n.parents[0]->grad_buffer();
    for (std::int64_t i = 0; i < BCH; ++i) {
      double acc = 0;
      const S* p = n.grad.data() + i * W;
      for (std::int64_t j = 0; j < W; ++j) acc += static_cast<double>(p[j]);
      gs[i] += static_cast<S>(acc);
    }
  });
}

// Mean over the leading (batch) axis; result drops dim 0.
template <typename S>
Var<S> reduce_mean_batch(const Var<S>& v) {
  const auto& sh = v.shape();
  const std::int64_t B = sh[0];
  const std::int64_t rest = v.value().numel() / B;
  Shape out_shape(sh.begin() + 1, sh.end());
  Tensor<S> out(out_shape);
  for (std::int64_t j = 0; j < rest; ++j) {
    double acc = 0;
    for (std::int64_t b = 0; b < B; ++b)
      acc += static_cast<double>(v.value()[b * rest + j]);
    out[j] = static_cast<S>(acc / static_cast<double>(B));
  }
  return make_op<S>(std::move(out), {v}, [B, rest](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<S>& gv = n.parents[0]->grad_buffer();
    const S inv = S(1) / static_cast<S>(B);
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t j = 0; j < rest; ++j) gv[b * rest + j] += n.grad[j] * inv;
  });
}

// Broadcast along a new leading (batch) axis.
template <typename S>
Var<S> expand_batch(const Var<S>& v, std::int64_t B) {
  const std::int64_t rest = v.value().numel();
  Shape out_shape;
  out_shape.push_back(B);
  for (auto d : v.shape()) out_shape.push_back(d);
  Tensor<S> out(out_shape);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t j = 0; j < rest; ++j) out[b * rest + j] = v.value()[j];
  return make_op<S>(std::move(out), {v}, [B, rest](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<S>& gv = n.parents[0]->grad_buffer();
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t j = 0; j < rest; ++j) gv[j] += n.grad[b * rest + j];
  });
}

// out[b] = v[perm[b]] along dim 0.
template <typename S>
Var<S> permute_batch(const Var<S>& v, std::vector<std::int64_t> perm) {
  const auto& sh = v.shape();
  const auto B = sh[0];
  if (static_cast<std::int64_t>(perm.size()) != B)
    throw NumericError("permute_batch: permutation size mismatch");
  const std::int64_t rest = v.value().numel() / B;
  Tensor<S> out(sh);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t j = 0; j < rest; ++j)
      out[b * rest + j] = v.value()[perm[static_cast<std::size_t>(b)] * rest + j];
  return make_op<S>(std::move(out), {v}, [perm, B, rest](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<S>& gv = n.parents[0]->grad_buffer();
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t j = 0; j < rest; ++j)
        gv[perm[static_cast<std::size_t>(b)] * rest + j] += n.grad[b * rest + j];
  });
}

// Per-example selection along dim 0: out[b] = mask[b] ? a[b] : b[b].
// Unselected rows pass through bitwise.
template <typename S>
Var<S> select_rows(const std::vector<std::uint8_t>& mask, const Var<S>& a,
                   const Var<S>& b) {
  check_same_shape(a, b, "select_rows");
  const auto& sh = a.shape();
  const std::int64_t B = sh[0];
  if (static_cast<std::int64_t>(mask.size()) != B)
    throw NumericError("select_rows: mask size mismatch");
  const std::int64_t rest = a.value().numel() / B;
  Tensor<S> out(sh);
  for (std::int64_t i = 0; i < B; ++i) {
    const auto bi = static_cast<std::size_t>(i);
    const S* src = (mask[bi] ? a.value().data() : b.value().data()) + i * rest;
    std::copy(src, src + rest, out.data() + i * rest);
  }
  return make_op<S>(std::move(out), {a, b}, [mask, B, rest](Node<S>& n) {
    for (std::int64_t i = 0; i < B; ++i) {
      Node<S>* dst = n.parents[mask[static_cast<std::size_t>(i)] ? 0 : 1].get();
      if (!dst->requires_grad) continue;
      S* g = dst->grad_buffer().data() + i * rest;
      const S* src = n.grad.data() + i * rest;
      for (std::int64_t j = 0; j < rest; ++j) g[j] += src[j];
    }
  });
}

// ---------------------------------------------------------------------------
// Network ops.

namespace detail {

// im2col for a (C,H,W) example: rows are (c, ki, kj) taps, columns are
// output positions; same padding, stride 1.
template <typename S>
void fill_im2col(const S* x, std::int64_t C, std::int64_t H, std::int64_t W,
                 int k, int dilation,
                 Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& cols) {
  const int pad = dilation * (k - 1) / 2;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < C; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj, ++row) {
        S* dst = cols.data() + row * (H * W);
        const std::int64_t dh = static_cast<std::int64_t>(ki) * dilation - pad;
        const std::int64_t dw = static_cast<std::int64_t>(kj) * dilation - pad;
        for (std::int64_t h = 0; h < H; ++h) {
          const std::int64_t hi = h + dh;
          if (hi < 0 || hi >= H) {
            for (std::int64_t w = 0; w < W; ++w) dst[h * W + w] = S(0);
            continue;
          }
          const S* src = x + (c * H + hi) * W;
          for (std::int64_t w = 0; w < W; ++w) {
            const std::int64_t wi = w + dw;
            dst[h * W + w] = (wi >= 0 && wi < W) ? src[wi] : S(0);
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D cross-correlation with square odd kernel, stride 1, same padding
// (pad = dilation * (k-1)/2), no bias. x: (B,Ci,H,W), w: (Co,Ci,k,k).
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, int dilation = 1) {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0)
    throw NumericError("conv2d: expects (B,Ci,H,W) and (Co,Ci,k,k) with odd k");
  if (xs[1] != ws[1])
    throw NumericError("conv2d: channel mismatch " + shape_str(xs) + " vs " +
                       shape_str(ws));
  const std::int64_t B = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
  const std::int64_t Co = ws[0];
  const int k = static_cast<int>(ws[2]);
  const std::int64_t taps = Ci * k * k, HW = H * W;

  Eigen::Map<const Mat> wmat(w.value().data(), Co, taps);
  Tensor<S> out(Shape{B, Co, H, W});
  {
    Mat cols(taps, HW);
    for (std::int64_t b = 0; b < B; ++b) {
      detail::fill_im2col(x.value().data() + b * Ci * HW, Ci, H, W, k, dilation, cols);
      Eigen::Map<Mat> y(out.data() + b * Co * HW, Co, HW);
      y.noalias() = wmat * cols;
    }
  }

  return make_op<S>(std::move(out), {x, w},
                    [B, Ci, Co, H, W, k, dilation, taps, HW](Node<S>& n) {
    Node<S>* xn = n.parents[0].get();
    Node<S>* wn = n.parents[1].get();
    Eigen::Map<const Mat> wmat(wn->value.data(), Co, taps);
    const int pad = dilation * (k - 1) / 2;
    Mat cols(taps, HW);
    Mat dcols(taps, HW);
    for (std::int64_t b = 0; b < B; ++b) {
      Eigen::Map<const Mat> gy(n.grad.data() + b * Co * HW, Co, HW);
      if (wn->requires_grad) {
        detail::fill_im2col(xn->value.data() + b * Ci * HW, Ci, H, W, k,
                            dilation, cols);
        Eigen::Map<Mat> gw(wn->grad_buffer().data(), Co, taps);
        gw.noalias() += gy * cols.transpose();
      }
      if (xn->requires_grad) {
        dcols.noalias() = wmat.transpose() * gy;
        // col2im scatter-add.
        S* gx = xn->grad_buffer().data() + b * Ci * HW;
        std::int64_t row = 0;
        for (std::int64_t c = 0; c < Ci; ++c) {
          for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj, ++row) {
              const S* src = dcols.data() + row * HW;
              const std::int64_t dh = static_cast<std::int64_t>(ki) * dilation - pad;
              const std::int64_t dw = static_cast<std::int64_t>(kj) * dilation - pad;
              for (std::int64_t h = 0; h < H; ++h) {
                const std::int64_t hi = h + dh;
                if (hi < 0 || hi >= H) continue;
                S* dst = gx + (c * H + hi) * W;
                for (std::int64_t w2 = 0; w2 < W; ++w2) {
                  const std::int64_t wi = w2 + dw;
                  if (wi >= 0 && wi < W) dst[wi] += src[h * W + w2];
                }
              }
            }
          }
        }
      }
    }
  });
}

// Fully connected layer: x (B,F), w (O,F), bias (O) -> (B,O).
template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& bias) {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::int64_t B = x.shape()[0], F = x.shape()[1];
  const std::int64_t O = w.shape()[0];
  if (w.shape()[1] != F || bias.value().numel() != O)
    throw NumericError("linear: shape mismatch");
  Tensor<S> out(Shape{B, O});
  Eigen::Map<const Mat> xm(x.value().data(), B, F);
  Eigen::Map<const Mat> wm(w.value().data(), O, F);
  Eigen::Map<Mat> ym(out.data(), B, O);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(
      bias.value().data(), O);
  return make_op<S>(std::move(out), {x, w, bias}, [B, F, O](Node<S>& n) {
    Node<S>* xn = n.parents[0].get();
    Node<S>* wn = n.parents[1].get();
    Node<S>* bn = n.parents[2].get();
    Eigen::Map<const Mat> gy(n.grad.data(), B, O);
    if (xn->requires_grad) {
      Eigen::Map<const Mat> wm(wn->value.data(), O, F);
      Eigen::Map<Mat> gx(xn->grad_buffer().data(), B, F);
      gx.noalias() += gy * wm;
    }
    if (wn->requires_grad) {
      Eigen::Map<const Mat> xm(xn->value.data(), B, F);
      Eigen::Map<Mat> gw(wn->grad_buffer().data(), O, F);
      gw.noalias() += gy.transpose() * xm;
    }
    if (bn->requires_grad) {
      Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gb(
          bn->grad_buffer().data(), O);
      gb += gy.colwise().sum();
    }
  });
}

// Mean of -log softmax(logits)[label] over the batch; max-stabilized.
template <typename S>
Var<S> cross_entropy(const Var<S>& logits, const std::vector<std::int64_t>& labels) {
  const std::int64_t B = logits.shape()[0], N = logits.shape()[1];
  if (static_cast<std::int64_t>(labels.size()) != B)
    throw NumericError("cross_entropy: label count mismatch");
  Tensor<S> probs(Shape{B, N});
  double loss = 0;
  for (std::int64_t b = 0; b < B; ++b) {
    const S* row = logits.value().data() + b * N;
    S mx = row[0];
    for (std::int64_t j = 1; j < N; ++j) mx = std::max(mx, row[j]);
    double denom = 0;
    for (std::int64_t j = 0; j < N; ++j)
      denom += std::exp(static_cast<double>(row[j] - mx));
    const double log_denom = std::log(denom);
    for (std::int64_t j = 0; j < N; ++j)
      probs[b * N + j] = static_cast<S>(
          std::exp(static_cast<double>(row[j] - mx) - log_denom));
    const std::int64_t y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= N) throw NumericError("cross_entropy: label out of range");
    loss -= static_cast<double>(row[y] - mx) - log_denom;
  }
  Tensor<S> out(Shape{1});
  out[0] = static_cast<S>(loss / static_cast<double>(B));
  return make_op<S>(std::move(out), {logits}, [B, N, labels, probs](Node<S>& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor<S>& gx = n.parents[0]->grad_buffer();
    const S scale = n.grad[0] / static_cast<S>(B);
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t j = 0; j < N; ++j)
        gx[b * N + j] += scale * probs[b * N + j];
      gx[b * N + labels[static_cast<std::size_t>(b)]] -= scale;
    }
  });
}

}  // namespace kws

#endif  // KWS_AUTODIFF_HPP_
