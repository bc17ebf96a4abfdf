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

#ifndef KWS_NN_HPP_
#define KWS_NN_HPP_

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kws/autodiff.hpp"
#include "kws/rng.hpp"
#include "kws/uncertainty.hpp"

namespace kws {

// Batch normalization over (B, H, W) per channel with learnable affine
// scale/shift and running statistics (momentum 0.1, biased variance).
template <typename S>
class BatchNorm2d {
 public:
  explicit BatchNorm2d(std::int64_t channels, S eps = S(1e-5), S momentum = S(0.1))
      : channels_(channels),
        eps_(eps),
        momentum_(momentum),
        gamma_(Var<S>::leaf(Tensor<S>::full(Shape{channels}, S(1)), true)),
        beta_(Var<S>::leaf(Tensor<S>::zeros(Shape{channels}), true)),
        running_mean_(Tensor<S>::zeros(Shape{channels})),
        running_var_(Tensor<S>::full(Shape{channels}, S(1))) {}

  Var<S> forward(const Var<S>& x, bool training) {
    const auto& sh = x.shape();
    const std::int64_t B = sh[0], C = sh[1], HW = sh[2] * sh[3];
    if (C != channels_) throw NumericError("batchnorm: channel mismatch");
    const std::int64_t m = B * HW;

    Tensor<S> mean(Shape{C}), inv_std(Shape{C});
    if (training) {
      for (std::int64_t c = 0; c < C; ++c) {
        double acc = 0;
        for (std::int64_t b = 0; b < B; ++b) {
          const S* p = x.value().data() + (b * C + c) * HW;
          for (std::int64_t j = 0; j < HW; ++j) acc += static_cast<double>(p[j]);
        }
        const double mu = acc / static_cast<double>(m);
        double var = 0;
        for (std::int64_t b = 0; b < B; ++b) {
          const S* p = x.value().data() + (b * C + c) * HW;
          for (std::int64_t j = 0; j < HW; ++j) {
            const double d = static_cast<double>(p[j]) - mu;
            var += d * d;
          }
        }
        var /= static_cast<double>(m);
        mean[c] = static_cast<S>(mu);
        inv_std[c] = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
        running_mean_[c] = (S(1) - momentum_) * running_mean_[c] +
                           momentum_ * static_cast<S>(mu);
        running_var_[c] =
            (S(1) - momentum_) * running_var_[c] + momentum_ * static_cast<S>(var);
      }
    } else {
      for (std::int64_t c = 0; c < C; ++c) {
        mean[c] = running_mean_[c];
        inv_std[c] = S(1) / std::sqrt(running_var_[c] + eps_);
      }
    }

    Tensor<S> xhat(sh);
    Tensor<S> out(sh);
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t c = 0; c < C; ++c) {
        const S* p = x.value().data() + (b * C + c) * HW;
        S* ph = xhat.data() + (b * C + c) * HW;
        S* po = out.data() + (b * C + c) * HW;
        const S mu = mean[c], is = inv_std[c];
        const S g = gamma_.value()[c], be = beta_.value()[c];
        for (std::int64_t j = 0; j < HW; ++j) {
          ph[j] = (p[j] - mu) * is;
          po[j] = g * ph[j] + be;
        }
      }
    }

    return make_op<S>(
        std::move(out), {x, gamma_, beta_},
        [xhat, inv_std, B, C, HW, m, training](Node<S>& n) {
          Node<S>* xn = n.parents[0].get();
          Node<S>* gn = n.parents[1].get();
          Node<S>* bn = n.parents[2].get();
          for (std::int64_t c = 0; c < C; ++c) {
            double sum_g = 0, sum_gx = 0;
            for (std::int64_t b = 0; b < B; ++b) {
              const S* gy = n.grad.data() + (b * C + c) * HW;
              const S* xh = xhat.data() + (b * C + c) * HW;
              for (std::int64_t j = 0; j < HW; ++j) {
                sum_g += static_cast<double>(gy[j]);
                sum_gx += static_cast<double>(gy[j]) * static_cast<double>(xh[j]);
              }
            }
            if (gn->requires_grad) gn->grad_buffer()[c] += static_cast<S>(sum_gx);
            if (bn->requires_grad) bn->grad_buffer()[c] += static_cast<S>(sum_g);
            if (!xn->requires_grad) continue;
            const S gamma_c = gn->value[c];
            const S scale = gamma_c * inv_std[c];
            if (training) {
              const S mean_g = static_cast<S>(sum_g / static_cast<double>(m));
              const S mean_gx = static_cast<S>(sum_gx / static_cast<double>(m));
              for (std::int64_t b = 0; b < B; ++b) {
                const S* gy = n.grad.data() + (b * C + c) * HW;
                const S* xh = xhat.data() + (b * C + c) * HW;
                S* gx = xn->grad_buffer().data() + (b * C + c) * HW;
                for (std::int64_t j = 0; j < HW; ++j)
                  gx[j] += scale * (gy[j] - mean_g - xh[j] * mean_gx);
              }
            } else {
              for (std::int64_t b = 0; b < B; ++b) {
                const S* gy = n.grad.data() + (b * C + c) * HW;
                S* gx = xn->grad_buffer().data() + (b * C + c) * HW;
                for (std::int64_t j = 0; j < HW; ++j) gx[j] += scale * gy[j];
              }
            }
          }
        });
  }

  Var<S>& gamma() { return gamma_; }
  Var<S>& beta() { return beta_; }
  Tensor<S>& running_mean() { return running_mean_; }
  Tensor<S>& running_var() { return running_var_; }
  const Tensor<S>& running_mean() const { return running_mean_; }
  const Tensor<S>& running_var() const { return running_var_; }

 private:
  std::int64_t channels_;
  S eps_, momentum_;
  Var<S> gamma_, beta_;
  Tensor<S> running_mean_, running_var_;
};

// ---------------------------------------------------------------------------

// Dilated residual CNN: a stem convolution, n_blocks residual blocks of two
// convolutions each, global average pooling, and a linear classifier. Every
// convolution is 3x3 same-padded and bias-free, followed by ReLU then batch
// norm. Block convolutions dilate as 2^(i/3) over their sequence index.
// The default configuration (6 blocks, 45 channels) is the 13-layer
// residual keyword-spotting network of Tang et al.
struct ModelSpec {
  std::int64_t channels = 45;
  std::int64_t n_blocks = 6;
  int kernel = 3;
  std::int64_t in_channels = 1;
  std::int64_t n_classes = 12;

  std::int64_t n_convs() const { return 1 + 2 * n_blocks; }

  // conv 0 is the stem (dilation 1); block convs follow the exponential
  // schedule 2^floor(i/3) over i = conv_index - 1.
  int dilation(std::int64_t conv_index) const {
    if (conv_index == 0) return 1;
    return 1 << ((conv_index - 1) / 3);
  }

  std::int64_t param_count() const {
    const std::int64_t k2 = static_cast<std::int64_t>(kernel) * kernel;
    std::int64_t n = in_channels * channels * k2;          // stem
    n += 2 * n_blocks * channels * channels * k2;          // block convs
    n += n_convs() * 2 * channels;                         // bn affine
    n += channels * n_classes + n_classes;                 // classifier
    return n;
  }

  void validate() const {
    if (channels < 1 || n_blocks < 1 || n_classes < 2 || in_channels < 1)
      throw ConfigError("invalid model spec");
    if (kernel % 2 == 0) throw ConfigError("model kernel must be odd");
  }

  nlohmann::json to_json() const {
    return {{"channels", channels}, {"n_blocks", n_blocks}, {"kernel", kernel},
            {"in_channels", in_channels}, {"n_classes", n_classes}};
  }
  static ModelSpec from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.channels = j.at("channels").get<std::int64_t>();
    s.n_blocks = j.at("n_blocks").get<std::int64_t>();
    s.kernel = j.at("kernel").get<int>();
    s.in_channels = j.at("in_channels").get<std::int64_t>();
    s.n_classes = j.at("n_classes").get<std::int64_t>();
    s.validate();
    return s;
  }
};

template <typename S>
struct ParamRef {
  std::string name;
  Var<S> var;
  bool weight_decay = true;  // batch-norm affine terms are excluded
};

template <typename S>
class Res15 {
 public:
  Res15(const ModelSpec& spec, Rng init_rng) : spec_(spec) {
    spec_.validate();
    const int k = spec_.kernel;
    for (std::int64_t i = 0; i < spec_.n_convs(); ++i) {
      const std::int64_t ci = (i == 0) ? spec_.in_channels : spec_.channels;
      Tensor<S> w(Shape{spec_.channels, ci, k, k});
      // Kaiming-uniform for ReLU: bound = sqrt(6 / fan_in).
      const double bound = std::sqrt(6.0 / static_cast<double>(ci * k * k));
      for (std::int64_t j = 0; j < w.numel(); ++j)
        w[j] = static_cast<S>(init_rng.uniform(-bound, bound));
      conv_w_.push_back(Var<S>::leaf(std::move(w), true));
      bns_.emplace_back(spec_.channels);
    }
    {
      Tensor<S> w(Shape{spec_.n_classes, spec_.channels});
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.channels));
      for (std::int64_t j = 0; j < w.numel(); ++j)
        w[j] = static_cast<S>(init_rng.uniform(-bound, bound));
      fc_w_ = Var<S>::leaf(std::move(w), true);
      fc_b_ = Var<S>::leaf(Tensor<S>::zeros(Shape{spec_.n_classes}), true);
    }
  }

  const ModelSpec& spec() const { return spec_; }

  // Forward pass with the configured uncertainty transform applied to the
  // input of every convolution (training mode only; eval is always plain).
  // `aug_rng` may be null when cfg.method == None or training == false.
  Var<S> forward(const Var<S>& x, bool training, const UncertaintyConfig& cfg,
                 Rng* aug_rng) {
    auto hook = [&](const Var<S>& v) -> Var<S> {
      if (!training || cfg.method == UncertaintyMethod::kNone) return v;
      if (aug_rng == nullptr)
        throw NumericError("uncertainty transform requires an rng in training");
      return apply_uncertainty(v, cfg, *aug_rng, training);
    };

    Var<S> h = bns_[0].forward(relu(conv2d(hook(x), conv_w_[0], spec_.dilation(0))),
                               training);
    for (std::int64_t blk = 0; blk < spec_.n_blocks; ++blk) {
      Var<S> skip = h;
      for (int j = 0; j < 2; ++j) {
        const std::int64_t ci = 1 + blk * 2 + j;
        h = bns_[static_cast<std::size_t>(ci)].forward(
            relu(conv2d(hook(h), conv_w_[static_cast<std::size_t>(ci)],
                        spec_.dilation(ci))),
            training);
      }
      h = add(h, skip);
    }
    return linear(mean_hw(h), fc_w_, fc_b_);
  }

  // Plain forward (no augmentation hooks).
  Var<S> forward(const Var<S>& x, bool training) {
    UncertaintyConfig none;
    return forward(x, training, none, nullptr);
  }

  // Eval-mode logits for a plain input tensor; no graph is built.
  Tensor<S> logits_eval(const Tensor<S>& x) {
    NoGradGuard no_grad;
    return forward(Var<S>::constant(x), /*training=*/false).value();
  }

  // Trainable parameters in checkpoint walk order.
  std::vector<ParamRef<S>> params() {
    std::vector<ParamRef<S>> out;
    for (std::size_t i = 0; i < conv_w_.size(); ++i)
      out.push_back({"conv" + std::to_string(i) + ".weight", conv_w_[i], true});
    for (std::size_t i = 0; i < bns_.size(); ++i) {
      out.push_back({"bn" + std::to_string(i) + ".gamma", bns_[i].gamma(), false});
      out.push_back({"bn" + std::to_string(i) + ".beta", bns_[i].beta(), false});
    }
    out.push_back({"fc.weight", fc_w_, true});
    out.push_back({"fc.bias", fc_b_, true});
    return out;
  }

  // Non-trainable state (running statistics), in walk order.
  std::vector<std::pair<std::string, Tensor<S>*>> state() {
    std::vector<std::pair<std::string, Tensor<S>*>> out;
    for (std::size_t i = 0; i < bns_.size(); ++i) {
      out.push_back({"bn" + std::to_string(i) + ".running_mean",
                     &bns_[i].running_mean()});
      out.push_back({"bn" + std::to_string(i) + ".running_var",
                     &bns_[i].running_var()});
    }
    return out;
  }

  std::int64_t param_count() {
    std::int64_t n = 0;
    for (auto& p : params()) n += p.var.value().numel();
    return n;
  }

  BatchNorm2d<S>& bn(std::size_t i) { return bns_[i]; }
  Var<S>& conv_weight(std::size_t i) { return conv_w_[i]; }

 private:
  ModelSpec spec_;
  std::vector<Var<S>> conv_w_;
  std::vector<BatchNorm2d<S>> bns_;
  Var<S> fc_w_, fc_b_;
};

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line (model spec, class labels, training
// metadata) followed by raw little-endian float32 blocks, parameters then
// running state, in walk order.

template <typename S>
void save_checkpoint(const std::string& path, Res15<S>& model,
                     const nlohmann::json& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  nlohmann::json header;
  header["format"] = "patchkws-ckpt-v1";
  header["model"] = model.spec().to_json();
  header["meta"] = meta;
  auto params = model.params();
  auto state = model.state();
  nlohmann::json plist = nlohmann::json::array();
  for (auto& p : params)
    plist.push_back({{"name", p.name}, {"shape", p.var.value().shape()}});
  nlohmann::json slist = nlohmann::json::array();
  for (auto& s : state)
    slist.push_back({{"name", s.first}, {"shape", s.second->shape()}});
  header["params"] = plist;
  header["state"] = slist;
  out << header.dump() << "\n";

  auto write_block = [&](const Tensor<S>& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      const float v = static_cast<float>(t[i]);
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  };
  for (auto& p : params) write_block(p.var.value());
  for (auto& s : state) write_block(*s.second);
  if (!out) throw DataError("short write to checkpoint: " + path);
}

template <typename S>
Res15<S> load_checkpoint(const std::string& path, nlohmann::json* meta_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint header missing: " + path);
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("format").get<std::string>() != "patchkws-ckpt-v1")
    throw DataError("unsupported checkpoint format in " + path);
  ModelSpec spec = ModelSpec::from_json(header.at("model"));
  if (meta_out) *meta_out = header.at("meta");

  Res15<S> model(spec, Rng(0));  // weights are overwritten below
  auto read_block = [&](Tensor<S>& t, const std::string& name) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      float v;
      in.read(reinterpret_cast<char*>(&v), 4);
      if (!in) throw DataError("checkpoint truncated at block " + name);
      t[i] = static_cast<S>(v);
    }
  };
  auto params = model.params();
  const auto& plist = header.at("params");
  if (plist.size() != params.size())
    throw DataError("checkpoint parameter list mismatch in " + path);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (plist[i].at("name").get<std::string>() != params[i].name)
      throw DataError("checkpoint walk order mismatch at " + params[i].name);
    read_block(params[i].var.value(), params[i].name);
  }
  auto state = model.state();
  for (std::size_t i = 0; i < state.size(); ++i)
    read_block(*state[i].second, state[i].first);
  return model;
}

}  // namespace kws

#endif  // KWS_NN_HPP_
