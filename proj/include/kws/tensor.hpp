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

#ifndef KWS_TENSOR_HPP_
#define KWS_TENSOR_HPP_

#include <Eigen/Core>

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

namespace kws {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense row-major tensor over a flat Eigen array. Rank is dynamic; the
// pipeline uses rank 4 (batch, channel, frequency, time) for feature maps,
// rank 2/3 for statistics, rank 1 for vectors. Feature maps index as
// ((b*C + c)*H + h)*W + w.
template <typename S>
class Tensor {
 public:
  using ArrayType = Eigen::Array<S, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(ArrayType::Zero(shape_numel(shape_))) {}
  Tensor(Shape shape, ArrayType data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    assert(data_.size() == shape_numel(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, S value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }
  static Tensor from_values(Shape shape, std::initializer_list<S> vals) {
    Tensor t(std::move(shape));
    assert(static_cast<std::int64_t>(vals.size()) == t.numel());
    std::int64_t i = 0;
    for (S v : vals) t.data_[i++] = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return data_.size(); }

  ArrayType& array() { return data_; }
  const ArrayType& array() const { return data_; }
  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  S& operator[](std::int64_t i) { return data_[i]; }
  S operator[](std::int64_t i) const { return data_[i]; }

  // Rank-4 accessor (b, c, h, w).
  S& at4(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  S at4(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  // Rank-3 accessor (b, c, k).
  S& at3(std::int64_t b, std::int64_t c, std::int64_t k) {
    return data_[(b * shape_[1] + c) * shape_[2] + k];
  }
  S at3(std::int64_t b, std::int64_t c, std::int64_t k) const {
    return data_[(b * shape_[1] + c) * shape_[2] + k];
  }
  // Rank-2 accessor (i, j).
  S& at2(std::int64_t i, std::int64_t j) { return data_[i * shape_[1] + j]; }
  S at2(std::int64_t i, std::int64_t j) const { return data_[i * shape_[1] + j]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const { return data_.isFinite().all(); }

  template <typename T>
  Tensor<T> cast() const {
    return Tensor<T>(shape_, data_.template cast<T>());
  }

 private:
  Shape shape_;
  ArrayType data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Feature maps are rank-4 (B, C, H, W) float tensors.
using FeatureMap = Tensor<float>;

}  // namespace kws

#endif  // KWS_TENSOR_HPP_
