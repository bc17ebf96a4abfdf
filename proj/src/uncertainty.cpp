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

#include "kws/uncertainty.hpp"

namespace kws {

const char* method_name(UncertaintyMethod m) {
  switch (m) {
    case UncertaintyMethod::kNone: return "None";
    case UncertaintyMethod::kDSU: return "DSU";
    case UncertaintyMethod::kPatchDSU: return "PatchDSU";
    case UncertaintyMethod::kFreqMixStyle: return "FreqMixStyle";
  }
  return "?";
}

UncertaintyMethod method_from_name(const std::string& name) {
  if (name == "None") return UncertaintyMethod::kNone;
  if (name == "DSU") return UncertaintyMethod::kDSU;
  if (name == "PatchDSU") return UncertaintyMethod::kPatchDSU;
  if (name == "FreqMixStyle") return UncertaintyMethod::kFreqMixStyle;
  throw ConfigError("unknown uncertainty method: " + name);
}

const char* variance_mode_name(VarianceMode m) {
  return m == VarianceMode::kBatchShared ? "batch_shared" : "per_example";
}

VarianceMode variance_mode_from_name(const std::string& name) {
  if (name == "batch_shared") return VarianceMode::kBatchShared;
  if (name == "per_example") return VarianceMode::kPerExample;
  throw ConfigError("unknown variance_mode: " + name);
}

void UncertaintyConfig::validate() const {
  if (p < 0.0 || p > 1.0) throw ConfigError("uncertainty p must be in [0, 1]");
  if (k_h < 1 || k_w < 1) throw ConfigError("k_h and k_w must be >= 1");
  if (lambda_mix < 0.0 || lambda_mix > 1.0)
    throw ConfigError("lambda must be in [0, 1]");
  if (eps <= 0.0) throw ConfigError("eps must be > 0");
}

PatchGrid PatchGrid::make(std::int64_t H, std::int64_t W, int k_h, int k_w) {
  if (H < 1 || W < 1) throw NumericError("patch grid needs a nonempty map");
  if (k_h < 1 || k_w < 1) throw NumericError("patch counts must be >= 1");
  static std::atomic<bool> warned{false};
  if ((k_h > H || k_w > W) && !warned.exchange(true))
    log_warn("patch count (" + std::to_string(k_h) + "," + std::to_string(k_w) +
             ") exceeds feature-map size (" + std::to_string(H) + "," +
             std::to_string(W) + "); clamping to the axis length");
  const std::int64_t kh = std::min<std::int64_t>(k_h, H);
  const std::int64_t kw = std::min<std::int64_t>(k_w, W);
  const std::int64_t ph = (H + kh - 1) / kh;  // ceil(H / k_h)
  const std::int64_t pw = (W + kw - 1) / kw;

  PatchGrid g;
  g.height = H;
  g.width = W;
  for (std::int64_t h = 0; h < H; h += ph) g.row_bounds.push_back(h);
  g.row_bounds.push_back(H);
  for (std::int64_t w = 0; w < W; w += pw) g.col_bounds.push_back(w);
  g.col_bounds.push_back(W);
  return g;
}

}  // namespace kws
