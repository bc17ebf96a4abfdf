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

#ifndef KWS_MANIFEST_HPP_
#define KWS_MANIFEST_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace kws {

enum class Split { kTrain, kValidation, kTest };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

// Label scheme. Class indices are stable across runs: keyword labels sorted
// lexicographically, then the unknown label, then the silence label.
struct ClassMap {
  std::string scheme_name;
  std::vector<std::string> keyword_labels;  // sorted, unique
  std::optional<std::string> unknown_label;
  std::optional<std::string> silence_label;

  // keywords + unknown + silence, in index order.
  std::vector<std::string> all_labels() const;
  std::int64_t num_classes() const;
  std::int64_t num_keywords() const {
    return static_cast<std::int64_t>(keyword_labels.size());
  }
  // Index of a label name; -1 if absent.
  std::int64_t index_of(const std::string& label) const;
  std::int64_t unknown_index() const;
  std::int64_t silence_index() const;
  bool is_keyword_index(std::int64_t idx) const { return idx >= 0 && idx < num_keywords(); }

  // Validates uniqueness/ordering invariants; throws ConfigError.
  void validate() const;

  // Canonical constructor: sorts and deduplicates keyword labels.
  static ClassMap make(std::string scheme_name,
                       std::vector<std::string> keywords,
                       std::optional<std::string> unknown,
                       std::optional<std::string> silence);

  // Built-in schemes: "gsc12", "libri11", "ted8", or "keywords:<a,b,c>".
  static ClassMap scheme(const std::string& name);
};

struct Example {
  std::string audio_path;
  std::int64_t label = 0;
  Split split = Split::kTrain;
  double duration_s = 0.0;
};

struct Manifest {
  std::vector<Example> examples;
  ClassMap class_map;
  int sample_rate = 16000;
  // Background-noise WAVs discovered alongside a dataset tree (used both
  // as the augmentation noise bank and for silence-class crops).
  std::vector<std::string> noise_paths;

  std::vector<const Example*> split_examples(Split s) const;
  std::int64_t count(Split s) const;
  // Throws DataError unless train and validation splits are nonempty and
  // invariants hold.
  void validate_for_training() const;
  void validate() const;
};

// Scans a Google-Speech-Commands-style tree: per-class subdirectories of
// WAVs plus validation/testing list files naming "class/file.wav" entries.
// Non-keyword class directories fold into the unknown class. If the scheme
// has a silence class, synthetic silence entries are appended per split,
// backed by the `_background_noise_` directory; their waveforms are cropped
// on the fly at load time. Silence count per split = mean keyword count.
Manifest build_gsc_manifest(const std::string& root, const ClassMap& scheme);

// JSON-lines manifest: one object per line with keys path, label, split,
// duration_s. Labels are class names resolved against `scheme`.
Manifest load_jsonl_manifest(const std::string& path, const ClassMap& scheme);
void write_jsonl_manifest(const std::string& path, const Manifest& m);

// Cross-corpus class intersection for out-of-domain evaluation.
struct ClassIntersection {
  ClassMap map;                          // shared classes, canonical order
  std::vector<std::int64_t> source_to_eval;  // source index -> eval index or -1
  std::vector<std::int64_t> target_to_eval;  // target index -> eval index or -1
  // The unknown class is only nominally shared across corpora; callers
  // doing keywords-only evaluation must drop it.
  bool unknown_shared = false;
};

ClassIntersection intersect_classes(const ClassMap& source, const ClassMap& target);

}  // namespace kws

#endif  // KWS_MANIFEST_HPP_
