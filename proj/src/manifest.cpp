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

#include "kws/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kws/common.hpp"
#include "kws/wav.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace kws {

namespace {
constexpr const char* kBackgroundDir = "_background_noise_";

const std::vector<std::string> kGscKeywords = {"yes", "no",   "up",   "down", "left",
                                               "right", "on", "off", "stop", "go"};
}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split name: " + name);
}

std::vector<std::string> ClassMap::all_labels() const {
  std::vector<std::string> out = keyword_labels;
  if (unknown_label) out.push_back(*unknown_label);
  if (silence_label) out.push_back(*silence_label);
  return out;
}

std::int64_t ClassMap::num_classes() const {
  return num_keywords() + (unknown_label ? 1 : 0) + (silence_label ? 1 : 0);
}

std::int64_t ClassMap::index_of(const std::string& label) const {
  auto it = std::lower_bound(keyword_labels.begin(), keyword_labels.end(), label);
  if (it != keyword_labels.end() && *it == label)
    return it - keyword_labels.begin();
  if (unknown_label && label == *unknown_label) return unknown_index();
  if (silence_label && label == *silence_label) return silence_index();
  return -1;
}

std::int64_t ClassMap::unknown_index() const {
  return unknown_label ? num_keywords() : -1;
}

std::int64_t ClassMap::silence_index() const {
  return silence_label ? num_keywords() + (unknown_label ? 1 : 0) : -1;
}

void ClassMap::validate() const {
  if (keyword_labels.empty())
    throw ConfigError("class map '" + scheme_name + "': no keyword labels");
  if (!std::is_sorted(keyword_labels.begin(), keyword_labels.end()))
    throw ConfigError("class map '" + scheme_name + "': keywords not sorted");
  std::set<std::string> seen(keyword_labels.begin(), keyword_labels.end());
  if (seen.size() != keyword_labels.size())
    throw ConfigError("class map '" + scheme_name + "': duplicate keyword");
  if (unknown_label && seen.count(*unknown_label))
    throw ConfigError("class map '" + scheme_name + "': unknown label collides");
  if (silence_label &&
      (seen.count(*silence_label) ||
       (unknown_label && *silence_label == *unknown_label)))
    throw ConfigError("class map '" + scheme_name + "': silence label collides");
}

ClassMap ClassMap::make(std::string scheme_name, std::vector<std::string> keywords,
                        std::optional<std::string> unknown,
                        std::optional<std::string> silence) {
  std::sort(keywords.begin(), keywords.end());
  keywords.erase(std::unique(keywords.begin(), keywords.end()), keywords.end());
  ClassMap m{std::move(scheme_name), std::move(keywords), std::move(unknown),
             std::move(silence)};
  m.validate();
  return m;
}

ClassMap ClassMap::scheme(const std::string& name) {
  if (name == "gsc12")
    return make("gsc12", kGscKeywords, "unknown", "silence");
  if (name == "libri11")
    return make("libri11", kGscKeywords, "unknown", std::nullopt);
  if (name == "ted8") {
    // GSC keywords minus those with too few occurrences in TED-LIUM.
    std::vector<std::string> kws;
    for (const auto& k : kGscKeywords)
      if (k != "left" && k != "yes" && k != "stop") kws.push_back(k);
    return make("ted8", kws, "unknown", std::nullopt);
  }
  if (name.rfind("keywords:", 0) == 0) {
    std::vector<std::string> kws;
    std::stringstream ss(name.substr(9));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) kws.push_back(item);
    return make(name, std::move(kws), std::nullopt, std::nullopt);
  }
  throw ConfigError("unknown class scheme: " + name);
}

std::vector<const Example*> Manifest::split_examples(Split s) const {
  std::vector<const Example*> out;
  for (const auto& e : examples)
    if (e.split == s) out.push_back(&e);
  return out;
}

std::int64_t Manifest::count(Split s) const {
  std::int64_t n = 0;
  for (const auto& e : examples) n += (e.split == s);
  return n;
}

void Manifest::validate() const {
  class_map.validate();
  if (sample_rate != 16000)
    throw DataError("manifest sample rate must be 16000");
  const std::int64_t n_classes = class_map.num_classes();
  for (const auto& e : examples) {
    if (e.duration_s <= 0.0)
      throw DataError("example " + e.audio_path + ": duration must be > 0");
    if (e.label < 0 || e.label >= n_classes)
      throw DataError("example " + e.audio_path + ": label out of range");
  }
}

void Manifest::validate_for_training() const {
  validate();
  if (count(Split::kTrain) == 0) throw DataError("train split is empty");
  if (count(Split::kValidation) == 0) throw DataError("validation split is empty");
}

namespace {

// The GSC list files name entries as "class/file.wav".
std::set<std::string> read_list_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing list file: " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n' ||
                             line.back() == ' '))
      line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

}  // namespace

Manifest build_gsc_manifest(const std::string& root, const ClassMap& scheme) {
  scheme.validate();
  const fs::path base(root);
  if (!fs::is_directory(base))
    throw ConfigError("dataset root is not a directory: " + root);

  const auto val_list = read_list_file(base / "validation_list.txt");
  const auto test_list = read_list_file(base / "testing_list.txt");
  for (const auto& entry : val_list)
    if (test_list.count(entry))
      throw DataError("ambiguous split: " + entry +
                      " appears in both validation and testing lists");

  Manifest m;
  m.class_map = scheme;

  std::vector<fs::path> class_dirs;
  for (const auto& d : fs::directory_iterator(base)) {
    if (!d.is_directory()) continue;
    const std::string name = d.path().filename().string();
    if (name == kBackgroundDir) {
      std::vector<std::string> noise;
      for (const auto& f : fs::directory_iterator(d.path()))
        if (f.path().extension() == ".wav") noise.push_back(f.path().string());
      std::sort(noise.begin(), noise.end());
      m.noise_paths = std::move(noise);
      continue;
    }
    class_dirs.push_back(d.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  const std::int64_t unknown_idx = scheme.unknown_index();
  std::int64_t total_files = 0;
  for (const auto& dir : class_dirs) {
    const std::string cls = dir.filename().string();
    std::int64_t label = scheme.index_of(cls);
    const bool in_scheme = scheme.is_keyword_index(label);
    if (!in_scheme) {
      if (unknown_idx < 0) continue;  // scheme without unknown: skip extras
      label = unknown_idx;
    }

    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(dir))
      if (f.path().extension() == ".wav") files.push_back(f.path());
    std::sort(files.begin(), files.end());

    if (files.empty()) {
      log_warn("class directory is empty: " + dir.string());
      if (!in_scheme)
        throw DataError("empty non-scheme class directory: " + dir.string());
      continue;
    }

    for (const auto& f : files) {
      const std::string rel = cls + "/" + f.filename().string();
      Example e;
      e.audio_path = f.string();
      e.label = label;
      e.split = val_list.count(rel)    ? Split::kValidation
                : test_list.count(rel) ? Split::kTest
                                       : Split::kTrain;
      e.duration_s =
          static_cast<double>(wav_sample_count(f.string())) / kSampleRate;
      m.examples.push_back(std::move(e));
      ++total_files;
    }
  }
  if (total_files == 0) throw DataError("empty dataset: " + root);

  // Silence entries: mean keyword count per split, cycled over noise files.
  // The actual 1-s window is cropped at load time.
  if (scheme.silence_label) {
    if (m.noise_paths.empty()) {
      log_warn("scheme has a silence class but no " + std::string(kBackgroundDir) +
               " directory; silence class will be empty");
    } else {
      for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
        double sum = 0.0;
        for (std::int64_t k = 0; k < scheme.num_keywords(); ++k) {
          std::int64_t c = 0;
          for (const auto& e : m.examples)
            if (e.split == s && e.label == k) ++c;
          sum += static_cast<double>(c);
        }
        const auto n_silence = static_cast<std::int64_t>(
            std::llround(sum / static_cast<double>(scheme.num_keywords())));
        for (std::int64_t i = 0; i < n_silence; ++i) {
          Example e;
          e.audio_path = m.noise_paths[static_cast<std::size_t>(
              i % static_cast<std::int64_t>(m.noise_paths.size()))];
          e.label = scheme.silence_index();
          e.split = s;
          e.duration_s = 1.0;
          m.examples.push_back(std::move(e));
        }
      }
    }
  }

  m.validate();
  return m;
}

Manifest load_jsonl_manifest(const std::string& path, const ClassMap& scheme) {
  scheme.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);

  Manifest m;
  m.class_map = scheme;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": malformed JSON: " + e.what());
    }
    for (const char* key : {"path", "label", "split", "duration_s"})
      if (!rec.contains(key))
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": missing field \"" + key + "\"");
    Example e;
    e.audio_path = rec["path"].get<std::string>();
    const auto label_name = rec["label"].get<std::string>();
    e.label = scheme.index_of(label_name);
    if (e.label < 0)
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": unknown label name \"" + label_name + "\"");
    try {
      e.split = split_from_name(rec["split"].get<std::string>());
    } catch (const DataError& err) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + err.what());
    }
    e.duration_s = rec["duration_s"].get<double>();
    if (e.duration_s <= 0.0)
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": duration_s must be > 0");
    m.examples.push_back(std::move(e));
  }
  m.validate();
  return m;
}

void write_jsonl_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  const auto labels = m.class_map.all_labels();
  for (const auto& e : m.examples) {
    json rec;
    rec["path"] = e.audio_path;
    rec["label"] = labels[static_cast<std::size_t>(e.label)];
    rec["split"] = split_name(e.split);
    rec["duration_s"] = e.duration_s;
    out << rec.dump() << "\n";
  }
}

ClassIntersection intersect_classes(const ClassMap& source, const ClassMap& target) {
  source.validate();
  target.validate();
  std::vector<std::string> shared;
  std::set_intersection(source.keyword_labels.begin(), source.keyword_labels.end(),
                        target.keyword_labels.begin(), target.keyword_labels.end(),
                        std::back_inserter(shared));
  if (shared.empty())
    throw DataError("class maps share no keywords: " + source.scheme_name +
                    " vs " + target.scheme_name);

  const bool both_unknown = source.unknown_label && target.unknown_label;
  const bool both_silence = source.silence_label && target.silence_label;
  ClassIntersection out;
  out.unknown_shared = both_unknown;
  out.map = ClassMap::make(
      source.scheme_name + "&" + target.scheme_name, shared,
      both_unknown ? source.unknown_label : std::nullopt,
      both_silence ? source.silence_label : std::nullopt);

  auto remap = [&](const ClassMap& from) {
    std::vector<std::int64_t> r(static_cast<std::size_t>(from.num_classes()), -1);
    const auto labels = from.all_labels();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      // Unknown maps to unknown, silence to silence, keywords by name.
      std::int64_t j = -1;
      if (static_cast<std::int64_t>(i) == from.unknown_index())
        j = out.map.unknown_index();
      else if (static_cast<std::int64_t>(i) == from.silence_index())
        j = out.map.silence_index();
      else
        j = out.map.index_of(labels[i]);
      if (j >= 0 && out.map.is_keyword_index(j) &&
          !from.is_keyword_index(static_cast<std::int64_t>(i)))
        j = -1;  // name collision across roles; do not alias
      r[i] = j;
    }
    return r;
  };
  out.source_to_eval = remap(source);
  out.target_to_eval = remap(target);
  return out;
}

}  // namespace kws
