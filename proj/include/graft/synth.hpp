// Copyright 2026 The graft Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "graft/eval.hpp"

namespace graft {

enum class TargetMode {
  // Word-for-word substitution with a disjoint Latin pseudo-vocabulary.
  kCipher,
  // Letters moved into the Georgian block (three UTF-8 bytes each), so a
  // Latin-trained tokenizer falls back to bytes.
  kScriptShift,
};

std::string_view to_string(TargetMode m);
TargetMode target_mode_from_string(std::string_view s);

// A small templated language plus a target-language rendering of it.
struct SyntheticLangSpec {
  std::uint64_t seed = 7;
  TargetMode mode = TargetMode::kScriptShift;
  std::size_t num_categories = 6;
  std::size_t nouns_per_category = 8;
  // Long tail of rarely repeated names; gives the tokenizers subword work.
  std::size_t num_names = 1200;
  // Sentences per document.
  std::size_t doc_min_sentences = 3;
  std::size_t doc_max_sentences = 6;
  std::size_t base_sentences = 20000;
  std::size_t base_docs = 2000;
  std::size_t target_sentences = 6000;
  std::size_t target_docs = 600;
  std::size_t parallel_pairs = 2000;
  std::size_t distractor_lines = 2000;
  std::size_t instruct_examples = 4000;
  std::size_t eval_tasks_per_language = 200;
  std::size_t heldout_lines = 400;
  std::size_t dev_lines = 100;
  std::string base_language = "en";
  std::string target_language = "ka";
  std::string distractor_language = "el";

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticLangSpec& s);
void from_json(const nlohmann::json& j, SyntheticLangSpec& s);

struct SyntheticCorpora {
  std::vector<std::string> base_sentences;
  std::vector<std::string> base_docs;
  std::vector<std::string> target_sentences;
  std::vector<std::string> target_docs;
  // "base = target" translation lines.
  std::vector<std::string> parallel;
  // Unrelated non-Latin text, only for donor tokenizer training.
  std::vector<std::string> distractor;
  // Base-language task text (classification and copy) with answers inline.
  std::vector<std::string> instruct;
  std::vector<EvalTask> eval_tasks;
  // language -> held-out lines for perplexity
  std::map<std::string, std::vector<std::string>> heldout;
  // language -> development lines for checkpoint selection
  std::map<std::string, std::vector<std::string>> dev;
  // base word -> target word
  std::map<std::string, std::string> lexicon;
};

// Deterministic in the spec.
SyntheticCorpora gen_synthetic_corpora(const SyntheticLangSpec& spec);

// Maps base-language text into the target language word by word; spaces
// and unknown words pass through.
std::string to_target(const SyntheticCorpora& c, std::string_view base_text);
std::string from_target(const SyntheticCorpora& c, std::string_view target_text);

// Layout under `dir`:
//   corpus/<base>.sent.txt  corpus/<base>.doc.txt
//   corpus/<target>.sent.txt  corpus/<target>.doc.txt
//   corpus/<base>-<target>.sent.txt (parallel)
//   distractor/<distractor>.txt  instruct/<base>.txt
//   eval/tasks.jsonl  eval/<lang>.heldout.txt  eval/<lang>.dev.txt
//   lexicon.json
// Returns the written files.
std::vector<std::filesystem::path> write_synthetic(const SyntheticCorpora& c, const SyntheticLangSpec& spec,
                                                   const std::filesystem::path& dir);

}  // namespace graft
