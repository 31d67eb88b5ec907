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
#include <span>
#include <string>
#include <vector>

namespace graft {

struct LanguageCorpus {
  std::string language;
  std::vector<std::string> lines;
  // Token count under whichever tokenizer the caller measured with; 0 when
  // not measured.
  std::size_t size_tokens = 0;
};

// One training example tagged with the language it came from.
struct Example {
  std::string language;
  std::string text;

  bool operator==(const Example&) const = default;
};

struct WeightedSource {
  LanguageCorpus corpus;
  double weight = 1.0;
};

struct MixtureSpec {
  std::vector<WeightedSource> sentence_sources;
  std::vector<WeightedSource> doc_sources;
  double sentence_fraction = 0.65;
  double doc_fraction = 0.35;
  std::uint64_t unimax_n = 5;
  bool english_always_included = true;
  std::string english_language = "en";
  std::uint64_t seed = 0;
};

// Corpora above `max_lines` are uniformly subsampled to exactly `max_lines`
// (original line order kept); smaller ones pass through.
std::vector<LanguageCorpus> cap_sample(std::span<const LanguageCorpus> corpora,
                                       std::size_t max_lines, std::uint64_t seed);

// p_i proportional to sizes_i^(1/tau).
std::vector<double> temperature_weights(std::span<const double> sizes, double tau);

// Draw `total_lines` lines across corpora in proportion to temperature
// weights over their line counts, without replacement inside a language
// until it is exhausted.
std::vector<LanguageCorpus> temperature_sample(std::span<const LanguageCorpus> corpora, double tau,
                                               std::size_t total_lines, std::uint64_t seed);

// UniMax: smallest language first, each gets min(N * size, remaining budget
// / remaining languages). Results are in input order.
std::vector<std::uint64_t> unimax_allocate(std::span<const std::uint64_t> sizes,
                                           std::uint64_t budget, std::uint64_t n_epochs);

// D_la: floor(sentence_fraction * total) sentence-level examples, the rest
// document-level, per-language quotas from UniMax over line counts, shuffled.
std::vector<Example> compose_pretraining_mixture(const MixtureSpec& spec, std::size_t total_examples);

// D_mix: k = floor(it_fraction * |d_it|) instruction examples plus k
// language-adaptation examples, shuffled together.
std::vector<Example> compose_lora_mixture(std::span<const Example> d_it, std::span<const Example> d_la,
                                          double it_fraction, std::uint64_t seed);

struct CorpusDirectory {
  std::vector<LanguageCorpus> sentence;
  std::vector<LanguageCorpus> doc;
};

// Reads every `<lang>.sent.txt` and `<lang>.doc.txt` in `dir`.
CorpusDirectory load_corpus_dir(const std::filesystem::path& dir);

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, std::span<const std::string> lines);

// Mixture spec JSON: {"sentence_fraction", "doc_fraction", "unimax_n",
// "english_always_included", "english_language", "seed",
// "weights": {"<lang>": w}}. Sources come from a corpus directory.
MixtureSpec mixture_spec_from_json(const std::string& json, const CorpusDirectory& corpora);

}  // namespace graft
