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

#include "graft/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "graft/error.hpp"
#include "graft/rng.hpp"

namespace graft {

namespace {

std::uint64_t tag_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// `count` distinct indices from [0, n), sorted.
std::vector<std::size_t> choose_indices(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// `quota` lines from `lines`: whole passes first, then a sample for the rest.
std::vector<std::string> draw_with_epochs(const std::vector<std::string>& lines, std::size_t quota,
                                          Rng& rng) {
  std::vector<std::string> out;
  if (lines.empty()) return out;
  out.reserve(quota);
  while (quota >= lines.size()) {
    out.insert(out.end(), lines.begin(), lines.end());
    quota -= lines.size();
  }
  for (std::size_t i : choose_indices(lines.size(), quota, rng)) out.push_back(lines[i]);
  return out;
}

std::vector<Example> compose_part(const std::vector<WeightedSource>& sources, std::size_t budget,
                                  const MixtureSpec& spec, std::string_view part, Rng& rng) {
  std::vector<const LanguageCorpus*> active;
  for (const auto& s : sources) {
    if (s.weight < 0) throw InvalidArgument("mixture source weights must be non-negative");
    const bool english = s.corpus.language == spec.english_language;
    if (s.weight > 0 || (english && spec.english_always_included)) active.push_back(&s.corpus);
  }
  if (budget == 0) return {};
  if (active.empty()) {
    throw InvalidArgument(fmt::format("no {} sources for a part with {} examples", part, budget));
  }
  if (spec.english_always_included &&
      std::none_of(active.begin(), active.end(),
                   [&](const auto* c) { return c->language == spec.english_language; })) {
    throw InvalidArgument(fmt::format("english source '{}' missing from {} sources",
                                      spec.english_language, part));
  }
  std::vector<std::uint64_t> sizes;
  for (const auto* c : active) sizes.push_back(c->lines.size());
  auto quotas = unimax_allocate(sizes, budget, spec.unimax_n);
  const auto total = std::accumulate(quotas.begin(), quotas.end(), std::uint64_t{0});
  if (total < budget) {
    throw InvalidArgument(fmt::format(
        "insufficient {} data: UniMax caps (N={}) allow {} examples but {} are required (short by {})",
        part, spec.unimax_n, total, budget, budget - total));
  }
  if (spec.english_always_included) {
    const auto en = static_cast<std::size_t>(
        std::find_if(active.begin(), active.end(),
                     [&](const auto* c) { return c->language == spec.english_language; }) -
        active.begin());
    if (quotas[en] == 0 && !active[en]->lines.empty()) {
      const auto donor = static_cast<std::size_t>(std::max_element(quotas.begin(), quotas.end()) -
                                                  quotas.begin());
      --quotas[donor];
      ++quotas[en];
    }
  }
  std::vector<Example> out;
  for (std::size_t i = 0; i < active.size(); ++i) {
    for (auto& line : draw_with_epochs(active[i]->lines, quotas[i], rng)) {
      out.push_back(Example{active[i]->language, std::move(line)});
    }
  }
  return out;
}

}  // namespace

std::vector<LanguageCorpus> cap_sample(std::span<const LanguageCorpus> corpora,
                                       std::size_t max_lines, std::uint64_t seed) {
  if (max_lines == 0) throw InvalidArgument("cap_sample: max_lines must be positive");
  std::vector<LanguageCorpus> out;
  for (const auto& c : corpora) {
    if (c.lines.size() <= max_lines) {
      out.push_back(c);
      continue;
    }
    Rng rng(derive_seed(seed, tag_hash(c.language)));
    LanguageCorpus capped{c.language, {}, 0};
    capped.lines.reserve(max_lines);
    for (std::size_t i : choose_indices(c.lines.size(), max_lines, rng)) {
      capped.lines.push_back(c.lines[i]);
    }
    out.push_back(std::move(capped));
  }
  return out;
}

std::vector<double> temperature_weights(std::span<const double> sizes, double tau) {
  if (!(tau > 0)) throw InvalidArgument("temperature_weights: tau must be positive");
  if (sizes.empty()) return {};
  double max_log = -INFINITY;
  for (double s : sizes) {
    if (!(s > 0)) throw InvalidArgument("temperature_weights: sizes must be positive");
    max_log = std::max(max_log, std::log(s));
  }
  std::vector<double> w;
  w.reserve(sizes.size());
  double total = 0;
  for (double s : sizes) {
    w.push_back(std::exp((std::log(s) - max_log) / tau));
    total += w.back();
  }
  for (double& x : w) x /= total;
  return w;
}

std::vector<LanguageCorpus> temperature_sample(std::span<const LanguageCorpus> corpora, double tau,
                                               std::size_t total_lines, std::uint64_t seed) {
  std::vector<double> sizes;
  for (const auto& c : corpora) sizes.push_back(static_cast<double>(std::max<std::size_t>(c.lines.size(), 1)));
  const auto p = temperature_weights(sizes, tau);
  // Largest-remainder rounding of p_i * total.
  std::vector<std::size_t> quota(corpora.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < corpora.size(); ++i) {
    const double exact = p[i] * static_cast<double>(total_lines);
    quota[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total_lines && k < rem.size(); ++k, ++assigned) {
    ++quota[rem[k].second];
  }
  std::vector<LanguageCorpus> out;
  for (std::size_t i = 0; i < corpora.size(); ++i) {
    Rng rng(derive_seed(seed, tag_hash(corpora[i].language)));
    out.push_back(LanguageCorpus{corpora[i].language, draw_with_epochs(corpora[i].lines, quota[i], rng), 0});
  }
  return out;
}

std::vector<std::uint64_t> unimax_allocate(std::span<const std::uint64_t> sizes,
                                           std::uint64_t budget, std::uint64_t n_epochs) {
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sizes[a] < sizes[b]; });
  std::vector<std::uint64_t> alloc(sizes.size(), 0);
  std::uint64_t remaining = budget;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::uint64_t left = order.size() - k;
    const std::uint64_t cap = n_epochs * sizes[order[k]];
    const std::uint64_t share = remaining / left;
    alloc[order[k]] = std::min(cap, share);
    remaining -= alloc[order[k]];
  }
  return alloc;
}

std::vector<Example> compose_pretraining_mixture(const MixtureSpec& spec, std::size_t total_examples) {
  if (spec.sentence_fraction < 0 || spec.doc_fraction < 0 ||
      std::abs(spec.sentence_fraction + spec.doc_fraction - 1.0) > 1e-9) {
    throw InvalidArgument("sentence_fraction and doc_fraction must be non-negative and sum to 1");
  }
  if (spec.unimax_n == 0) throw InvalidArgument("unimax_n must be positive");
  const auto n_sent = static_cast<std::size_t>(
      std::floor(spec.sentence_fraction * static_cast<double>(total_examples) + 1e-9));
  const std::size_t n_doc = total_examples - n_sent;
  Rng rng(spec.seed);
  auto out = compose_part(spec.sentence_sources, n_sent, spec, "sentence-level", rng);
  auto docs = compose_part(spec.doc_sources, n_doc, spec, "document-level", rng);
  out.insert(out.end(), std::make_move_iterator(docs.begin()), std::make_move_iterator(docs.end()));
  rng.shuffle(out);
  return out;
}

std::vector<Example> compose_lora_mixture(std::span<const Example> d_it, std::span<const Example> d_la,
                                          double it_fraction, std::uint64_t seed) {
  if (!(it_fraction > 0 && it_fraction <= 1)) {
    throw InvalidArgument("compose_lora_mixture: it_fraction must be in (0, 1]");
  }
  const auto k = static_cast<std::size_t>(std::floor(it_fraction * static_cast<double>(d_it.size()) + 1e-9));
  if (d_la.size() < k) {
    throw InvalidArgument(fmt::format(
        "compose_lora_mixture: need {} language-adaptation examples, only {} available", k, d_la.size()));
  }
  Rng rng(seed);
  std::vector<Example> out;
  out.reserve(2 * k);
  for (std::size_t i : choose_indices(d_it.size(), k, rng)) out.push_back(d_it[i]);
  for (std::size_t i : choose_indices(d_la.size(), k, rng)) out.push_back(d_la[i]);
  rng.shuffle(out);
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, std::span<const std::string> lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

CorpusDirectory load_corpus_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> sent, doc;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    auto strip = [&](std::string_view suffix) -> std::string {
      if (name.size() > suffix.size() && name.ends_with(suffix)) {
        return name.substr(0, name.size() - suffix.size());
      }
      return {};
    };
    if (auto lang = strip(".sent.txt"); !lang.empty()) sent[lang] = entry.path();
    if (auto lang = strip(".doc.txt"); !lang.empty()) doc[lang] = entry.path();
  }
  CorpusDirectory out;
  for (const auto& [lang, p] : sent) out.sentence.push_back({lang, read_lines(p), 0});
  for (const auto& [lang, p] : doc) out.doc.push_back({lang, read_lines(p), 0});
  return out;
}

MixtureSpec mixture_spec_from_json(const std::string& json, const CorpusDirectory& corpora) {
  MixtureSpec spec;
  try {
    const auto j = nlohmann::json::parse(json);
    spec.sentence_fraction = j.value("sentence_fraction", spec.sentence_fraction);
    spec.doc_fraction = j.value("doc_fraction", 1.0 - spec.sentence_fraction);
    spec.unimax_n = j.value("unimax_n", spec.unimax_n);
    spec.english_always_included = j.value("english_always_included", spec.english_always_included);
    spec.english_language = j.value("english_language", spec.english_language);
    spec.seed = j.value("seed", spec.seed);
    std::map<std::string, double> weights;
    if (j.contains("weights")) weights = j.at("weights").get<std::map<std::string, double>>();
    auto weight_of = [&](const std::string& lang) {
      auto it = weights.find(lang);
      return it == weights.end() ? 1.0 : it->second;
    };
    for (const auto& c : corpora.sentence) spec.sentence_sources.push_back({c, weight_of(c.language)});
    for (const auto& c : corpora.doc) spec.doc_sources.push_back({c, weight_of(c.language)});
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("mixture spec: ") + e.what());
  }
  return spec;
}

}  // namespace graft
