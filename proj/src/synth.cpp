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

#include "graft/synth.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>

#include "graft/error.hpp"
#include "graft/rng.hpp"
#include "graft/sampler.hpp"
#include "graft/unicode.hpp"

namespace graft {

std::string_view to_string(TargetMode m) {
  return m == TargetMode::kCipher ? "CIPHER" : "SCRIPT_SHIFT";
}

TargetMode target_mode_from_string(std::string_view s) {
  if (s == "CIPHER") return TargetMode::kCipher;
  if (s == "SCRIPT_SHIFT") return TargetMode::kScriptShift;
  throw InvalidArgument("unknown target mode: " + std::string(s));
}

void SyntheticLangSpec::validate() const {
  if (num_categories < 4) throw InvalidArgument("synth: need at least 4 categories for 4-way tasks");
  if (nouns_per_category < 2) throw InvalidArgument("synth: need at least 2 nouns per category");
  if (doc_min_sentences == 0 || doc_min_sentences > doc_max_sentences) {
    throw InvalidArgument("synth: bad document sentence range");
  }
  const std::set<std::string> langs{base_language, target_language, distractor_language};
  if (langs.size() != 3) throw InvalidArgument("synth: language tags must differ");
}

void to_json(nlohmann::json& j, const SyntheticLangSpec& s) {
  j = nlohmann::json{{"seed", s.seed},
                     {"mode", to_string(s.mode)},
                     {"num_categories", s.num_categories},
                     {"nouns_per_category", s.nouns_per_category},
                     {"num_names", s.num_names},
                     {"doc_min_sentences", s.doc_min_sentences},
                     {"doc_max_sentences", s.doc_max_sentences},
                     {"base_sentences", s.base_sentences},
                     {"base_docs", s.base_docs},
                     {"target_sentences", s.target_sentences},
                     {"target_docs", s.target_docs},
                     {"parallel_pairs", s.parallel_pairs},
                     {"distractor_lines", s.distractor_lines},
                     {"instruct_examples", s.instruct_examples},
                     {"eval_tasks_per_language", s.eval_tasks_per_language},
                     {"heldout_lines", s.heldout_lines},
                     {"dev_lines", s.dev_lines},
                     {"base_language", s.base_language},
                     {"target_language", s.target_language},
                     {"distractor_language", s.distractor_language}};
}

void from_json(const nlohmann::json& j, SyntheticLangSpec& s) {
  s = SyntheticLangSpec{};
  s.seed = j.value("seed", s.seed);
  if (j.contains("mode")) s.mode = target_mode_from_string(j["mode"].get<std::string>());
  s.num_categories = j.value("num_categories", s.num_categories);
  s.nouns_per_category = j.value("nouns_per_category", s.nouns_per_category);
  s.num_names = j.value("num_names", s.num_names);
  s.doc_min_sentences = j.value("doc_min_sentences", s.doc_min_sentences);
  s.doc_max_sentences = j.value("doc_max_sentences", s.doc_max_sentences);
  s.base_sentences = j.value("base_sentences", s.base_sentences);
  s.base_docs = j.value("base_docs", s.base_docs);
  s.target_sentences = j.value("target_sentences", s.target_sentences);
  s.target_docs = j.value("target_docs", s.target_docs);
  s.parallel_pairs = j.value("parallel_pairs", s.parallel_pairs);
  s.distractor_lines = j.value("distractor_lines", s.distractor_lines);
  s.instruct_examples = j.value("instruct_examples", s.instruct_examples);
  s.eval_tasks_per_language = j.value("eval_tasks_per_language", s.eval_tasks_per_language);
  s.heldout_lines = j.value("heldout_lines", s.heldout_lines);
  s.dev_lines = j.value("dev_lines", s.dev_lines);
  s.base_language = j.value("base_language", s.base_language);
  s.target_language = j.value("target_language", s.target_language);
  s.distractor_language = j.value("distractor_language", s.distractor_language);
  s.validate();
}

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

enum : std::uint64_t {
  kStreamLexicon = 1,
  kStreamBase,
  kStreamBaseDocs,
  kStreamTarget,
  kStreamTargetDocs,
  kStreamParallel,
  kStreamDistractor,
  kStreamInstruct,
  kStreamEval,
  kStreamHeldout,
};

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  std::string make(std::size_t min_syl, std::size_t max_syl) {
    for (;;) {
      const std::size_t n = min_syl + rng_.below(max_syl - min_syl + 1);
      std::string w;
      for (std::size_t i = 0; i < n; ++i) {
        w += kConsonants[rng_.below(kConsonants.size())];
        w += kVowels[rng_.below(kVowels.size())];
        if (rng_.below(4) == 0) w += kConsonants[rng_.below(kConsonants.size())];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

std::string shift_letters(std::string_view word, char32_t first) {
  std::string out;
  for (char c : word) {
    if (c >= 'a' && c <= 'z') {
      unicode::append_utf8(out, first + static_cast<char32_t>(c - 'a'));
    } else {
      out += c;
    }
  }
  return out;
}

struct Lexicon {
  std::string the, is, a, and_, are, query, kind, copy, done, has;
  std::vector<std::string> category;
  std::vector<std::vector<std::string>> nouns;
  std::vector<std::string> verb;
  std::vector<std::string> names;
};

class Grammar {
 public:
  Grammar(const Lexicon& lex, Rng& rng) : lex_(lex), rng_(rng) {}

  std::size_t pick(std::size_t n) { return rng_.below(n); }

  const std::string& noun(std::size_t c) { return lex_.nouns[c][pick(lex_.nouns[c].size())]; }

  std::string classification(std::size_t c, const std::string& n) const {
    return fmt::format("{} {} {} {}", lex_.query, n, lex_.kind, lex_.category[c]);
  }

  std::string copy_task() {
    const std::size_t k = 1 + pick(3);
    std::string args;
    for (std::size_t i = 0; i < k; ++i) {
      if (i) args += ' ';
      args += noun(pick(lex_.category.size()));
    }
    return fmt::format("{} {} {} {}", lex_.copy, args, lex_.done, args);
  }

  std::string sentence() {
    const std::size_t K = lex_.category.size();
    const std::size_t c = pick(K);
    const std::size_t r = pick(20);
    if (r >= 17 && !lex_.names.empty()) {
      return fmt::format("{} {} {} {}", lex_.names[pick(lex_.names.size())], lex_.has, lex_.a, noun(c));
    }
    if (r < 6) return fmt::format("{} {} {} {} {}", lex_.the, noun(c), lex_.is, lex_.a, lex_.category[c]);
    if (r < 9) {
      const std::string n1 = noun(c);
      std::string n2 = noun(c);
      return fmt::format("{} {} {} {} {} {} {}", lex_.the, n1, lex_.and_, lex_.the, n2, lex_.are,
                         lex_.category[c]);
    }
    if (r < 13) {
      return fmt::format("{} {} {} {} {}", lex_.the, noun(c), lex_.verb[c], lex_.the, noun((c + 1) % K));
    }
    if (r < 15 || r >= 17) return classification(c, noun(c));
    return copy_task();
  }

  std::string doc(std::size_t min_s, std::size_t max_s) {
    const std::size_t n = min_s + pick(max_s - min_s + 1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) out += " . ";
      out += sentence();
    }
    return out;
  }

 private:
  const Lexicon& lex_;
  Rng& rng_;
};

std::string map_words(const std::map<std::string, std::string>& m, std::string_view text) {
  std::string out;
  std::size_t i = 0;
  while (i <= text.size()) {
    const std::size_t j = std::min(text.find(' ', i), text.size());
    const std::string w(text.substr(i, j - i));
    auto it = m.find(w);
    out += it == m.end() ? w : it->second;
    if (j == text.size()) break;
    out += ' ';
    i = j + 1;
  }
  return out;
}

}  // namespace

SyntheticCorpora gen_synthetic_corpora(const SyntheticLangSpec& spec) {
  spec.validate();
  SyntheticCorpora out;
  Rng lex_rng(derive_seed(spec.seed, kStreamLexicon));
  WordMaker words(lex_rng);
  Lexicon lex;
  for (std::string* w : {&lex.the, &lex.is, &lex.a, &lex.and_, &lex.are, &lex.query, &lex.kind,
                         &lex.copy, &lex.done, &lex.has}) {
    *w = words.make(1, 1);
  }
  const std::size_t K = spec.num_categories;
  for (std::size_t c = 0; c < K; ++c) {
    lex.category.push_back(words.make(2, 2));
    lex.verb.push_back(words.make(2, 2));
    lex.nouns.emplace_back();
    for (std::size_t i = 0; i < spec.nouns_per_category; ++i) lex.nouns[c].push_back(words.make(2, 3));
  }
  for (std::size_t i = 0; i < spec.num_names; ++i) lex.names.push_back(words.make(2, 4));
  std::vector<std::string> all{lex.the, lex.is,   lex.a,    lex.and_, lex.are,
                               lex.query, lex.kind, lex.copy, lex.done, lex.has};
  all.insert(all.end(), lex.names.begin(), lex.names.end());
  for (std::size_t c = 0; c < K; ++c) {
    all.push_back(lex.category[c]);
    all.push_back(lex.verb[c]);
    all.insert(all.end(), lex.nouns[c].begin(), lex.nouns[c].end());
  }
  for (const auto& w : all) {
    out.lexicon[w] = spec.mode == TargetMode::kScriptShift ? shift_letters(w, U'ა') : words.make(2, 3);
  }

  auto to_tgt = [&](std::string_view s) { return map_words(out.lexicon, s); };

  {
    Rng rng(derive_seed(spec.seed, kStreamBase));
    Grammar g(lex, rng);
    for (std::size_t i = 0; i < spec.base_sentences; ++i) out.base_sentences.push_back(g.sentence());
  }
  {
    Rng rng(derive_seed(spec.seed, kStreamBaseDocs));
    Grammar g(lex, rng);
    for (std::size_t i = 0; i < spec.base_docs; ++i) {
      out.base_docs.push_back(g.doc(spec.doc_min_sentences, spec.doc_max_sentences));
    }
  }
  {
    Rng rng(derive_seed(spec.seed, kStreamTarget));
    Grammar g(lex, rng);
    for (std::size_t i = 0; i < spec.target_sentences; ++i) out.target_sentences.push_back(to_tgt(g.sentence()));
  }
  {
    Rng rng(derive_seed(spec.seed, kStreamTargetDocs));
    Grammar g(lex, rng);
    for (std::size_t i = 0; i < spec.target_docs; ++i) {
      out.target_docs.push_back(to_tgt(g.doc(spec.doc_min_sentences, spec.doc_max_sentences)));
    }
  }
  {
    Rng rng(derive_seed(spec.seed, kStreamParallel));
    Grammar g(lex, rng);
    for (std::size_t i = 0; i < spec.parallel_pairs; ++i) {
      const auto s = g.sentence();
      out.parallel.push_back(s + " = " + to_tgt(s));
    }
  }
  {
    Rng rng(derive_seed(spec.seed, kStreamDistractor));
    WordMaker dwords(rng);
    std::vector<std::string> vocab;
    for (std::size_t i = 0; i < 60; ++i) vocab.push_back(shift_letters(dwords.make(1, 3), U'α'));
    for (std::size_t i = 0; i < spec.distractor_lines; ++i) {
      const std::size_t n = 4 + rng.below(5);
      std::string line;
      for (std::size_t k = 0; k < n; ++k) {
        if (k) line += ' ';
        line += vocab[rng.below(vocab.size())];
      }
      out.distractor.push_back(std::move(line));
    }
  }
  {
    Rng rng(derive_seed(spec.seed, kStreamInstruct));
    Grammar g(lex, rng);
    for (std::size_t i = 0; i < spec.instruct_examples; ++i) {
      if (rng.below(5) < 3) {
        const std::size_t c = rng.below(K);
        out.instruct.push_back(g.classification(c, g.noun(c)));
      } else {
        out.instruct.push_back(g.copy_task());
      }
    }
  }
  {
    Rng rng(derive_seed(spec.seed, kStreamEval));
    Grammar g(lex, rng);
    std::vector<EvalTask> base_tasks;
    const std::size_t total_nouns = K * spec.nouns_per_category;
    for (std::size_t i = 0; i < spec.eval_tasks_per_language; ++i) {
      const std::size_t c = (i % total_nouns) / spec.nouns_per_category;
      const std::string& n = lex.nouns[c][i % spec.nouns_per_category];
      std::vector<std::size_t> cats(K);
      for (std::size_t k = 0; k < K; ++k) cats[k] = k;
      rng.shuffle(cats);
      std::vector<std::size_t> chosen{c};
      for (std::size_t k : cats) {
        if (chosen.size() == 4) break;
        if (k != c) chosen.push_back(k);
      }
      rng.shuffle(chosen);
      EvalTask t;
      t.prompt = fmt::format("{} {} {}", lex.query, n, lex.kind);
      for (std::size_t k : chosen) t.options.push_back(lex.category[k]);
      t.answer_index = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), c) - chosen.begin());
      t.language = spec.base_language;
      base_tasks.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < spec.eval_tasks_per_language / 4; ++i) {
      const std::string line = g.copy_task();
      const auto done = line.find(" " + lex.done + " ");
      EvalTask t;
      t.prompt = line.substr(0, done + lex.done.size() + 1);
      t.reference = line.substr(done + lex.done.size() + 2);
      t.language = spec.base_language;
      base_tasks.push_back(std::move(t));
    }
    for (const auto& t : base_tasks) out.eval_tasks.push_back(t);
    for (const auto& t : base_tasks) {
      EvalTask x = t;
      x.prompt = to_tgt(t.prompt);
      for (auto& o : x.options) o = to_tgt(o);
      if (x.reference) x.reference = to_tgt(*x.reference);
      x.language = spec.target_language;
      out.eval_tasks.push_back(std::move(x));
    }
  }
  {
    Rng rng(derive_seed(spec.seed, kStreamHeldout));
    Grammar g(lex, rng);
    auto& base = out.heldout[spec.base_language];
    auto& target = out.heldout[spec.target_language];
    for (std::size_t i = 0; i < spec.heldout_lines; ++i) {
      const auto s = g.sentence();
      base.push_back(s);
      target.push_back(to_tgt(s));
    }
    for (std::size_t i = 0; i < spec.dev_lines; ++i) {
      const auto s = g.sentence();
      out.dev[spec.base_language].push_back(s);
      out.dev[spec.target_language].push_back(to_tgt(s));
    }
  }
  return out;
}

std::string to_target(const SyntheticCorpora& c, std::string_view base_text) {
  return map_words(c.lexicon, base_text);
}

std::string from_target(const SyntheticCorpora& c, std::string_view target_text) {
  std::map<std::string, std::string> inverse;
  for (const auto& [b, t] : c.lexicon) inverse[t] = b;
  return map_words(inverse, target_text);
}

std::vector<std::filesystem::path> write_synthetic(const SyntheticCorpora& c, const SyntheticLangSpec& spec,
                                                   const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  auto put = [&](const fs::path& rel, std::span<const std::string> lines) {
    const fs::path p = dir / rel;
    fs::create_directories(p.parent_path());
    write_lines(p, lines);
    files.push_back(p);
  };
  const auto& b = spec.base_language;
  const auto& t = spec.target_language;
  put(fs::path("corpus") / (b + ".sent.txt"), c.base_sentences);
  put(fs::path("corpus") / (b + ".doc.txt"), c.base_docs);
  put(fs::path("corpus") / (t + ".sent.txt"), c.target_sentences);
  put(fs::path("corpus") / (t + ".doc.txt"), c.target_docs);
  put(fs::path("corpus") / (b + "-" + t + ".sent.txt"), c.parallel);
  put(fs::path("distractor") / (spec.distractor_language + ".txt"), c.distractor);
  put(fs::path("instruct") / (b + ".txt"), c.instruct);
  for (const auto& [lang, lines] : c.heldout) put(fs::path("eval") / (lang + ".heldout.txt"), lines);
  for (const auto& [lang, lines] : c.dev) put(fs::path("eval") / (lang + ".dev.txt"), lines);

  const fs::path tasks = dir / "eval" / "tasks.jsonl";
  save_eval_tasks(tasks, c.eval_tasks);
  files.push_back(tasks);

  const fs::path lex = dir / "lexicon.json";
  std::ofstream out(lex, std::ios::binary);
  if (!out) throw IoError("cannot write " + lex.string());
  out << nlohmann::json(c.lexicon).dump(1) << '\n';
  if (!out) throw IoError("write failed: " + lex.string());
  files.push_back(lex);
  return files;
}

}  // namespace graft
