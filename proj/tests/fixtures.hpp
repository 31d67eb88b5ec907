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

// Helpers shared by the unit tests: scratch directories, small models and
// brute-force reference implementations.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "graft/model.hpp"
#include "graft/rng.hpp"
#include "graft/tokenizer.hpp"

namespace graft::testing {

// Removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("graft-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline ModelConfig micro_config(std::size_t vocab = 300) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.model_dim = 8;
  c.num_layers = 1;
  c.num_heads = 2;
  c.mlp_hidden = 16;
  c.max_seq_len = 16;
  return c;
}

inline ModelConfig small_config(std::size_t vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.model_dim = 16;
  c.num_layers = 2;
  c.num_heads = 2;
  c.mlp_hidden = 32;
  c.max_seq_len = 32;
  return c;
}

inline TokenBatch random_batch(std::size_t batch, std::size_t seq, std::size_t vocab, std::uint64_t seed,
                               TokenId lowest = 0) {
  Rng rng(seed);
  TokenBatch b;
  b.batch = batch;
  b.seq = seq;
  for (std::size_t i = 0; i < batch * seq; ++i) {
    b.ids.push_back(static_cast<TokenId>(lowest + static_cast<TokenId>(rng.below(vocab - lowest))));
    b.mask.push_back(1);
  }
  return b;
}

// Straightforward BPE: recount every pair of every word on each round.
// Same pre-tokenization and tie rule as the library trainer.
inline std::vector<Merge> naive_bpe_merges(const std::vector<std::string>& corpus, std::size_t target) {
  std::map<std::string, std::uint64_t> word_counts;
  for (const auto& line : corpus) {
    for (const auto& piece : pretokenize(line)) ++word_counts[piece];
  }
  std::vector<std::pair<std::vector<std::string>, std::uint64_t>> words;
  for (const auto& [w, n] : word_counts) {
    std::vector<std::string> syms;
    for (char c : w) syms.emplace_back(1, c);
    words.emplace_back(std::move(syms), n);
  }
  std::size_t vocab = kBaseVocabSize;
  std::vector<std::string> learned;
  std::vector<Merge> merges;
  while (vocab < target) {
    std::map<Merge, std::uint64_t> pairs;
    for (const auto& [syms, n] : words) {
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) pairs[{syms[i], syms[i + 1]}] += n;
    }
    if (pairs.empty()) break;
    const Merge* best = nullptr;
    std::uint64_t best_count = 0;
    for (const auto& [p, n] : pairs) {
      if (n > best_count) {
        best = &p;
        best_count = n;
      }
    }
    const Merge m = *best;
    merges.push_back(m);
    const std::string joined = m.first + m.second;
    const bool is_new = joined.size() > 1 &&
                        std::find(learned.begin(), learned.end(), joined) == learned.end();
    if (is_new) {
      learned.push_back(joined);
      ++vocab;
    }
    for (auto& [syms, n] : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == m.first && syms[i + 1] == m.second) {
          next.push_back(joined);
          i += 2;
        } else {
          next.push_back(syms[i++]);
        }
      }
      syms = std::move(next);
    }
  }
  return merges;
}

// Largest integer level L with sum(min(cap_i, L)) <= budget, by linear scan.
inline std::uint64_t water_level(const std::vector<std::uint64_t>& caps, std::uint64_t budget) {
  const std::uint64_t top = caps.empty() ? 0 : *std::max_element(caps.begin(), caps.end());
  std::uint64_t level = 0;
  for (std::uint64_t l = 0; l <= top; ++l) {
    std::uint64_t sum = 0;
    for (auto c : caps) sum += std::min(c, l);
    if (sum > budget) break;
    level = l;
  }
  return level;
}

// Cross-entropy of one logit row against `target`, computed in long double.
inline long double reference_nll(const float* logits, std::size_t vocab, std::size_t target) {
  long double mx = logits[0];
  for (std::size_t v = 1; v < vocab; ++v) mx = std::max<long double>(mx, logits[v]);
  long double z = 0;
  for (std::size_t v = 0; v < vocab; ++v) z += std::exp(static_cast<long double>(logits[v]) - mx);
  return -(static_cast<long double>(logits[target]) - mx - std::log(z));
}

inline std::string random_utf8(Rng& rng, std::size_t max_chars) {
  static const char32_t kRanges[][2] = {
      {0x00, 0x7F},       {0x80, 0x7FF},      {0x400, 0x4FF},    {0x10A0, 0x10FF},
      {0x3040, 0x30FF},   {0x4E00, 0x9FFF},   {0xE000, 0xFFFD},  {0x1F300, 0x1FAFF},
      {0x10000, 0x10FFFF}};
  std::string out;
  const std::size_t n = rng.below(max_chars + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = kRanges[rng.below(std::size(kRanges))];
    char32_t cp = r[0] + static_cast<char32_t>(rng.below(r[1] - r[0] + 1));
    if (cp >= 0xD800 && cp <= 0xDFFF) cp = 0x20;
    if (rng.below(5) == 0) cp = U' ';
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }
  return out;
}

}  // namespace graft::testing
