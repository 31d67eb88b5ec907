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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace graft {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kNumSpecials = 3;
inline constexpr TokenId kFirstByteToken = kNumSpecials;
inline constexpr std::size_t kBaseVocabSize = kNumSpecials + 256;

// Byte that stands for a space in front of every pre-tokenized word. 0xFF
// never occurs in well-formed UTF-8, so it cannot clash with text bytes.
inline constexpr char kWordMarker = '\xFF';

enum class EncodingMode { kMergeRank, kLongestMatch };

std::string_view to_string(EncodingMode mode);
EncodingMode encoding_mode_from_string(std::string_view s);

using Merge = std::pair<std::string, std::string>;

// Ordered vocabulary of byte-string tokens. Ids 0..2 are PAD/BOS/EOS and ids
// 3..258 are the 256 single-byte tokens, so every input is encodable.
// Immutable after construction; safe to share across threads.
class TokenizerModel {
 public:
  // Specials and bytes only, merge-rank mode with no merges.
  static TokenizerModel base();

  // Validates the vocabulary invariants; throws InvalidArgument.
  TokenizerModel(std::vector<std::string> tokens, std::vector<Merge> merges, EncodingMode mode,
                 bool truncated = false);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<Merge>& merges() const { return merges_; }
  EncodingMode mode() const { return mode_; }
  // Set when training or extension ran out of candidates before reaching the
  // requested size.
  bool truncated() const { return truncated_; }

  std::optional<TokenId> find(std::string_view bytes) const;
  bool contains(std::string_view bytes) const { return find(bytes).has_value(); }

  // FNV-1a over the token list. Identifies the vocabulary an embedding
  // matrix belongs to.
  std::uint64_t fingerprint() const { return fingerprint_; }

  // No BOS/EOS are added.
  std::vector<TokenId> encode(std::string_view text) const;

  // Encode one pre-token as-is (no marker is added).
  std::vector<TokenId> encode_piece(std::string_view bytes) const;

  std::string decode(std::span<const TokenId> ids) const;

  // Bytes of a token with word markers rendered as spaces. Specials render
  // as their names.
  std::string display(TokenId id) const;

 private:
  std::vector<TokenId> encode_merge_rank(std::string_view piece) const;
  std::vector<TokenId> encode_longest_match(std::string_view piece) const;

  std::vector<std::string> tokens_;
  std::vector<Merge> merges_;
  EncodingMode mode_;
  bool truncated_;
  std::unordered_map<std::string, TokenId> index_;
  // (left id << 32 | right id) -> (rank, merged id)
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, TokenId>> merge_ranks_;
  std::size_t max_token_len_ = 1;
  std::uint64_t fingerprint_ = 0;
};

// Split text at spaces; each piece, including the first, gets a marker.
// Empty text yields no pieces.
std::vector<std::string> pretokenize(std::string_view text);

// Encode many lines, caching per-word encodings within the call.
std::vector<std::vector<TokenId>> encode_lines(const TokenizerModel& model,
                                               std::span<const std::string> lines);

// Byte-level BPE. Merges are chosen by highest pair frequency, ties broken by
// the lexicographically smaller left byte-string, then right byte-string.
TokenizerModel train_bpe(std::span<const std::string> corpus, std::size_t target_vocab_size);

// Tokens of `model` that the English corpus actually produces at least
// `min_count` times and that carry no non-Latin letters. Specials and byte
// tokens are always kept. Preference order is preserved.
std::vector<std::string> prune_to_english(const TokenizerModel& model,
                                          std::span<const std::string> english_corpus,
                                          std::size_t min_count = 1);

// True if a token's text holds no letters outside the Latin script.
// Tokens that are not well-formed UTF-8 fail the check.
bool is_latin_only_token(std::string_view bytes);

// Longest-match vocabulary: specials, bytes, retained tokens, then the
// multilingual tokens, skipping duplicates, up to `target_size`.
TokenizerModel extend(std::span<const std::string> retained, const TokenizerModel& multilingual,
                      std::size_t target_size);

struct LanguageFertility {
  std::size_t token_count = 0;
  std::size_t word_count = 0;
  double fertility = 0.0;
  std::optional<std::size_t> reference_token_count;
  // reference tokens / model tokens
  std::optional<double> compression_ratio;
};

struct FertilityReport {
  std::map<std::string, LanguageFertility> languages;
  // Languages with no words; not present in `languages`.
  std::vector<std::string> excluded;
};

using TaggedText = std::pair<std::string, std::string>;

std::size_t count_words(std::string_view text);

FertilityReport fertility(const TokenizerModel& model, std::span<const TaggedText> corpus,
                          const TokenizerModel* reference = nullptr);

enum class OverlapScope { kAll, kNonBase };

// |tokens(a) ∩ tokens(b)| / |tokens(a)| by byte-string equality. kNonBase
// ignores specials and byte tokens on both sides.
double overlap(const TokenizerModel& a, const TokenizerModel& b,
               OverlapScope scope = OverlapScope::kAll);

void save_tokenizer(const TokenizerModel& model, const std::filesystem::path& path);
TokenizerModel load_tokenizer(const std::filesystem::path& path);

std::string to_json_string(const TokenizerModel& model);
TokenizerModel tokenizer_from_json_string(std::string_view json);

}  // namespace graft
