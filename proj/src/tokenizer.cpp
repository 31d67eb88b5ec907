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

#include "graft/tokenizer.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "graft/error.hpp"
#include "graft/unicode.hpp"

namespace graft {

namespace {

// 0xFE never appears in UTF-8 text or in learned tokens, so these strings
// cannot collide with anything a corpus produces.
const std::string kSpecialBytes[kNumSpecials] = {"\xFE<pad>", "\xFE<bos>", "\xFE<eos>"};
const char* const kSpecialNames[kNumSpecials] = {"PAD", "BOS", "EOS"};

std::uint64_t pair_key(TokenId left, TokenId right) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
         static_cast<std::uint32_t>(right);
}

std::vector<std::string> base_tokens() {
  std::vector<std::string> tokens(kSpecialBytes, kSpecialBytes + kNumSpecials);
  for (int b = 0; b < 256; ++b) tokens.emplace_back(1, static_cast<char>(b));
  return tokens;
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw IoError("tokenizer file: malformed base64 token");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw IoError("tokenizer file: malformed base64 token");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the zero bytes that padding stands for.
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

}  // namespace

std::string_view to_string(EncodingMode mode) {
  return mode == EncodingMode::kMergeRank ? "MERGE_RANK" : "LONGEST_MATCH";
}

EncodingMode encoding_mode_from_string(std::string_view s) {
  if (s == "MERGE_RANK") return EncodingMode::kMergeRank;
  if (s == "LONGEST_MATCH") return EncodingMode::kLongestMatch;
  throw InvalidArgument("unknown encoding mode: " + std::string(s));
}

TokenizerModel TokenizerModel::base() {
  return TokenizerModel(base_tokens(), {}, EncodingMode::kMergeRank);
}

TokenizerModel::TokenizerModel(std::vector<std::string> tokens, std::vector<Merge> merges,
                               EncodingMode mode, bool truncated)
    : tokens_(std::move(tokens)), merges_(std::move(merges)), mode_(mode), truncated_(truncated) {
  if (tokens_.size() < kBaseVocabSize) {
    throw InvalidArgument("vocabulary must hold the 3 specials and 256 byte tokens");
  }
  const auto base = base_tokens();
  for (std::size_t i = 0; i < kBaseVocabSize; ++i) {
    if (tokens_[i] != base[i]) {
      throw InvalidArgument("ids 0..258 must be the specials followed by the 256 byte tokens");
    }
  }
  index_.reserve(tokens_.size());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty()) throw InvalidArgument("empty token at id " + std::to_string(i));
    if (!index_.emplace(t, static_cast<TokenId>(i)).second) {
      throw InvalidArgument("duplicate token at id " + std::to_string(i));
    }
    max_token_len_ = std::max(max_token_len_, t.size());
    const auto len = static_cast<std::uint32_t>(t.size());
    for (int s = 0; s < 32; s += 8) mix(static_cast<unsigned char>(len >> s));
    for (unsigned char c : t) mix(c);
  }
  fingerprint_ = h;

  if (mode_ == EncodingMode::kMergeRank) {
    for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
      const auto& [l, r] = merges_[rank];
      const auto li = find(l), ri = find(r), mi = find(l + r);
      if (!li || !ri || !mi || *li < kFirstByteToken || *ri < kFirstByteToken) {
        throw InvalidArgument("merge " + std::to_string(rank) + " is not closed over the vocabulary");
      }
      // A later duplicate of an earlier pair never fires; keep the first.
      merge_ranks_.try_emplace(pair_key(*li, *ri), static_cast<std::uint32_t>(rank), *mi);
    }
  }
}

std::optional<TokenId> TokenizerModel::find(std::string_view bytes) const {
  auto it = index_.find(std::string(bytes));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> pieces;
  if (text.empty()) return pieces;
  std::size_t start = 0;
  while (true) {
    const std::size_t sp = text.find(' ', start);
    std::string piece(1, kWordMarker);
    piece.append(text.substr(start, sp == std::string_view::npos ? sp : sp - start));
    pieces.push_back(std::move(piece));
    if (sp == std::string_view::npos) break;
    start = sp + 1;
  }
  return pieces;
}

std::vector<TokenId> TokenizerModel::encode_piece(std::string_view bytes) const {
  return mode_ == EncodingMode::kMergeRank ? encode_merge_rank(bytes) : encode_longest_match(bytes);
}

std::vector<TokenId> TokenizerModel::encode_merge_rank(std::string_view piece) const {
  std::vector<TokenId> syms;
  syms.reserve(piece.size());
  for (unsigned char c : piece) syms.push_back(kFirstByteToken + c);
  while (syms.size() > 1) {
    std::uint32_t best_rank = UINT32_MAX;
    TokenId best_left = 0, best_right = 0, merged = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = merge_ranks_.find(pair_key(syms[i], syms[i + 1]));
      if (it != merge_ranks_.end() && it->second.first < best_rank) {
        best_rank = it->second.first;
        best_left = syms[i];
        best_right = syms[i + 1];
        merged = it->second.second;
      }
    }
    if (best_rank == UINT32_MAX) break;
    std::vector<TokenId> next;
    next.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size();) {
      if (i + 1 < syms.size() && syms[i] == best_left && syms[i + 1] == best_right) {
        next.push_back(merged);
        i += 2;
      } else {
        next.push_back(syms[i++]);
      }
    }
    syms.swap(next);
  }
  return syms;
}

std::vector<TokenId> TokenizerModel::encode_longest_match(std::string_view piece) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  std::string probe;
  while (pos < piece.size()) {
    std::size_t len = std::min(max_token_len_, piece.size() - pos);
    for (; len > 1; --len) {
      probe.assign(piece.substr(pos, len));
      auto it = index_.find(probe);
      if (it != index_.end() && it->second >= kNumSpecials) {
        out.push_back(it->second);
        break;
      }
    }
    if (len <= 1) {
      out.push_back(kFirstByteToken + static_cast<unsigned char>(piece[pos]));
      len = 1;
    }
    pos += len;
  }
  return out;
}

std::vector<TokenId> TokenizerModel::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& piece : pretokenize(text)) {
    const auto part = encode_piece(piece);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

std::string TokenizerModel::decode(std::span<const TokenId> ids) const {
  std::string bytes;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw InvalidArgument("token id " + std::to_string(id) + " out of range for vocabulary of " +
                            std::to_string(tokens_.size()));
    }
    if (id < kNumSpecials) continue;
    bytes += tokens_[static_cast<std::size_t>(id)];
  }
  std::size_t start = (!bytes.empty() && bytes.front() == kWordMarker) ? 1 : 0;
  std::string out;
  out.reserve(bytes.size());
  for (std::size_t i = start; i < bytes.size(); ++i) {
    out.push_back(bytes[i] == kWordMarker ? ' ' : bytes[i]);
  }
  if (!unicode::is_valid_utf8(out)) return unicode::sanitize_utf8(out);
  return out;
}

std::string TokenizerModel::display(TokenId id) const {
  if (id >= 0 && id < kNumSpecials) return std::string("<") + kSpecialNames[id] + ">";
  std::string out;
  for (char c : token(id)) {
    if (c == kWordMarker) {
      out += "▁";
    } else {
      out.push_back(c);
    }
  }
  return unicode::sanitize_utf8(out);
}

std::vector<std::vector<TokenId>> encode_lines(const TokenizerModel& model,
                                               std::span<const std::string> lines) {
  std::unordered_map<std::string, std::vector<TokenId>> cache;
  std::vector<std::vector<TokenId>> out;
  out.reserve(lines.size());
  for (const auto& line : lines) {
    std::vector<TokenId> ids;
    for (auto& piece : pretokenize(line)) {
      auto it = cache.find(piece);
      if (it == cache.end()) {
        auto enc = model.encode_piece(piece);
        it = cache.emplace(std::move(piece), std::move(enc)).first;
      }
      ids.insert(ids.end(), it->second.begin(), it->second.end());
    }
    out.push_back(std::move(ids));
  }
  return out;
}

// ---------------------------------------------------------------------------
// BPE training

namespace {

class BpeTrainer {
 public:
  explicit BpeTrainer(std::span<const std::string> corpus) : tokens_(base_tokens()) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& line : corpus) {
      for (auto& piece : pretokenize(line)) ++counts[std::move(piece)];
    }
    for (const auto& [word, count] : counts) {
      Word w;
      w.count = count;
      for (unsigned char c : word) w.syms.push_back(kFirstByteToken + c);
      words_.push_back(std::move(w));
    }
    for (std::uint32_t wi = 0; wi < words_.size(); ++wi) add_word_pairs(wi);
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      index_.emplace(tokens_[i], static_cast<TokenId>(i));
    }
  }

  TokenizerModel run(std::size_t target) {
    while (tokens_.size() < target && !queue_.empty()) {
      const Entry best = *queue_.begin();
      const TokenId left = static_cast<TokenId>(best.key >> 32);
      const TokenId right = static_cast<TokenId>(best.key & 0xFFFFFFFFu);
      std::string merged = tokens_[left] + tokens_[right];
      TokenId id;
      if (auto it = index_.find(merged); it != index_.end()) {
        id = it->second;
      } else {
        id = static_cast<TokenId>(tokens_.size());
        tokens_.push_back(merged);
        index_.emplace(std::move(merged), id);
      }
      merges_.emplace_back(tokens_[left], tokens_[right]);
      apply(best.key, left, right, id);
    }
    const bool truncated = tokens_.size() < target;
    return TokenizerModel(std::move(tokens_), std::move(merges_), EncodingMode::kMergeRank, truncated);
  }

 private:
  struct Word {
    std::vector<TokenId> syms;
    std::uint64_t count = 0;
  };
  struct Entry {
    std::uint64_t count;
    std::uint64_t key;
  };
  struct EntryLess {
    const std::vector<std::string>* tokens;
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.count != b.count) return a.count > b.count;
      if (a.key == b.key) return false;
      const auto& al = (*tokens)[a.key >> 32];
      const auto& bl = (*tokens)[b.key >> 32];
      if (al != bl) return al < bl;
      return (*tokens)[a.key & 0xFFFFFFFFu] < (*tokens)[b.key & 0xFFFFFFFFu];
    }
  };

  void adjust(std::uint64_t key, std::int64_t delta) {
    auto& c = counts_[key];
    if (c > 0) queue_.erase(Entry{c, key});
    c = static_cast<std::uint64_t>(static_cast<std::int64_t>(c) + delta);
    if (c > 0) queue_.insert(Entry{c, key});
  }

  void add_word_pairs(std::uint32_t wi) {
    const auto& w = words_[wi];
    for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
      const auto key = pair_key(w.syms[i], w.syms[i + 1]);
      adjust(key, static_cast<std::int64_t>(w.count));
      where_[key].insert(wi);
    }
  }

  void remove_word_pairs(std::uint32_t wi) {
    const auto& w = words_[wi];
    for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
      adjust(pair_key(w.syms[i], w.syms[i + 1]), -static_cast<std::int64_t>(w.count));
    }
  }

  void apply(std::uint64_t key, TokenId left, TokenId right, TokenId id) {
    auto node = where_.extract(key);
    if (node.empty()) return;
    std::vector<std::uint32_t> affected(node.mapped().begin(), node.mapped().end());
    std::sort(affected.begin(), affected.end());
    for (std::uint32_t wi : affected) {
      auto& syms = words_[wi].syms;
      remove_word_pairs(wi);
      std::vector<TokenId> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          next.push_back(id);
          i += 2;
        } else {
          next.push_back(syms[i++]);
        }
      }
      syms.swap(next);
      add_word_pairs(wi);
    }
    // Stale word lists for the merged pair are dropped; any pair that
    // reappears is re-registered by add_word_pairs.
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<Merge> merges_;
  std::vector<Word> words_;
  std::unordered_map<std::uint64_t, std::uint64_t> counts_;
  std::unordered_map<std::uint64_t, std::unordered_set<std::uint32_t>> where_;
  std::set<Entry, EntryLess> queue_{EntryLess{&tokens_}};
};

}  // namespace

TokenizerModel train_bpe(std::span<const std::string> corpus, std::size_t target_vocab_size) {
  if (corpus.empty()) throw InvalidArgument("train_bpe: empty corpus");
  if (target_vocab_size < kBaseVocabSize) {
    throw InvalidArgument("train_bpe: target vocabulary size must be at least 259");
  }
  return BpeTrainer(corpus).run(target_vocab_size);
}

// ---------------------------------------------------------------------------
// Prune / extend

bool is_latin_only_token(std::string_view bytes) {
  std::string text(bytes);
  std::replace(text.begin(), text.end(), kWordMarker, ' ');
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto cp = unicode::decode_one(text, pos);
    if (!cp || unicode::is_non_latin_alpha(*cp)) return false;
  }
  return true;
}

std::vector<std::string> prune_to_english(const TokenizerModel& model,
                                          std::span<const std::string> english_corpus,
                                          std::size_t min_count) {
  if (english_corpus.empty()) throw InvalidArgument("prune_to_english: empty corpus");
  std::vector<std::size_t> seen(model.size(), 0);
  for (const auto& ids : encode_lines(model, english_corpus)) {
    for (TokenId id : ids) ++seen[static_cast<std::size_t>(id)];
  }
  std::vector<std::string> retained;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const bool base = i < kBaseVocabSize;
    if (base || (seen[i] >= min_count && is_latin_only_token(model.tokens()[i]))) {
      retained.push_back(model.tokens()[i]);
    }
  }
  return retained;
}

TokenizerModel extend(std::span<const std::string> retained, const TokenizerModel& multilingual,
                      std::size_t target_size) {
  if (target_size < kBaseVocabSize) {
    throw InvalidArgument("extend: target size must be at least 259");
  }
  std::vector<std::string> tokens = base_tokens();
  std::unordered_set<std::string> present(tokens.begin(), tokens.end());
  auto take = [&](const std::string& t) {
    if (tokens.size() < target_size && present.insert(t).second) tokens.push_back(t);
  };
  for (const auto& t : retained) take(t);
  for (const auto& t : multilingual.tokens()) take(t);
  const bool truncated = tokens.size() < target_size;
  return TokenizerModel(std::move(tokens), {}, EncodingMode::kLongestMatch, truncated);
}

// ---------------------------------------------------------------------------
// Measurement

std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

FertilityReport fertility(const TokenizerModel& model, std::span<const TaggedText> corpus,
                          const TokenizerModel* reference) {
  if (corpus.empty()) throw InvalidArgument("fertility: empty corpus");
  std::map<std::string, std::vector<std::string>> by_lang;
  for (const auto& [lang, text] : corpus) by_lang[lang].push_back(text);
  FertilityReport report;
  for (const auto& [lang, lines] : by_lang) {
    LanguageFertility f;
    for (const auto& line : lines) f.word_count += count_words(line);
    if (f.word_count == 0) {
      report.excluded.push_back(lang);
      continue;
    }
    for (const auto& ids : encode_lines(model, lines)) f.token_count += ids.size();
    f.fertility = static_cast<double>(f.token_count) / static_cast<double>(f.word_count);
    if (reference != nullptr) {
      std::size_t ref = 0;
      for (const auto& ids : encode_lines(*reference, lines)) ref += ids.size();
      f.reference_token_count = ref;
      f.compression_ratio = static_cast<double>(ref) / static_cast<double>(f.token_count);
    }
    report.languages.emplace(lang, f);
  }
  return report;
}

double overlap(const TokenizerModel& a, const TokenizerModel& b, OverlapScope scope) {
  const std::size_t skip = scope == OverlapScope::kNonBase ? kBaseVocabSize : 0;
  if (a.size() <= skip) return 0.0;
  std::size_t shared = 0;
  for (std::size_t i = skip; i < a.size(); ++i) {
    const auto id = b.find(a.tokens()[i]);
    if (id && static_cast<std::size_t>(*id) >= skip) ++shared;
  }
  return static_cast<double>(shared) / static_cast<double>(a.size() - skip);
}

// ---------------------------------------------------------------------------
// Serialization

std::string to_json_string(const TokenizerModel& model) {
  nlohmann::json j;
  j["version"] = 1;
  j["encoding_mode"] = to_string(model.mode());
  j["specials"] = {{"PAD", kPad}, {"BOS", kBos}, {"EOS", kEos}};
  j["truncated"] = model.truncated();
  auto& toks = j["tokens"] = nlohmann::json::array();
  for (const auto& t : model.tokens()) toks.push_back(base64_encode(t));
  auto& merges = j["merges"] = nlohmann::json::array();
  for (const auto& [l, r] : model.merges()) {
    merges.push_back({base64_encode(l), base64_encode(r)});
  }
  return j.dump();
}

TokenizerModel tokenizer_from_json_string(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("tokenizer file: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != 1) throw IoError("tokenizer file: unsupported version");
    const auto& specials = j.at("specials");
    if (specials.at("PAD") != kPad || specials.at("BOS") != kBos || specials.at("EOS") != kEos) {
      throw IoError("tokenizer file: specials must occupy ids 0,1,2");
    }
    std::vector<std::string> tokens;
    for (const auto& t : j.at("tokens")) tokens.push_back(base64_decode(t.get<std::string>()));
    std::vector<Merge> merges;
    for (const auto& m : j.at("merges")) {
      merges.emplace_back(base64_decode(m.at(0).get<std::string>()),
                          base64_decode(m.at(1).get<std::string>()));
    }
    return TokenizerModel(std::move(tokens), std::move(merges),
                          encoding_mode_from_string(j.at("encoding_mode").get<std::string>()),
                          j.value("truncated", false));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("tokenizer file: ") + e.what());
  }
}

void save_tokenizer(const TokenizerModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json_string(model);
  if (!out) throw IoError("write failed: " + path.string());
}

TokenizerModel load_tokenizer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return tokenizer_from_json_string(ss.str());
}

}  // namespace graft
