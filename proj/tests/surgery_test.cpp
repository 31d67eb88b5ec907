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

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "graft/error.hpp"
#include "graft/surgery.hpp"

namespace graft {
namespace {

EmbeddingMatrix random_table(const TokenizerModel& tok, std::size_t d, std::uint64_t seed) {
  return random_embeddings(tok, d, seed);
}

TokenizerModel longest_match_with(const std::vector<std::string>& extra) {
  std::vector<std::string> tokens = TokenizerModel::base().tokens();
  tokens.insert(tokens.end(), extra.begin(), extra.end());
  return TokenizerModel(tokens, {}, EncodingMode::kLongestMatch);
}

TEST(InitEmbeddings, IdentityCopiesEverything) {
  const auto tok = train_bpe(std::vector<std::string>{"one two three two one"}, 280);
  const auto donor = random_table(tok, 6, 1);
  const auto r = init_embeddings(donor, tok, tok, Pooling::kAverage);
  EXPECT_EQ(r.embedding, donor);
  EXPECT_EQ(r.report.pooled_count, 0u);
  EXPECT_EQ(r.report.copied_count, tok.size());
  EXPECT_DOUBLE_EQ(r.report.overlap_fraction, 1.0);
}

TEST(InitEmbeddings, AverageAndMaxOfTwoParts) {
  const auto donor_tok = TokenizerModel::base();
  EmbeddingMatrix donor{Tensor<float>(donor_tok.size(), 2), donor_tok.fingerprint()};
  donor.table.row(kFirstByteToken + 'a')[0] = 1.0f;
  donor.table.row(kFirstByteToken + 'b')[1] = 1.0f;
  const auto new_tok = longest_match_with({"ab"});
  const auto id = static_cast<std::size_t>(*new_tok.find("ab"));

  const auto avg = init_embeddings(donor, donor_tok, new_tok, Pooling::kAverage);
  EXPECT_EQ(avg.embedding.table.row(id)[0], 0.5f);
  EXPECT_EQ(avg.embedding.table.row(id)[1], 0.5f);
  EXPECT_EQ(avg.report.provenance[id], Provenance::kPooled);
  EXPECT_EQ(avg.report.pooled_count, 1u);

  const auto mx = init_embeddings(donor, donor_tok, new_tok, Pooling::kMax);
  EXPECT_EQ(mx.embedding.table.row(id)[0], 1.0f);
  EXPECT_EQ(mx.embedding.table.row(id)[1], 1.0f);
}

TEST(InitEmbeddings, RowsMatchIndependentRecomputation) {
  const std::vector<std::string> en{"the cat sat on the mat", "the dog ate the bone"};
  const std::vector<std::string> mixed{"the cat \xE1\x83\x90\xE1\x83\x91 the mat", "bone \xE1\x83\x92 dog"};
  const auto donor_tok = train_bpe(en, 300);
  const auto multi = train_bpe(mixed, 320);
  const auto new_tok = extend(prune_to_english(donor_tok, en), multi, 330);
  const auto donor = random_table(donor_tok, 5, 3);
  for (auto pooling : {Pooling::kAverage, Pooling::kMax}) {
    const auto r = init_embeddings(donor, donor_tok, new_tok, pooling);
    ASSERT_EQ(r.embedding.vocab_size(), new_tok.size());
    EXPECT_EQ(r.embedding.vocab_fingerprint, new_tok.fingerprint());
    EXPECT_EQ(r.report.copied_count + r.report.pooled_count, new_tok.size());
    EXPECT_DOUBLE_EQ(r.report.overlap_fraction, overlap(new_tok, donor_tok));
    EXPECT_GT(r.report.pooled_count, 0u);
    for (std::size_t id = 0; id < new_tok.size(); ++id) {
      const auto& bytes = new_tok.tokens()[id];
      const float* got = r.embedding.table.row(id);
      if (auto hit = donor_tok.find(bytes)) {
        EXPECT_EQ(r.report.provenance[id], Provenance::kCopied);
        for (std::size_t j = 0; j < 5; ++j) ASSERT_EQ(got[j], donor.table.row(std::size_t(*hit))[j]);
        continue;
      }
      EXPECT_EQ(r.report.provenance[id], Provenance::kPooled);
      const auto parts = donor_tok.encode_piece(bytes);
      for (std::size_t j = 0; j < 5; ++j) {
        float acc = donor.table.row(std::size_t(parts[0]))[j];
        for (std::size_t k = 1; k < parts.size(); ++k) {
          const float x = donor.table.row(std::size_t(parts[k]))[j];
          acc = pooling == Pooling::kAverage ? acc + x : (x > acc ? x : acc);
        }
        if (pooling == Pooling::kAverage) acc /= float(parts.size());
        ASSERT_EQ(got[j], acc) << "token " << id << " dim " << j;
      }
    }
  }
}

TEST(InitEmbeddings, RejectsMismatches) {
  const auto tok = TokenizerModel::base();
  const auto donor = random_table(tok, 4, 1);
  EXPECT_THROW(init_embeddings(donor, tok, tok, Pooling::kAverage, 8), InvalidArgument);
  const auto other = longest_match_with({"zz"});
  EXPECT_THROW(init_embeddings(donor, other, tok, Pooling::kAverage), InvalidArgument);
}

TEST(Compose, IdentityComposition) {
  auto body = Checkpoint{init_model(testing::micro_config(), 1), 77};
  inject_lora(body.params, 2, 2.0, 3);
  const auto copy = body;
  const auto out = compose(body, body.embedding(), 77);
  EXPECT_EQ(out, body);
  EXPECT_EQ(body, copy);
}

TEST(Compose, SwapsOnlyTheEmbedding) {
  const Checkpoint body{init_model(testing::micro_config(), 1), 77};
  const auto new_tok = longest_match_with({"aa", "bb"});
  const auto emb = random_table(new_tok, 8, 5);
  const auto emb_copy = emb;
  const auto body_copy = body;
  const auto out = compose(body, emb, new_tok.fingerprint());
  EXPECT_EQ(out.params.layers, body.params.layers);
  EXPECT_EQ(out.params.final_norm, body.params.final_norm);
  EXPECT_EQ(out.embedding(), emb);
  EXPECT_EQ(out.params.config.vocab_size, new_tok.size());
  EXPECT_EQ(body, body_copy);
  EXPECT_EQ(emb, emb_copy);

  auto ids = new_tok.encode("aa bb ab");
  ids.insert(ids.begin(), kEos);
  const std::vector<std::vector<TokenId>> rows{ids};
  const auto logits = forward(out.params, TokenBatch::from_rows(rows));
  for (float x : logits.data) ASSERT_TRUE(std::isfinite(x));
}

TEST(Compose, RejectsDimensionAndFingerprintMismatch) {
  auto cfg = testing::micro_config();
  cfg.model_dim = 16;
  const Checkpoint body{init_model(cfg, 1), 77};
  const auto tok = TokenizerModel::base();
  EXPECT_THROW(compose(body, random_table(tok, 8, 1), tok.fingerprint()), InvalidArgument);
  EXPECT_THROW(compose(body, random_table(tok, 16, 1), tok.fingerprint() + 1), InvalidArgument);
}

}  // namespace
}  // namespace graft
