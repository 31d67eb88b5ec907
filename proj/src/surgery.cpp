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

#include "graft/surgery.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "graft/error.hpp"
#include "graft/rng.hpp"

namespace graft {

SurgeryResult init_embeddings(const EmbeddingMatrix& donor_emb, const TokenizerModel& donor_tok,
                              const TokenizerModel& new_tok, Pooling pooling,
                              std::optional<std::size_t> target_dim) {
  if (donor_emb.vocab_size() != donor_tok.size() ||
      donor_emb.vocab_fingerprint != donor_tok.fingerprint()) {
    throw InvalidArgument("init_embeddings: donor embedding does not belong to the donor tokenizer");
  }
  const std::size_t d = donor_emb.dim();
  if (target_dim && *target_dim != d) {
    throw InvalidArgument(fmt::format("init_embeddings: donor dimension {} != target dimension {}", d,
                                      *target_dim));
  }
  SurgeryResult out;
  out.embedding.table = Tensor<float>(new_tok.size(), d);
  out.embedding.vocab_fingerprint = new_tok.fingerprint();
  out.report.provenance.resize(new_tok.size());
  for (std::size_t id = 0; id < new_tok.size(); ++id) {
    float* row = out.embedding.table.row(id);
    const std::string& bytes = new_tok.tokens()[id];
    if (const auto hit = donor_tok.find(bytes)) {
      const float* src = donor_emb.table.row(static_cast<std::size_t>(*hit));
      std::copy(src, src + d, row);
      out.report.provenance[id] = Provenance::kCopied;
      ++out.report.copied_count;
      continue;
    }
    const auto parts = donor_tok.encode_piece(bytes);
    if (parts.empty()) throw InvalidArgument("init_embeddings: empty decomposition for token " + std::to_string(id));
    const float* first = donor_emb.table.row(static_cast<std::size_t>(parts[0]));
    std::copy(first, first + d, row);
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const float* src = donor_emb.table.row(static_cast<std::size_t>(parts[k]));
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = pooling == Pooling::kAverage ? row[j] + src[j] : std::max(row[j], src[j]);
      }
    }
    if (pooling == Pooling::kAverage) {
      const auto n = static_cast<float>(parts.size());
      for (std::size_t j = 0; j < d; ++j) row[j] /= n;
    }
    out.report.provenance[id] = Provenance::kPooled;
    ++out.report.pooled_count;
  }
  out.report.overlap_fraction =
      static_cast<double>(out.report.copied_count) / static_cast<double>(new_tok.size());
  return out;
}

EmbeddingMatrix random_embeddings(const TokenizerModel& new_tok, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingMatrix e{Tensor<float>(new_tok.size(), dim), new_tok.fingerprint()};
  const double std = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& x : e.table.data) x = static_cast<float>(rng.normal() * std);
  return e;
}

Checkpoint compose(const Checkpoint& body_source, const EmbeddingMatrix& embedding_source,
                   std::optional<std::uint64_t> declared_fingerprint) {
  const std::size_t d = body_source.params.config.model_dim;
  if (embedding_source.dim() != d) {
    throw InvalidArgument(fmt::format("compose: embedding dimension {} does not match body dimension {}",
                                      embedding_source.dim(), d));
  }
  if (declared_fingerprint && *declared_fingerprint != embedding_source.vocab_fingerprint) {
    throw InvalidArgument(fmt::format("compose: embedding fingerprint {:016x} does not match tokenizer {:016x}",
                                      embedding_source.vocab_fingerprint, *declared_fingerprint));
  }
  Checkpoint out = body_source;
  out.params.embedding = embedding_source.table;
  out.params.config.vocab_size = embedding_source.vocab_size();
  out.vocab_fingerprint = embedding_source.vocab_fingerprint;
  return out;
}

}  // namespace graft
