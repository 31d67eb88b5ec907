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
#include <optional>
#include <vector>

#include "graft/checkpoint.hpp"
#include "graft/tokenizer.hpp"

namespace graft {

enum class Pooling { kAverage, kMax };

enum class Provenance : std::uint8_t { kCopied, kPooled };

struct SurgeryReport {
  std::size_t copied_count = 0;
  std::size_t pooled_count = 0;
  // |new ∩ donor| / |new|, identical to overlap(new_tok, donor_tok).
  double overlap_fraction = 0.0;
  std::vector<Provenance> provenance;  // one per new token id
};

struct SurgeryResult {
  EmbeddingMatrix embedding;
  SurgeryReport report;
};

// Rows for tokens the donor vocabulary already has are copied bit-for-bit;
// every other token is split with the donor tokenizer and its row is the
// element-wise mean (float32, summed left to right, then divided) or max of
// the donor sub-token rows. Matching is by byte-string, never by id.
// `target_dim`, when given, must equal the donor dimension.
SurgeryResult init_embeddings(const EmbeddingMatrix& donor_emb, const TokenizerModel& donor_tok,
                              const TokenizerModel& new_tok, Pooling pooling,
                              std::optional<std::size_t> target_dim = std::nullopt);

// Gaussian rows for `new_tok`; ablation baseline without donor knowledge.
EmbeddingMatrix random_embeddings(const TokenizerModel& new_tok, std::size_t dim, std::uint64_t seed);

// Body (and any LoRA) from `body_source`, embedding from `embedding_source`.
// Inputs are not modified. When `declared_fingerprint` is given the
// embedding must belong to that tokenizer.
Checkpoint compose(const Checkpoint& body_source, const EmbeddingMatrix& embedding_source,
                   std::optional<std::uint64_t> declared_fingerprint = std::nullopt);

}  // namespace graft
