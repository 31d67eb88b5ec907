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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "graft/model.hpp"

namespace graft {

// V x d table tied to the tokenizer whose token list hashes to
// `vocab_fingerprint`.
struct EmbeddingMatrix {
  Tensor<float> table;
  std::uint64_t vocab_fingerprint = 0;

  std::size_t vocab_size() const { return table.rows; }
  std::size_t dim() const { return table.cols; }
  bool operator==(const EmbeddingMatrix&) const = default;
};

struct Checkpoint {
  ParameterStore<float> params;
  // Fingerprint of the tokenizer the embedding rows are indexed by.
  std::uint64_t vocab_fingerprint = 0;

  EmbeddingMatrix embedding() const { return {params.embedding, vocab_fingerprint}; }
  bool operator==(const Checkpoint&) const = default;
};

// Tensor file layout (all integers little-endian u32):
//   "GRFT" | version | meta length | meta JSON | tensor count
//   per tensor: header length | header JSON {name, shape, dtype, crc32} | f32 payload
//   trailing CRC32 of every preceding byte
struct TensorRecord {
  std::string name;
  Tensor<float> tensor;
};

struct TensorFile {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<TensorRecord> tensors;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
// Throws ChecksumError on truncation or CRC mismatch, IoError otherwise.
TensorFile read_tensor_file(const std::filesystem::path& path);

std::uint32_t file_crc32(const std::filesystem::path& path);

std::string fingerprint_hex(std::uint64_t fp);
std::uint64_t fingerprint_from_hex(const std::string& hex);

// Directory with config.json, embedding.bin, body.bin, optional lora.bin and
// manifest.json (fingerprint, per-file CRC32).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Replace one parameter group of `into` with the group stored in `dir`.
// Shapes must match; loading EMBEDDING also adopts the stored fingerprint.
void load_group(const std::filesystem::path& dir, ParamGroup group, Checkpoint& into);

void save_embedding(const EmbeddingMatrix& emb, const std::filesystem::path& path);
EmbeddingMatrix load_embedding(const std::filesystem::path& path);

}  // namespace graft
