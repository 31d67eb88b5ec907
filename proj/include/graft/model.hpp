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

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "graft/tokenizer.hpp"

namespace graft {

// Disjoint parameter partition. Training stages freeze and tune whole groups.
enum class ParamGroup { kEmbedding, kBody, kLora };

std::string_view to_string(ParamGroup g);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t model_dim = 0;
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t mlp_hidden = 0;
  std::size_t max_seq_len = 0;
  double rope_base = 10000.0;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return model_dim / num_heads; }
  // Throws InvalidArgument on zero dims, odd head dim or d % H != 0.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Row-major matrix; vectors are 1 x n.
template <typename T>
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T(0)) {}

  std::size_t size() const { return data.size(); }
  T* row(std::size_t i) { return data.data() + i * cols; }
  const T* row(std::size_t i) const { return data.data() + i * cols; }
  bool operator==(const Tensor&) const = default;
};

enum Projection : std::size_t { kQuery = 0, kKey = 1, kValue = 2, kOutput = 3 };
inline constexpr std::array<const char*, 4> kProjectionNames{"q", "k", "v", "o"};

template <typename T>
struct LayerParams {
  Tensor<T> attn_norm;                // 1 x d
  std::array<Tensor<T>, 4> attn;      // q, k, v, o projections, d x d (out x in)
  Tensor<T> mlp_norm;                 // 1 x d
  Tensor<T> mlp_up;                   // m x d
  Tensor<T> mlp_down;                 // d x m
  bool operator==(const LayerParams&) const = default;
};

template <typename T>
struct LoraPair {
  Tensor<T> a;  // r x d
  Tensor<T> b;  // d x r
  bool operator==(const LoraPair&) const = default;
};

template <typename T>
struct LoraParams {
  std::size_t rank = 0;
  double alpha = 0.0;
  std::vector<std::array<LoraPair<T>, 4>> layers;

  double scale() const { return alpha / static_cast<double>(rank); }
  bool operator==(const LoraParams&) const = default;
};

// All model parameters. The embedding doubles as the output projection; no
// separate head matrix exists.
template <typename T>
struct ParameterStore {
  ModelConfig config;
  Tensor<T> embedding;                  // EMBEDDING: V x d
  std::vector<LayerParams<T>> layers;   // BODY
  Tensor<T> final_norm;                 // BODY: 1 x d
  std::optional<LoraParams<T>> lora;    // LORA

  bool operator==(const ParameterStore&) const = default;
};

// Visits every tensor with a stable name and its group, in a fixed order.
template <typename T, typename F>
void for_each_tensor(ParameterStore<T>& p, F&& f) {
  f(std::string("embedding"), ParamGroup::kEmbedding, p.embedding);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layers." + std::to_string(l) + ".";
    f(pre + "attn_norm", ParamGroup::kBody, L.attn_norm);
    for (std::size_t i = 0; i < 4; ++i) {
      f(pre + "attn." + kProjectionNames[i], ParamGroup::kBody, L.attn[i]);
    }
    f(pre + "mlp_norm", ParamGroup::kBody, L.mlp_norm);
    f(pre + "mlp_up", ParamGroup::kBody, L.mlp_up);
    f(pre + "mlp_down", ParamGroup::kBody, L.mlp_down);
  }
  f(std::string("final_norm"), ParamGroup::kBody, p.final_norm);
  if (p.lora) {
    for (std::size_t l = 0; l < p.lora->layers.size(); ++l) {
      for (std::size_t i = 0; i < 4; ++i) {
        const std::string pre = "lora.layers." + std::to_string(l) + "." + kProjectionNames[i];
        f(pre + ".a", ParamGroup::kLora, p.lora->layers[l][i].a);
        f(pre + ".b", ParamGroup::kLora, p.lora->layers[l][i].b);
      }
    }
  }
}

template <typename T, typename F>
void for_each_tensor(const ParameterStore<T>& p, F&& f) {
  for_each_tensor(const_cast<ParameterStore<T>&>(p),
                  [&f](const std::string& name, ParamGroup g, Tensor<T>& t) {
                    f(name, g, static_cast<const Tensor<T>&>(t));
                  });
}

template <typename T>
std::size_t parameter_count(const ParameterStore<T>& p, std::optional<ParamGroup> group = {}) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, ParamGroup g, const Tensor<T>& t) {
    if (!group || *group == g) n += t.size();
  });
  return n;
}

// Same layout, all zeros (used for gradients and optimizer moments).
template <typename T>
ParameterStore<T> zeros_like(const ParameterStore<T>& p) {
  ParameterStore<T> z = p;
  for_each_tensor(z, [](const std::string&, ParamGroup, Tensor<T>& t) {
    std::fill(t.data.begin(), t.data.end(), T(0));
  });
  return z;
}

template <typename To, typename From>
ParameterStore<To> cast_store(const ParameterStore<From>& p) {
  ParameterStore<To> out;
  out.config = p.config;
  auto conv = [](const Tensor<From>& t) {
    Tensor<To> r(t.rows, t.cols);
    for (std::size_t i = 0; i < t.size(); ++i) r.data[i] = static_cast<To>(t.data[i]);
    return r;
  };
  out.embedding = conv(p.embedding);
  for (const auto& L : p.layers) {
    LayerParams<To> o;
    o.attn_norm = conv(L.attn_norm);
    for (std::size_t i = 0; i < 4; ++i) o.attn[i] = conv(L.attn[i]);
    o.mlp_norm = conv(L.mlp_norm);
    o.mlp_up = conv(L.mlp_up);
    o.mlp_down = conv(L.mlp_down);
    out.layers.push_back(std::move(o));
  }
  out.final_norm = conv(p.final_norm);
  if (p.lora) {
    LoraParams<To> lp;
    lp.rank = p.lora->rank;
    lp.alpha = p.lora->alpha;
    for (const auto& layer : p.lora->layers) {
      std::array<LoraPair<To>, 4> arr;
      for (std::size_t i = 0; i < 4; ++i) arr[i] = {conv(layer[i].a), conv(layer[i].b)};
      lp.layers.push_back(std::move(arr));
    }
    out.lora = std::move(lp);
  }
  return out;
}

// Scaled Gaussian weights, unit norm scales, no LoRA group.
ParameterStore<float> init_model(const ModelConfig& config, std::uint64_t seed);

// Row-major batch x seq ids with a mask (1 = real token, 0 = PAD).
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;

  static TokenBatch from_rows(std::span<const std::vector<TokenId>> rows);
};

// Logits, (batch*seq) x V, row-major.
template <typename T>
Tensor<T> forward(const ParameterStore<T>& params, const TokenBatch& batch);

struct LossSum {
  double total = 0.0;   // summed negative log-likelihood (nats)
  std::size_t count = 0;
};

// Next-token cross-entropy: logits at position t predict ids[t+1]; a
// position counts when both t and t+1 are unmasked.
template <typename T>
LossSum lm_loss_sum(const Tensor<T>& logits, const TokenBatch& batch);

// Mean of lm_loss_sum. Throws InvalidArgument when nothing is counted.
template <typename T>
double lm_loss(const Tensor<T>& logits, const TokenBatch& batch);

// Which gradients to accumulate. Frozen groups can skip their weight
// gradients; activations are always back-propagated.
struct GradRequest {
  bool embedding = true;
  bool body = true;
  bool lora = true;
  // Include the tied output-projection contribution to the embedding
  // gradient. Off leaves only the input-lookup path.
  bool embedding_head_path = true;
};

// Mean next-token loss and its gradient. `grads` must have the layout of
// `params` (see zeros_like); gradients are added to it.
template <typename T>
double loss_and_grad(const ParameterStore<T>& params, const TokenBatch& batch,
                     ParameterStore<T>& grads, const GradRequest& request = {});

// Adds A (seeded Gaussian) and B (zeros) to every attention projection.
template <typename T>
void inject_lora(ParameterStore<T>& params, std::size_t rank, double alpha, std::uint64_t seed);

// W <- W + (alpha/r) B A for every projection, then drops the LoRA group.
template <typename T>
void merge_lora(ParameterStore<T>& params);

// (alpha/r) B A for one projection, d x d.
template <typename T>
Tensor<T> lora_delta(const LoraParams<T>& lora, std::size_t layer, Projection proj);

}  // namespace graft
