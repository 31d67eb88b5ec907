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

#include "graft/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "graft/error.hpp"
#include "graft/kernels.hpp"
#include "graft/rng.hpp"

namespace graft {

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEmbedding: return "EMBEDDING";
    case ParamGroup::kBody: return "BODY";
    case ParamGroup::kLora: return "LORA";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (vocab_size == 0 || model_dim == 0 || num_layers == 0 || num_heads == 0 || mlp_hidden == 0 ||
      max_seq_len == 0) {
    throw InvalidArgument("model config: all dimensions must be at least 1");
  }
  if (model_dim % num_heads != 0) {
    throw InvalidArgument(fmt::format("model config: model_dim {} not divisible by num_heads {}",
                                      model_dim, num_heads));
  }
  if (head_dim() % 2 != 0) throw InvalidArgument("model config: rotary positions need an even head dim");
  if (!(rope_base > 1.0)) throw InvalidArgument("model config: rope_base must exceed 1");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size}, {"model_dim", c.model_dim},
                     {"num_layers", c.num_layers}, {"num_heads", c.num_heads},
                     {"mlp_hidden", c.mlp_hidden}, {"max_seq_len", c.max_seq_len},
                     {"rope_base", c.rope_base},   {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("model_dim").get_to(c.model_dim);
  j.at("num_layers").get_to(c.num_layers);
  j.at("num_heads").get_to(c.num_heads);
  j.at("mlp_hidden").get_to(c.mlp_hidden);
  j.at("max_seq_len").get_to(c.max_seq_len);
  c.rope_base = j.value("rope_base", 10000.0);
  c.seed = j.value("seed", std::uint64_t{0});
}

ParameterStore<float> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.model_dim, m = config.mlp_hidden;
  auto gaussian = [&rng](std::size_t rows, std::size_t cols, double std) {
    Tensor<float> t(rows, cols);
    for (auto& x : t.data) x = static_cast<float>(rng.normal() * std);
    return t;
  };
  auto ones = [](std::size_t n) {
    Tensor<float> t(1, n);
    std::fill(t.data.begin(), t.data.end(), 1.0f);
    return t;
  };
  ParameterStore<float> p;
  p.config = config;
  p.config.seed = seed;
  p.embedding = gaussian(config.vocab_size, d, 1.0 / std::sqrt(static_cast<double>(d)));
  const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double out_std = in_std / std::sqrt(2.0 * static_cast<double>(config.num_layers));
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    LayerParams<float> L;
    L.attn_norm = ones(d);
    for (std::size_t i = 0; i < 3; ++i) L.attn[i] = gaussian(d, d, in_std);
    L.attn[kOutput] = gaussian(d, d, out_std);
    L.mlp_norm = ones(d);
    L.mlp_up = gaussian(m, d, in_std);
    L.mlp_down = gaussian(d, m, 1.0 / std::sqrt(static_cast<double>(m)) /
                                    std::sqrt(2.0 * static_cast<double>(config.num_layers)));
    p.layers.push_back(std::move(L));
  }
  p.final_norm = ones(d);
  return p;
}

TokenBatch TokenBatch::from_rows(std::span<const std::vector<TokenId>> rows) {
  TokenBatch b;
  b.batch = rows.size();
  for (const auto& r : rows) b.seq = std::max(b.seq, r.size());
  b.ids.assign(b.batch * b.seq, kPad);
  b.mask.assign(b.batch * b.seq, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.seq));
    std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(i * b.seq), rows[i].size(), 1);
  }
  return b;
}

namespace {

constexpr double kRmsEps = 1e-6;

template <typename T>
struct LayerCache {
  std::vector<T> x_in, inv1, n1, h1;
  std::array<std::vector<T>, 4> proj;      // q, k (rotated), v, o
  std::array<std::vector<T>, 4> lora_mid;  // input * A^T per projection
  std::vector<T> probs, attn, x_mid, inv2, n2, h2, up, act;
};

template <typename T>
struct Cache {
  std::size_t B = 0, S = 0, N = 0;
  std::vector<T> cos, sin;
  std::vector<LayerCache<T>> layers;
  std::vector<T> x_final, inv_f, n_f, h_f;
};

template <typename T>
void rms_forward(const T* x, const T* g, std::size_t N, std::size_t d, T* inv, T* n, T* h) {
  for (std::size_t i = 0; i < N; ++i) {
    const T* xr = x + i * d;
    T ms = 0;
    for (std::size_t j = 0; j < d; ++j) ms += xr[j] * xr[j];
    ms /= static_cast<T>(d);
    const T iv = T(1) / std::sqrt(ms + static_cast<T>(kRmsEps));
    inv[i] = iv;
    for (std::size_t j = 0; j < d; ++j) {
      n[i * d + j] = xr[j] * iv;
      h[i * d + j] = n[i * d + j] * g[j];
    }
  }
}

// dx += d(rmsnorm)/dx^T dh; dg += sum over rows of dh * n (when dg given).
template <typename T>
void rms_backward(const T* dh, const T* n, const T* inv, const T* g, std::size_t N, std::size_t d,
                  T* dx, T* dg) {
  std::vector<T> dn(d);
  for (std::size_t i = 0; i < N; ++i) {
    const T* dhr = dh + i * d;
    const T* nr = n + i * d;
    T dot = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dn[j] = dhr[j] * g[j];
      dot += dn[j] * nr[j];
    }
    dot /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += inv[i] * (dn[j] - nr[j] * dot);
    if (dg != nullptr) {
      for (std::size_t j = 0; j < d; ++j) dg[j] += dhr[j] * nr[j];
    }
  }
}

template <typename T>
void linear_forward(const T* x, std::size_t N, const Tensor<T>& W, const LoraPair<T>* lora, T scale,
                    T* y, std::vector<T>& mid) {
  kernels::gemm_nt(N, W.rows, W.cols, x, W.data.data(), y, false);
  if (lora != nullptr) {
    const std::size_t r = lora->a.rows;
    mid.assign(N * r, T(0));
    kernels::gemm_nt(N, r, W.cols, x, lora->a.data.data(), mid.data(), false);
    std::vector<T> delta(N * W.rows);
    kernels::gemm_nt(N, W.rows, r, mid.data(), lora->b.data.data(), delta.data(), false);
    for (std::size_t i = 0; i < delta.size(); ++i) y[i] += scale * delta[i];
  }
}

// dx (+)= dy W + scale (dy B) A, with optional weight / adapter gradients.
template <typename T>
void linear_backward(const T* x, std::size_t N, const Tensor<T>& W, const LoraPair<T>* lora, T scale,
                     const std::vector<T>& mid, const T* dy, T* dx, bool accumulate_dx, Tensor<T>* dW,
                     LoraPair<T>* dlora) {
  const std::size_t out = W.rows, in = W.cols;
  kernels::gemm_nn(N, in, out, dy, W.data.data(), dx, accumulate_dx);
  if (dW != nullptr) kernels::gemm_tn(out, in, N, dy, x, dW->data.data(), true);
  if (lora != nullptr) {
    const std::size_t r = lora->a.rows;
    std::vector<T> dmid(N * r);
    kernels::gemm_nn(N, r, out, dy, lora->b.data.data(), dmid.data(), false);
    for (auto& v : dmid) v *= scale;
    kernels::gemm_nn(N, in, r, dmid.data(), lora->a.data.data(), dx, true);
    if (dlora != nullptr) {
      kernels::gemm_tn(r, in, N, dmid.data(), x, dlora->a.data.data(), true);
      std::vector<T> scaled(mid);
      for (auto& v : scaled) v *= scale;
      kernels::gemm_tn(out, r, N, dy, scaled.data(), dlora->b.data.data(), true);
    }
  }
}

template <typename T>
void rope_apply(T* x, std::size_t B, std::size_t S, std::size_t H, std::size_t dh, const T* cos,
                const T* sin, bool inverse) {
  const std::size_t half = dh / 2, d = H * dh;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < S; ++t) {
      T* row = x + (b * S + t) * d;
      for (std::size_t h = 0; h < H; ++h) {
        T* v = row + h * dh;
        for (std::size_t p = 0; p < half; ++p) {
          const T c = cos[t * half + p];
          const T s = inverse ? -sin[t * half + p] : sin[t * half + p];
          const T a = v[2 * p], bb = v[2 * p + 1];
          v[2 * p] = a * c - bb * s;
          v[2 * p + 1] = a * s + bb * c;
        }
      }
    }
  }
}

// tanh through one exp; cheaper than the library tanh and accurate to a few
// ulps away from zero.
template <typename T>
T fast_tanh(T x) {
  if (x > T(20)) return T(1);
  if (x < T(-20)) return T(-1);
  return T(1) - T(2) / (std::exp(T(2) * x) + T(1));
}

template <typename T>
T gelu(T u) {
  constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = static_cast<T>(0.044715);
  return T(0.5) * u * (T(1) + fast_tanh(c * (u + k * u * u * u)));
}

template <typename T>
T gelu_grad(T u) {
  constexpr T c = static_cast<T>(0.7978845608028654);
  constexpr T k = static_cast<T>(0.044715);
  const T t = fast_tanh(c * (u + k * u * u * u));
  return T(0.5) * (T(1) + t) + T(0.5) * u * (T(1) - t * t) * c * (T(1) + T(3) * k * u * u);
}

template <typename T>
void check_batch(const ParameterStore<T>& p, const TokenBatch& batch) {
  if (batch.ids.size() != batch.batch * batch.seq || batch.mask.size() != batch.ids.size()) {
    throw InvalidArgument("token batch: ids/mask size does not match batch x seq");
  }
  if (batch.seq > p.config.max_seq_len) {
    throw InvalidArgument(fmt::format("sequence length {} exceeds max_seq_len {}", batch.seq,
                                      p.config.max_seq_len));
  }
  for (TokenId id : batch.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= p.config.vocab_size) {
      throw InvalidArgument(fmt::format("token id {} out of range for vocabulary of {}", id,
                                        p.config.vocab_size));
    }
  }
}

template <typename T>
Tensor<T> run_forward(const ParameterStore<T>& p, const TokenBatch& batch, Cache<T>& c) {
  check_batch(p, batch);
  const auto& cfg = p.config;
  const std::size_t B = batch.batch, S = batch.seq, N = B * S;
  const std::size_t d = cfg.model_dim, H = cfg.num_heads, dh = cfg.head_dim(), m = cfg.mlp_hidden;
  const std::size_t V = cfg.vocab_size, half = dh / 2;
  c.B = B, c.S = S, c.N = N;
  c.cos.resize(S * half);
  c.sin.resize(S * half);
  for (std::size_t t = 0; t < S; ++t) {
    for (std::size_t q = 0; q < half; ++q) {
      const double freq = std::pow(cfg.rope_base, -2.0 * static_cast<double>(q) / static_cast<double>(dh));
      const double angle = static_cast<double>(t) * freq;
      c.cos[t * half + q] = static_cast<T>(std::cos(angle));
      c.sin[t * half + q] = static_cast<T>(std::sin(angle));
    }
  }
  const T emb_scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
  std::vector<T> x(N * d);
  for (std::size_t n = 0; n < N; ++n) {
    const T* e = p.embedding.row(static_cast<std::size_t>(batch.ids[n]));
    for (std::size_t j = 0; j < d; ++j) x[n * d + j] = e[j] * emb_scale;
  }
  const T lscale = p.lora ? static_cast<T>(p.lora->scale()) : T(0);
  const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  c.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    auto& lc = c.layers[l];
    auto lora_of = [&](std::size_t i) -> const LoraPair<T>* {
      return p.lora ? &p.lora->layers[l][i] : nullptr;
    };
    lc.x_in = x;
    lc.inv1.resize(N);
    lc.n1.resize(N * d);
    lc.h1.resize(N * d);
    rms_forward(x.data(), L.attn_norm.data.data(), N, d, lc.inv1.data(), lc.n1.data(), lc.h1.data());
    for (std::size_t i = 0; i < 3; ++i) {
      lc.proj[i].resize(N * d);
      linear_forward(lc.h1.data(), N, L.attn[i], lora_of(i), lscale, lc.proj[i].data(), lc.lora_mid[i]);
    }
    rope_apply(lc.proj[kQuery].data(), B, S, H, dh, c.cos.data(), c.sin.data(), false);
    rope_apply(lc.proj[kKey].data(), B, S, H, dh, c.cos.data(), c.sin.data(), false);

    lc.probs.assign(B * H * S * S, T(0));
    lc.attn.assign(N * d, T(0));
    const T* q = lc.proj[kQuery].data();
    const T* k = lc.proj[kKey].data();
    const T* v = lc.proj[kValue].data();
#pragma omp parallel for schedule(static)
    for (std::size_t bh = 0; bh < B * H; ++bh) {
      const std::size_t b = bh / H, h = bh % H;
      for (std::size_t i = 0; i < S; ++i) {
        T* prow = lc.probs.data() + (bh * S + i) * S;
        const T* qi = q + (b * S + i) * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          const T* kj = k + (b * S + j) * d + h * dh;
          T s = 0;
          for (std::size_t e = 0; e < dh; ++e) s += qi[e] * kj[e];
          prow[j] = s * att_scale;
          mx = std::max(mx, prow[j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          prow[j] = std::exp(prow[j] - mx);
          sum += prow[j];
        }
        T* oi = lc.attn.data() + (b * S + i) * d + h * dh;
        for (std::size_t j = 0; j <= i; ++j) {
          prow[j] /= sum;
          const T* vj = v + (b * S + j) * d + h * dh;
          for (std::size_t e = 0; e < dh; ++e) oi[e] += prow[j] * vj[e];
        }
      }
    }
    lc.proj[kOutput].resize(N * d);
    linear_forward(lc.attn.data(), N, L.attn[kOutput], lora_of(kOutput), lscale,
                   lc.proj[kOutput].data(), lc.lora_mid[kOutput]);
    for (std::size_t i = 0; i < N * d; ++i) x[i] += lc.proj[kOutput][i];
    lc.x_mid = x;

    lc.inv2.resize(N);
    lc.n2.resize(N * d);
    lc.h2.resize(N * d);
    rms_forward(x.data(), L.mlp_norm.data.data(), N, d, lc.inv2.data(), lc.n2.data(), lc.h2.data());
    lc.up.resize(N * m);
    lc.act.resize(N * m);
    kernels::gemm_nt(N, m, d, lc.h2.data(), L.mlp_up.data.data(), lc.up.data(), false);
    for (std::size_t i = 0; i < N * m; ++i) lc.act[i] = gelu(lc.up[i]);
    std::vector<T> down(N * d);
    kernels::gemm_nt(N, d, m, lc.act.data(), L.mlp_down.data.data(), down.data(), false);
    for (std::size_t i = 0; i < N * d; ++i) x[i] += down[i];
  }
  c.x_final = x;
  c.inv_f.resize(N);
  c.n_f.resize(N * d);
  c.h_f.resize(N * d);
  rms_forward(x.data(), p.final_norm.data.data(), N, d, c.inv_f.data(), c.n_f.data(), c.h_f.data());
  Tensor<T> logits(N, V);
  kernels::gemm_nt(N, V, d, c.h_f.data(), p.embedding.data.data(), logits.data.data(), false);
  return logits;
}

bool counted(const TokenBatch& batch, std::size_t b, std::size_t t) {
  return t + 1 < batch.seq && batch.mask[b * batch.seq + t] && batch.mask[b * batch.seq + t + 1];
}

}  // namespace

template <typename T>
Tensor<T> forward(const ParameterStore<T>& params, const TokenBatch& batch) {
  Cache<T> cache;
  return run_forward(params, batch, cache);
}

template <typename T>
LossSum lm_loss_sum(const Tensor<T>& logits, const TokenBatch& batch) {
  if (logits.rows != batch.batch * batch.seq) {
    throw InvalidArgument("lm_loss: logits rows do not match batch x seq");
  }
  LossSum out;
  const std::size_t V = logits.cols;
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t t = 0; t < batch.seq; ++t) {
      if (!counted(batch, b, t)) continue;
      const T* row = logits.row(b * batch.seq + t);
      double mx = -INFINITY;
      for (std::size_t v = 0; v < V; ++v) mx = std::max(mx, static_cast<double>(row[v]));
      double sum = 0;
      for (std::size_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(row[v]) - mx);
      const auto target = static_cast<std::size_t>(batch.ids[b * batch.seq + t + 1]);
      out.total += mx + std::log(sum) - static_cast<double>(row[target]);
      ++out.count;
    }
  }
  return out;
}

template <typename T>
double lm_loss(const Tensor<T>& logits, const TokenBatch& batch) {
  const auto s = lm_loss_sum(logits, batch);
  if (s.count == 0) throw InvalidArgument("lm_loss: every position is padded");
  return s.total / static_cast<double>(s.count);
}

template <typename T>
double loss_and_grad(const ParameterStore<T>& p, const TokenBatch& batch, ParameterStore<T>& grads,
                     const GradRequest& req) {
  if (p.lora.has_value() != grads.lora.has_value() || grads.layers.size() != p.layers.size()) {
    throw InvalidArgument("loss_and_grad: gradient store layout differs from parameters");
  }
  Cache<T> c;
  Tensor<T> logits = run_forward(p, batch, c);
  const auto& cfg = p.config;
  const std::size_t N = c.N, d = cfg.model_dim, H = cfg.num_heads, dh = cfg.head_dim();
  const std::size_t m = cfg.mlp_hidden, V = cfg.vocab_size, S = c.S, B = c.B;

  std::size_t count = 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < S; ++t) count += counted(batch, b, t);
  }
  if (count == 0) throw InvalidArgument("loss_and_grad: every position is padded");

  // Logits become d(loss)/d(logits) in place.
  const T inv_count = static_cast<T>(1.0 / static_cast<double>(count));
  std::vector<double> row_loss(N, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t b = n / S, t = n % S;
    T* row = logits.row(n);
    if (!counted(batch, b, t)) {
      std::fill(row, row + V, T(0));
      continue;
    }
    const auto target = static_cast<std::size_t>(batch.ids[n + 1]);
    const T target_logit = row[target];
    T mx = row[0];
    for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, row[v]);
    double sum = 0;
    for (std::size_t v = 0; v < V; ++v) {
      row[v] = std::exp(row[v] - mx);
      sum += static_cast<double>(row[v]);
    }
    row_loss[n] = static_cast<double>(mx) + std::log(sum) - static_cast<double>(target_logit);
    const T norm = static_cast<T>(1.0 / sum) * inv_count;
    for (std::size_t v = 0; v < V; ++v) row[v] *= norm;
    row[target] -= inv_count;
  }
  double loss = 0;
  for (double l : row_loss) loss += l;
  loss /= static_cast<double>(count);

  // Head.
  std::vector<T> dh_f(N * d);
  kernels::gemm_nn(N, d, V, logits.data.data(), p.embedding.data.data(), dh_f.data(), false);
  if (req.embedding && req.embedding_head_path) {
    kernels::gemm_tn(V, d, N, logits.data.data(), c.h_f.data(), grads.embedding.data.data(), true);
  }
  std::vector<T> dx(N * d, T(0));
  rms_backward(dh_f.data(), c.n_f.data(), c.inv_f.data(), p.final_norm.data.data(), N, d, dx.data(),
               req.body ? grads.final_norm.data.data() : nullptr);

  const T lscale = p.lora ? static_cast<T>(p.lora->scale()) : T(0);
  const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& L = p.layers[li];
    auto& G = grads.layers[li];
    const auto& lc = c.layers[li];
    auto lora_of = [&](std::size_t i) -> const LoraPair<T>* {
      return p.lora ? &p.lora->layers[li][i] : nullptr;
    };
    auto dlora_of = [&](std::size_t i) -> LoraPair<T>* {
      return (p.lora && req.lora) ? &grads.lora->layers[li][i] : nullptr;
    };

    // MLP.
    if (req.body) {
      kernels::gemm_tn(d, m, N, dx.data(), lc.act.data(), G.mlp_down.data.data(), true);
    }
    std::vector<T> dup(N * m);
    kernels::gemm_nn(N, m, d, dx.data(), L.mlp_down.data.data(), dup.data(), false);
    for (std::size_t i = 0; i < N * m; ++i) dup[i] *= gelu_grad(lc.up[i]);
    if (req.body) {
      kernels::gemm_tn(m, d, N, dup.data(), lc.h2.data(), G.mlp_up.data.data(), true);
    }
    std::vector<T> dh2(N * d);
    kernels::gemm_nn(N, d, m, dup.data(), L.mlp_up.data.data(), dh2.data(), false);
    rms_backward(dh2.data(), lc.n2.data(), lc.inv2.data(), L.mlp_norm.data.data(), N, d, dx.data(),
                 req.body ? G.mlp_norm.data.data() : nullptr);

    // Attention output projection.
    std::vector<T> dattn(N * d);
    linear_backward(lc.attn.data(), N, L.attn[kOutput], lora_of(kOutput), lscale, lc.lora_mid[kOutput],
                    dx.data(), dattn.data(), false, req.body ? &G.attn[kOutput] : nullptr,
                    dlora_of(kOutput));

    std::array<std::vector<T>, 3> dqkv;
    for (auto& v : dqkv) v.assign(N * d, T(0));
    const T* q = lc.proj[kQuery].data();
    const T* k = lc.proj[kKey].data();
    const T* v = lc.proj[kValue].data();
#pragma omp parallel for schedule(static)
    for (std::size_t bh = 0; bh < B * H; ++bh) {
      const std::size_t b = bh / H, h = bh % H;
      std::vector<T> dp(S);
      for (std::size_t i = 0; i < S; ++i) {
        const T* prow = lc.probs.data() + (bh * S + i) * S;
        const std::size_t ri = (b * S + i) * d + h * dh;
        const T* doi = dattn.data() + ri;
        T dot = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          const std::size_t rj = (b * S + j) * d + h * dh;
          T s = 0;
          for (std::size_t e = 0; e < dh; ++e) {
            s += doi[e] * v[rj + e];
            dqkv[kValue][rj + e] += prow[j] * doi[e];
          }
          dp[j] = s;
          dot += prow[j] * s;
        }
        for (std::size_t j = 0; j <= i; ++j) {
          const std::size_t rj = (b * S + j) * d + h * dh;
          const T ds = prow[j] * (dp[j] - dot) * att_scale;
          for (std::size_t e = 0; e < dh; ++e) {
            dqkv[kQuery][ri + e] += ds * k[rj + e];
            dqkv[kKey][rj + e] += ds * q[ri + e];
          }
        }
      }
    }
    rope_apply(dqkv[kQuery].data(), B, S, H, dh, c.cos.data(), c.sin.data(), true);
    rope_apply(dqkv[kKey].data(), B, S, H, dh, c.cos.data(), c.sin.data(), true);

    std::vector<T> dh1(N * d, T(0));
    for (std::size_t i = 0; i < 3; ++i) {
      linear_backward(lc.h1.data(), N, L.attn[i], lora_of(i), lscale, lc.lora_mid[i], dqkv[i].data(),
                      dh1.data(), true, req.body ? &G.attn[i] : nullptr, dlora_of(i));
    }
    rms_backward(dh1.data(), lc.n1.data(), lc.inv1.data(), L.attn_norm.data.data(), N, d, dx.data(),
                 req.body ? G.attn_norm.data.data() : nullptr);
  }

  if (req.embedding) {
    const T emb_scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
    for (std::size_t n = 0; n < N; ++n) {
      T* g = grads.embedding.row(static_cast<std::size_t>(batch.ids[n]));
      for (std::size_t j = 0; j < d; ++j) g[j] += dx[n * d + j] * emb_scale;
    }
  }
  return loss;
}

template <typename T>
void inject_lora(ParameterStore<T>& params, std::size_t rank, double alpha, std::uint64_t seed) {
  if (params.lora) throw InvalidArgument("inject_lora: LoRA group already present");
  if (rank == 0) throw InvalidArgument("inject_lora: rank must be positive");
  const std::size_t d = params.config.model_dim;
  Rng rng(seed);
  LoraParams<T> lp;
  lp.rank = rank;
  lp.alpha = alpha;
  const double std = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    std::array<LoraPair<T>, 4> arr;
    for (auto& pair : arr) {
      pair.a = Tensor<T>(rank, d);
      for (auto& x : pair.a.data) x = static_cast<T>(rng.normal() * std);
      pair.b = Tensor<T>(d, rank);
    }
    lp.layers.push_back(std::move(arr));
  }
  params.lora = std::move(lp);
}

template <typename T>
Tensor<T> lora_delta(const LoraParams<T>& lora, std::size_t layer, Projection proj) {
  const auto& pair = lora.layers.at(layer)[proj];
  const std::size_t d = pair.b.rows, r = lora.rank, in = pair.a.cols;
  Tensor<T> delta(d, in);
  kernels::gemm_nn(d, in, r, pair.b.data.data(), pair.a.data.data(), delta.data.data(), false);
  const T s = static_cast<T>(lora.scale());
  for (auto& x : delta.data) x *= s;
  return delta;
}

template <typename T>
void merge_lora(ParameterStore<T>& params) {
  if (!params.lora) throw InvalidArgument("merge_lora: no LoRA group present");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    for (std::size_t i = 0; i < 4; ++i) {
      const auto delta = lora_delta(*params.lora, l, static_cast<Projection>(i));
      auto& w = params.layers[l].attn[i].data;
      for (std::size_t j = 0; j < w.size(); ++j) w[j] += delta.data[j];
    }
  }
  params.lora.reset();
}

#define GRAFT_INSTANTIATE(T)                                                                      \
  template Tensor<T> forward<T>(const ParameterStore<T>&, const TokenBatch&);                    \
  template LossSum lm_loss_sum<T>(const Tensor<T>&, const TokenBatch&);                          \
  template double lm_loss<T>(const Tensor<T>&, const TokenBatch&);                               \
  template double loss_and_grad<T>(const ParameterStore<T>&, const TokenBatch&, ParameterStore<T>&, \
                                   const GradRequest&);                                          \
  template void inject_lora<T>(ParameterStore<T>&, std::size_t, double, std::uint64_t);          \
  template void merge_lora<T>(ParameterStore<T>&);                                               \
  template Tensor<T> lora_delta<T>(const LoraParams<T>&, std::size_t, Projection);

GRAFT_INSTANTIATE(float)
GRAFT_INSTANTIATE(double)

#undef GRAFT_INSTANTIATE

}  // namespace graft
