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

#include <Eigen/Dense>

#include <cmath>

#include "fixtures.hpp"
#include "graft/error.hpp"
#include "graft/model.hpp"

namespace graft {
namespace {

using testing::micro_config;
using testing::random_batch;

void randomize_lora_b(ParameterStore<float>& p, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& layer : p.lora->layers) {
    for (auto& pair : layer) {
      for (auto& x : pair.b.data) x = static_cast<float>(rng.normal() * 0.5);
    }
  }
}

TEST(Init, DeterministicWithUnitNorms) {
  const auto cfg = micro_config();
  const auto a = init_model(cfg, 3);
  const auto b = init_model(cfg, 3);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, init_model(cfg, 4));
  EXPECT_FALSE(a.lora.has_value());
  for (const auto& L : a.layers) {
    for (float g : L.attn_norm.data) EXPECT_EQ(g, 1.0f);
    for (float g : L.mlp_norm.data) EXPECT_EQ(g, 1.0f);
  }
  for (float g : a.final_norm.data) EXPECT_EQ(g, 1.0f);
}

TEST(Init, EmbeddingSize) {
  auto cfg = micro_config(300);
  cfg.model_dim = 16;
  const auto p = init_model(cfg, 0);
  EXPECT_EQ(parameter_count(p, ParamGroup::kEmbedding), 4800u);
  EXPECT_EQ(parameter_count(p, ParamGroup::kLora), 0u);
  EXPECT_EQ(parameter_count(p), parameter_count(p, ParamGroup::kEmbedding) + parameter_count(p, ParamGroup::kBody));
}

TEST(Init, RejectsBadConfigs) {
  auto cfg = micro_config();
  cfg.num_heads = 3;
  EXPECT_THROW(init_model(cfg, 0), InvalidArgument);
  cfg = micro_config();
  cfg.num_layers = 0;
  EXPECT_THROW(init_model(cfg, 0), InvalidArgument);
  cfg = micro_config();
  cfg.num_heads = 8;  // head dim 1 cannot be rotated
  EXPECT_THROW(init_model(cfg, 0), InvalidArgument);
}

TEST(Config, JsonRoundTrip) {
  const auto cfg = micro_config(123);
  nlohmann::json j = cfg;
  EXPECT_EQ(j.get<ModelConfig>(), cfg);
}

TEST(Forward, IsCausal) {
  const auto p = init_model(micro_config(), 1);
  auto batch = random_batch(2, 10, 300, 5);
  const auto base = forward(p, batch);
  for (std::size_t j = 0; j < batch.seq; ++j) {
    auto changed = batch;
    for (std::size_t b = 0; b < batch.batch; ++b) {
      auto& id = changed.ids[b * batch.seq + j];
      id = (id + 17) % 300;
    }
    const auto out = forward(p, changed);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      for (std::size_t t = 0; t < j; ++t) {
        for (std::size_t v = 0; v < 300; ++v) {
          ASSERT_EQ(out.row(b * batch.seq + t)[v], base.row(b * batch.seq + t)[v]) << "j=" << j << " t=" << t;
        }
      }
      bool any_diff = false;
      for (std::size_t v = 0; v < 300; ++v) any_diff |= out.row(b * batch.seq + j)[v] != base.row(b * batch.seq + j)[v];
      EXPECT_TRUE(any_diff);
    }
  }
}

TEST(Forward, TiedHeadTouchesOnlyThatColumn) {
  auto p = init_model(micro_config(), 2);
  const auto batch = random_batch(2, 8, 250, 6);  // ids below 250 only
  const std::size_t unused = 277;
  const auto base = forward(p, batch);
  for (std::size_t j = 0; j < p.config.model_dim; ++j) p.embedding.row(unused)[j] *= 3.0f;
  const auto out = forward(p, batch);
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t v = 0; v < out.cols; ++v) {
      if (v == unused) {
        EXPECT_NE(out.row(r)[v], base.row(r)[v]);
      } else {
        ASSERT_EQ(out.row(r)[v], base.row(r)[v]);
      }
    }
  }
}

TEST(Forward, RejectsBadBatches) {
  const auto p = init_model(micro_config(), 2);
  auto batch = random_batch(1, 4, 300, 1);
  batch.ids[2] = 300;
  EXPECT_THROW(forward(p, batch), InvalidArgument);
  EXPECT_THROW(forward(p, random_batch(1, 17, 300, 1)), InvalidArgument);
}

TEST(Loss, UniformLogitsGiveLogV) {
  auto p = init_model(micro_config(), 2);
  std::fill(p.embedding.data.begin(), p.embedding.data.end(), 0.0f);
  const auto batch = random_batch(3, 9, 300, 2);
  EXPECT_NEAR(lm_loss(forward(p, batch), batch), std::log(300.0), 1e-6);
}

TEST(Loss, LargeMarginGoesToZero) {
  TokenBatch batch;
  batch.batch = 1;
  batch.seq = 3;
  batch.ids = {0, 1, 2};
  batch.mask = {1, 1, 1};
  Tensor<float> logits(3, 3);
  logits.row(0)[1] = 60.0f;
  logits.row(1)[2] = 60.0f;
  EXPECT_LT(lm_loss(logits, batch), 1e-20);
}

TEST(Loss, MatchesHandComputation) {
  // 2 sequences x 2 positions x 3 classes; one prediction per sequence.
  TokenBatch batch;
  batch.batch = 2;
  batch.seq = 2;
  batch.ids = {0, 2, 1, 0};
  batch.mask = {1, 1, 1, 1};
  Tensor<float> logits(4, 3);
  const float values[4][3] = {{0.5f, -1.0f, 2.0f}, {9, 9, 9}, {1.5f, 0.25f, -0.75f}, {9, 9, 9}};
  for (int r = 0; r < 4; ++r) for (int v = 0; v < 3; ++v) logits.row(r)[v] = values[r][v];
  const double first = -(2.0 - std::log(std::exp(0.5) + std::exp(-1.0) + std::exp(2.0)));
  const double second = -(1.5 - std::log(std::exp(1.5) + std::exp(0.25) + std::exp(-0.75)));
  EXPECT_NEAR(lm_loss(logits, batch), (first + second) / 2.0, 1e-6);
}

TEST(Loss, MaskedPositionsAreIgnored) {
  auto p = init_model(micro_config(), 3);
  auto batch = random_batch(2, 6, 300, 3);
  const auto logits = forward(p, batch);
  double expected = 0;
  std::size_t n = 0;
  batch.mask[4] = batch.mask[5] = 0;  // row 0 ends after position 3
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t t = 0; t + 1 < 6; ++t) {
      if (!batch.mask[b * 6 + t] || !batch.mask[b * 6 + t + 1]) continue;
      expected += double(testing::reference_nll(logits.row(b * 6 + t), 300, batch.ids[b * 6 + t + 1]));
      ++n;
    }
  }
  EXPECT_EQ(n, 8u);
  EXPECT_NEAR(lm_loss(logits, batch), expected / double(n), 1e-6);
  std::fill(batch.mask.begin(), batch.mask.end(), 0);
  EXPECT_THROW(lm_loss(logits, batch), InvalidArgument);
}

TEST(Loss, GradientPathAgreesWithForward) {
  const auto p = init_model(micro_config(), 4);
  const auto batch = random_batch(2, 7, 300, 4);
  auto grads = zeros_like(p);
  const double loss = loss_and_grad(p, batch, grads);
  EXPECT_NEAR(loss, lm_loss(forward(p, batch), batch), 1e-6);
}

TEST(Gradient, UnusedRowGetsNoInputGradient) {
  const auto p = cast_store<double>(init_model(micro_config(), 5));
  const auto batch = random_batch(2, 8, 250, 5);
  auto grads = zeros_like(p);
  GradRequest req;
  req.embedding_head_path = false;
  loss_and_grad(p, batch, grads, req);
  for (std::size_t v = 250; v < 300; ++v) {
    for (std::size_t j = 0; j < p.config.model_dim; ++j) ASSERT_EQ(grads.embedding.row(v)[j], 0.0);
  }
  bool used_nonzero = false;
  for (std::size_t j = 0; j < p.config.model_dim; ++j) {
    used_nonzero |= grads.embedding.row(static_cast<std::size_t>(batch.ids[0]))[j] != 0.0;
  }
  EXPECT_TRUE(used_nonzero);
}

TEST(Lora, ZeroInitIsANoOp) {
  auto p = init_model(micro_config(), 6);
  const auto batch = random_batch(2, 12, 300, 6);
  const auto before = forward(p, batch);
  const auto count = parameter_count(p);
  inject_lora(p, 2, 2.0, 9);
  EXPECT_EQ(forward(p, batch), before);
  const std::size_t L = 1, r = 2, d = 8;
  EXPECT_EQ(parameter_count(p) - count, L * 4 * (r * d + d * r));
  EXPECT_THROW(inject_lora(p, 2, 2.0, 9), InvalidArgument);
  EXPECT_THROW(inject_lora(p, 0, 2.0, 9), InvalidArgument);
}

TEST(Lora, MergeOfZeroDeltaIsExact) {
  auto p = init_model(micro_config(), 7);
  const auto body = p.layers;
  inject_lora(p, 2, 2.0, 1);
  merge_lora(p);
  EXPECT_EQ(p.layers, body);
  EXPECT_FALSE(p.lora.has_value());
  EXPECT_THROW(merge_lora(p), InvalidArgument);
}

TEST(Lora, MergedForwardMatches) {
  auto cfg = micro_config();
  cfg.num_layers = 2;
  auto p = init_model(cfg, 8);
  inject_lora(p, 3, 6.0, 2);
  randomize_lora_b(p, 3);
  const auto batch = random_batch(3, 16, 300, 8);
  const auto unmerged = forward(p, batch);
  auto merged_params = p;
  merge_lora(merged_params);
  const auto merged = forward(merged_params, batch);
  // Relative to the logit scale; float summation order differs between paths.
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    const double a = unmerged.data[i], b = merged.data[i];
    worst = std::max(worst, std::abs(a - b));
    scale = std::max(scale, std::abs(a));
  }
  EXPECT_LT(worst / scale, 1e-5);
}

TEST(Lora, DeltaRankIsBounded) {
  auto cfg = micro_config();
  cfg.model_dim = 16;
  cfg.num_heads = 2;
  auto p = init_model(cfg, 9);
  const std::size_t r = 3;
  inject_lora(p, r, 3.0, 4);
  randomize_lora_b(p, 5);
  for (std::size_t proj = 0; proj < 4; ++proj) {
    const auto delta = lora_delta(*p.lora, 0, static_cast<Projection>(proj));
    Eigen::MatrixXd m(delta.rows, delta.cols);
    for (std::size_t i = 0; i < delta.rows; ++i) {
      for (std::size_t j = 0; j < delta.cols; ++j) m(Eigen::Index(i), Eigen::Index(j)) = delta.row(i)[j];
    }
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
    ASSERT_GT(sv(0), 0.0);
    EXPECT_GT(sv(Eigen::Index(r - 1)), 1e-5 * sv(0));
    for (Eigen::Index k = Eigen::Index(r); k < sv.size(); ++k) EXPECT_LT(sv(k), 1e-5 * sv(0));
  }
}

TEST(Groups, PartitionIsExhaustive) {
  auto p = init_model(micro_config(), 10);
  inject_lora(p, 2, 2.0, 1);
  std::size_t total = 0;
  for (auto g : {ParamGroup::kEmbedding, ParamGroup::kBody, ParamGroup::kLora}) total += parameter_count(p, g);
  EXPECT_EQ(total, parameter_count(p));
  std::size_t embedding_tensors = 0;
  for_each_tensor(p, [&](const std::string&, ParamGroup g, const Tensor<float>& t) {
    if (g == ParamGroup::kEmbedding) {
      ++embedding_tensors;
      EXPECT_EQ(t.rows, p.config.vocab_size);
    }
  });
  EXPECT_EQ(embedding_tensors, 1u);
}

}  // namespace
}  // namespace graft
