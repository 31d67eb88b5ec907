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
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "graft/model.hpp"

namespace graft {

enum class Stage { kLangAdapt, kInstructTune, kLoraAdapt, kFullCpt };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

// {EMBEDDING} | {BODY} | {LORA} | {EMBEDDING, BODY}
std::vector<ParamGroup> trainable_groups(Stage s);

struct StageConfig {
  Stage stage = Stage::kLangAdapt;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t max_steps = 100;
  std::size_t pack_len = 128;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;
  double grad_clip = 1.0;
  // Linear warmup over this fraction of steps; LORA_ADAPT defaults to 0.1.
  double warmup_fraction = 0.0;

  // Toy-scale defaults per stage (3e-4 embedding-only, 1e-4 otherwise).
  static StageConfig defaults(Stage stage);
  void validate() const;
};

void to_json(nlohmann::json& j, const StageConfig& c);
// Missing keys fall back to StageConfig::defaults(stage).
void from_json(const nlohmann::json& j, StageConfig& c);

// Fixed-length rows of a packed token stream.
struct PackedSequences {
  std::size_t pack_len = 0;
  std::vector<TokenId> ids;         // rows x pack_len
  std::vector<std::uint8_t> mask;   // 1 = real token

  std::size_t rows() const { return pack_len == 0 ? 0 : ids.size() / pack_len; }
  std::size_t real_tokens() const;
};

// Examples joined with EOS after each one, cut greedily into pack_len rows;
// the last row is PAD-filled and masked.
PackedSequences pack_examples(std::span<const std::vector<TokenId>> examples, std::size_t pack_len);

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moments for the trainable tensors only, keyed by tensor name.
struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
};

// One bias-corrected Adam update of the tensors in `groups`.
void adam_step(ParameterStore<float>& params, const ParameterStore<float>& grads, AdamState& state,
               const AdamHyper& hyper, std::span<const ParamGroup> groups);

struct TrainMetrics {
  std::vector<double> losses;
  std::vector<std::pair<std::size_t, double>> evals;  // (step, held-out perplexity)
  std::size_t best_step = 0;
  double wall_seconds = 0.0;
  std::size_t tokens = 0;
};

struct TrainOptions {
  // Held-out perplexity used to keep the best parameters; evaluated every
  // eval_every steps and after the last step.
  std::function<double(const ParameterStore<float>&)> evaluator;
  // Newline-delimited JSON events.
  std::ostream* metrics_log = nullptr;
};

// Runs one stage. Only tensors in trainable_groups(stage) change; every
// other group is returned bit-identical. Throws TrainingError on a
// non-finite loss.
std::pair<ParameterStore<float>, TrainMetrics> train_stage(const ParameterStore<float>& params,
                                                           const PackedSequences& data,
                                                           const StageConfig& config,
                                                           const TrainOptions& options = {});

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::map<ParamGroup, std::size_t> per_group;
};

// Central differences against the analytic gradient on `coordinates`
// coordinates spread evenly over the groups present in `params`. Relative
// error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult grad_check(const ParameterStore<double>& params, const TokenBatch& batch, double eps,
                           std::size_t coordinates = 240, std::uint64_t seed = 0);

}  // namespace graft
