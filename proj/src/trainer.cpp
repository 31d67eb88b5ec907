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

#include "graft/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "graft/error.hpp"
#include "graft/rng.hpp"

namespace graft {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kLangAdapt: return "LANG_ADAPT";
    case Stage::kInstructTune: return "INSTRUCT_TUNE";
    case Stage::kLoraAdapt: return "LORA_ADAPT";
    case Stage::kFullCpt: return "FULL_CPT";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  if (s == "LANG_ADAPT") return Stage::kLangAdapt;
  if (s == "INSTRUCT_TUNE") return Stage::kInstructTune;
  if (s == "LORA_ADAPT") return Stage::kLoraAdapt;
  if (s == "FULL_CPT") return Stage::kFullCpt;
  throw InvalidArgument("unknown stage: " + std::string(s));
}

std::vector<ParamGroup> trainable_groups(Stage s) {
  switch (s) {
    case Stage::kLangAdapt: return {ParamGroup::kEmbedding};
    case Stage::kInstructTune: return {ParamGroup::kBody};
    case Stage::kLoraAdapt: return {ParamGroup::kLora};
    case Stage::kFullCpt: return {ParamGroup::kEmbedding, ParamGroup::kBody};
  }
  return {};
}

StageConfig StageConfig::defaults(Stage stage) {
  StageConfig c;
  c.stage = stage;
  c.learning_rate = stage == Stage::kLangAdapt ? 3e-4 : 1e-4;
  c.warmup_fraction = stage == Stage::kLoraAdapt ? 0.1 : 0.0;
  return c;
}

void StageConfig::validate() const {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("stage config: learning_rate must be finite and non-negative");
  }
  if (batch_size == 0) throw InvalidArgument("stage config: batch_size must be positive");
  if (pack_len < 2) throw InvalidArgument("stage config: pack_len must be at least 2");
  if (warmup_fraction < 0 || warmup_fraction > 1) {
    throw InvalidArgument("stage config: warmup_fraction must be in [0, 1]");
  }
}

void to_json(nlohmann::json& j, const StageConfig& c) {
  j = nlohmann::json{{"stage", to_string(c.stage)}, {"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},           {"beta2", c.beta2},
                     {"eps", c.eps},               {"batch_size", c.batch_size},
                     {"max_steps", c.max_steps},   {"pack_len", c.pack_len},
                     {"seed", c.seed},             {"eval_every", c.eval_every},
                     {"grad_clip", c.grad_clip},   {"warmup_fraction", c.warmup_fraction}};
}

void from_json(const nlohmann::json& j, StageConfig& c) {
  c = StageConfig::defaults(stage_from_string(j.at("stage").get<std::string>()));
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.pack_len = j.value("pack_len", c.pack_len);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
}

std::size_t PackedSequences::real_tokens() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

PackedSequences pack_examples(std::span<const std::vector<TokenId>> examples, std::size_t pack_len) {
  if (pack_len < 2) throw InvalidArgument("pack_examples: pack_len must be at least 2");
  PackedSequences out;
  out.pack_len = pack_len;
  for (const auto& ex : examples) {
    out.ids.insert(out.ids.end(), ex.begin(), ex.end());
    out.ids.push_back(kEos);
  }
  out.mask.assign(out.ids.size(), 1);
  const std::size_t padded = (out.ids.size() + pack_len - 1) / pack_len * pack_len;
  out.ids.resize(padded, kPad);
  out.mask.resize(padded, 0);
  return out;
}

void adam_step(ParameterStore<float>& params, const ParameterStore<float>& grads, AdamState& state,
               const AdamHyper& hyper, std::span<const ParamGroup> groups) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  std::map<std::string, const Tensor<float>*> g_by_name;
  for_each_tensor(grads, [&](const std::string& name, ParamGroup, const Tensor<float>& g) {
    g_by_name[name] = &g;
  });
  for_each_tensor(params, [&](const std::string& name, ParamGroup group, Tensor<float>& p) {
    if (std::find(groups.begin(), groups.end(), group) == groups.end()) return;
    auto git = g_by_name.find(name);
    if (git == g_by_name.end() || git->second->size() != p.size()) {
      throw InvalidArgument("adam_step: gradient layout does not match parameter " + name);
    }
    auto& [m, v] = state.moments[name];
    m.resize(p.size(), 0.0);
    v.resize(p.size(), 0.0);
    const auto& g = git->second->data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
      const double update = hyper.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + hyper.eps);
      p.data[i] = static_cast<float>(static_cast<double>(p.data[i]) - update);
    }
  });
}

namespace {

GradRequest request_for(Stage s) {
  GradRequest r;
  r.embedding = s == Stage::kLangAdapt || s == Stage::kFullCpt;
  r.body = s == Stage::kInstructTune || s == Stage::kFullCpt;
  r.lora = s == Stage::kLoraAdapt;
  return r;
}

bool in_groups(ParamGroup g, const std::vector<ParamGroup>& groups) {
  return std::find(groups.begin(), groups.end(), g) != groups.end();
}

}  // namespace

std::pair<ParameterStore<float>, TrainMetrics> train_stage(const ParameterStore<float>& params,
                                                           const PackedSequences& data,
                                                           const StageConfig& config,
                                                           const TrainOptions& options) {
  config.validate();
  if (data.rows() == 0) throw InvalidArgument("train_stage: no training data");
  if (data.pack_len > params.config.max_seq_len) {
    throw InvalidArgument(fmt::format("train_stage: pack_len {} exceeds max_seq_len {}", data.pack_len,
                                      params.config.max_seq_len));
  }
  if (config.stage == Stage::kLoraAdapt && !params.lora) {
    throw InvalidArgument("train_stage: LORA_ADAPT requires an injected LoRA group");
  }
  const auto groups = trainable_groups(config.stage);
  const auto request = request_for(config.stage);
  const auto start = std::chrono::steady_clock::now();

  ParameterStore<float> current = params;
  std::optional<ParameterStore<float>> best;
  double best_ppl = INFINITY;
  TrainMetrics metrics;
  AdamState adam;
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::size_t cursor = 0;
  const auto warmup = static_cast<std::size_t>(
      std::ceil(config.warmup_fraction * static_cast<double>(config.max_steps)));

  auto evaluate = [&](std::size_t step) {
    if (!options.evaluator) return;
    const double ppl = options.evaluator(current);
    metrics.evals.emplace_back(step, ppl);
    if (options.metrics_log) {
      *options.metrics_log << nlohmann::json{{"event", "eval"}, {"stage", to_string(config.stage)},
                                             {"step", step}, {"ppl", ppl}}.dump()
                           << '\n';
    }
    if (ppl < best_ppl) {
      best_ppl = ppl;
      best = current;
      metrics.best_step = step;
    }
  };

  for (std::size_t step = 0; step < config.max_steps; ++step) {
    TokenBatch batch;
    batch.batch = std::min(config.batch_size, data.rows());
    batch.seq = data.pack_len;
    for (std::size_t b = 0; b < batch.batch; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const std::size_t row = order[cursor++];
      const auto first = static_cast<std::ptrdiff_t>(row * data.pack_len);
      const auto last = first + static_cast<std::ptrdiff_t>(data.pack_len);
      batch.ids.insert(batch.ids.end(), data.ids.begin() + first, data.ids.begin() + last);
      batch.mask.insert(batch.mask.end(), data.mask.begin() + first, data.mask.begin() + last);
    }
    metrics.tokens += static_cast<std::size_t>(std::count(batch.mask.begin(), batch.mask.end(), 1));

    auto grads = zeros_like(current);
    double loss;
    try {
      loss = loss_and_grad(current, batch, grads, request);
    } catch (const InvalidArgument&) {
      // A batch made only of padding carries no signal.
      metrics.losses.push_back(metrics.losses.empty() ? 0.0 : metrics.losses.back());
      continue;
    }
    if (!std::isfinite(loss)) {
      throw TrainingError(fmt::format("{}: non-finite loss {} at step {} (lr {}, last finite loss {})",
                                      to_string(config.stage), loss, step, config.learning_rate,
                                      metrics.losses.empty() ? NAN : metrics.losses.back()));
    }
    metrics.losses.push_back(loss);

    if (config.grad_clip > 0) {
      double sq = 0;
      for_each_tensor(grads, [&](const std::string&, ParamGroup g, const Tensor<float>& t) {
        if (!in_groups(g, groups)) return;
        for (float x : t.data) sq += static_cast<double>(x) * x;
      });
      const double norm = std::sqrt(sq);
      if (norm > config.grad_clip) {
        const auto s = static_cast<float>(config.grad_clip / norm);
        for_each_tensor(grads, [&](const std::string&, ParamGroup g, Tensor<float>& t) {
          if (!in_groups(g, groups)) return;
          for (float& x : t.data) x *= s;
        });
      }
    }
    AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.eps};
    if (step < warmup) {
      hyper.learning_rate *= static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    adam_step(current, grads, adam, hyper, groups);

    if (options.metrics_log) {
      *options.metrics_log << nlohmann::json{{"event", "step"}, {"stage", to_string(config.stage)},
                                             {"step", step}, {"loss", loss},
                                             {"tokens", metrics.tokens}}.dump()
                           << '\n';
    }
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && step + 1 < config.max_steps) {
      evaluate(step + 1);
    }
  }
  evaluate(config.max_steps);
  metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (best) current = std::move(*best);
  return {std::move(current), std::move(metrics)};
}

GradCheckResult grad_check(const ParameterStore<double>& params, const TokenBatch& batch, double eps,
                           std::size_t coordinates, std::uint64_t seed) {
  auto grads = zeros_like(params);
  loss_and_grad(params, batch, grads);

  struct Slot {
    std::string name;
    ParamGroup group;
    std::size_t size;
  };
  std::vector<Slot> slots;
  std::map<ParamGroup, std::vector<std::size_t>> by_group;
  for_each_tensor(params, [&](const std::string& name, ParamGroup g, const Tensor<double>& t) {
    by_group[g].push_back(slots.size());
    slots.push_back({name, g, t.size()});
  });

  Rng rng(seed);
  auto probe = params;
  std::map<std::string, Tensor<double>*> probe_by_name;
  std::map<std::string, const Tensor<double>*> grad_by_name;
  for_each_tensor(probe, [&](const std::string& name, ParamGroup, Tensor<double>& t) {
    probe_by_name[name] = &t;
  });
  for_each_tensor(grads, [&](const std::string& name, ParamGroup, const Tensor<double>& t) {
    grad_by_name[name] = &t;
  });

  GradCheckResult result;
  const std::size_t per_group = (coordinates + by_group.size() - 1) / by_group.size();
  for (const auto& [group, members] : by_group) {
    for (std::size_t k = 0; k < per_group; ++k) {
      const Slot& slot = slots[members[rng.below(members.size())]];
      const std::size_t i = rng.below(slot.size);
      double& x = probe_by_name[slot.name]->data[i];
      const double saved = x;
      x = saved + eps;
      const double up = lm_loss(forward(probe, batch), batch);
      x = saved - eps;
      const double down = lm_loss(forward(probe, batch), batch);
      x = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = grad_by_name[slot.name]->data[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
      ++result.per_group[group];
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace graft
