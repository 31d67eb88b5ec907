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

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "graft/model.hpp"
#include "graft/tokenizer.hpp"

namespace graft {

struct LanguagePerplexity {
  double nll = 0.0;              // summed, nats
  std::size_t predictions = 0;   // scored next-token positions
  std::size_t words = 0;         // whitespace words plus one end-of-line per line
  double perplexity = 0.0;       // exp(nll / predictions)
  double word_perplexity = 0.0;  // exp(nll / words); comparable across tokenizers
};

// Each line is scored as EOS + tokens + EOS. Lines longer than the context
// are split into windows sharing one token, so every target is predicted
// once. Result does not depend on line order.
std::map<std::string, LanguagePerplexity> perplexity(const ParameterStore<float>& params,
                                                     const TokenizerModel& tok,
                                                     std::span<const TaggedText> corpus);

// Sum of log p(seq[t] | seq[<t]) for t in [prefix_len, seq.size()), read off
// logits whose row t predicts position t + 1.
double continuation_logprob(const Tensor<float>& logits, std::span<const TokenId> seq,
                            std::size_t prefix_len);

struct OptionScoring {
  // Divide each score by the option's token count.
  bool length_normalize = false;
  // Score only the first option token.
  bool first_token_only = false;
};

struct Classification {
  std::size_t index = 0;
  std::vector<double> scores;
};

// Highest-scoring option, lowest index on ties. Throws InvalidArgument for
// fewer than two options or an empty option.
Classification classify_options(const ParameterStore<float>& params, const TokenizerModel& tok,
                                const std::string& prompt, std::span<const std::string> options,
                                const OptionScoring& scoring = {});

// Argmax tokens (lowest id on ties) until EOS, max_new_tokens or the context
// limit. Returns the decoded continuation only.
std::string greedy_decode(const ParameterStore<float>& params, const TokenizerModel& tok,
                          const std::string& prompt, std::size_t max_new_tokens);

struct LatencyReport {
  std::size_t instances = 0;
  std::size_t repeats = 0;
  double median_seconds = 0.0;
  double instances_per_second = 0.0;
  std::vector<std::size_t> token_counts;
  std::size_t total_tokens = 0;
  std::optional<std::size_t> reference_total_tokens;
  // reference tokens / benchmarked tokens
  std::optional<double> predicted_speedup;
};

double instances_per_second(std::size_t instances, double seconds);

// Times a prefill forward pass over all passages, `repeats` times.
LatencyReport latency_bench(const ParameterStore<float>& params, const TokenizerModel& tok,
                            std::span<const std::string> passages, std::size_t repeats,
                            const TokenizerModel* reference = nullptr, std::size_t batch_size = 16);

struct EvalTask {
  std::string prompt;
  std::vector<std::string> options;
  std::optional<std::size_t> answer_index;
  std::optional<std::string> reference;
  std::string language;
};

void from_json(const nlohmann::json& j, EvalTask& t);
void to_json(nlohmann::json& j, const EvalTask& t);

std::vector<EvalTask> load_eval_tasks(const std::filesystem::path& path);
void save_eval_tasks(const std::filesystem::path& path, std::span<const EvalTask> tasks);

struct TaskScores {
  std::size_t classified = 0;
  std::size_t correct = 0;
  std::size_t generated = 0;
  std::size_t exact_match = 0;

  double accuracy() const { return classified == 0 ? 0.0 : double(correct) / double(classified); }
  double exact_match_rate() const {
    return generated == 0 ? 0.0 : double(exact_match) / double(generated);
  }
};

// Per-language scores. Tasks with options and an answer are classified;
// tasks with a reference are decoded greedily and compared after trimming.
std::map<std::string, TaskScores> evaluate_tasks(const ParameterStore<float>& params,
                                                 const TokenizerModel& tok,
                                                 std::span<const EvalTask> tasks,
                                                 const OptionScoring& scoring = {},
                                                 std::size_t max_new_tokens = 32);

struct EvalResult {
  std::map<std::string, LanguagePerplexity> perplexity;
  std::map<std::string, TaskScores> tasks;
};

nlohmann::json to_json(const EvalResult& r);

}  // namespace graft
