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

#include "graft/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "graft/error.hpp"

namespace graft {

namespace {

constexpr std::size_t kEvalBatch = 16;

std::vector<std::vector<TokenId>> windows(const std::vector<TokenId>& seq, std::size_t max_len) {
  std::vector<std::vector<TokenId>> out;
  if (seq.size() <= max_len) {
    out.push_back(seq);
    return out;
  }
  for (std::size_t start = 0; start + 1 < seq.size(); start += max_len - 1) {
    const std::size_t end = std::min(seq.size(), start + max_len);
    out.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(start),
                     seq.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double log_softmax_at(const float* row, std::size_t V, std::size_t target) {
  double mx = -INFINITY;
  for (std::size_t v = 0; v < V; ++v) mx = std::max(mx, static_cast<double>(row[v]));
  double sum = 0;
  for (std::size_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(row[v]) - mx);
  return static_cast<double>(row[target]) - mx - std::log(sum);
}

}  // namespace

std::map<std::string, LanguagePerplexity> perplexity(const ParameterStore<float>& params,
                                                     const TokenizerModel& tok,
                                                     std::span<const TaggedText> corpus) {
  if (corpus.empty()) throw InvalidArgument("perplexity: empty corpus");
  if (tok.size() != params.config.vocab_size) {
    throw InvalidArgument("perplexity: tokenizer size does not match the model vocabulary");
  }
  const std::size_t max_len = params.config.max_seq_len;
  if (max_len < 2) throw InvalidArgument("perplexity: context must hold at least two tokens");

  std::map<std::string, std::vector<std::vector<TokenId>>> rows;
  std::map<std::string, LanguagePerplexity> out;
  for (const auto& [lang, text] : corpus) {
    std::vector<TokenId> seq{kEos};
    const auto ids = tok.encode(text);
    seq.insert(seq.end(), ids.begin(), ids.end());
    seq.push_back(kEos);
    for (auto& w : windows(seq, max_len)) rows[lang].push_back(std::move(w));
    out[lang].words += count_words(text) + 1;
  }
  for (auto& [lang, seqs] : rows) {
    std::sort(seqs.begin(), seqs.end());
    auto& r = out[lang];
    for (std::size_t i = 0; i < seqs.size(); i += kEvalBatch) {
      const std::size_t n = std::min(kEvalBatch, seqs.size() - i);
      const auto batch = TokenBatch::from_rows(std::span(seqs).subspan(i, n));
      const auto s = lm_loss_sum(forward(params, batch), batch);
      r.nll += s.total;
      r.predictions += s.count;
    }
    r.perplexity = std::exp(r.nll / static_cast<double>(r.predictions));
    r.word_perplexity = std::exp(r.nll / static_cast<double>(r.words));
  }
  return out;
}

double continuation_logprob(const Tensor<float>& logits, std::span<const TokenId> seq,
                            std::size_t prefix_len) {
  if (prefix_len == 0) throw InvalidArgument("continuation_logprob: need at least one context token");
  if (logits.rows < seq.size() - 1) throw InvalidArgument("continuation_logprob: too few logit rows");
  double total = 0;
  for (std::size_t t = prefix_len; t < seq.size(); ++t) {
    total += log_softmax_at(logits.row(t - 1), logits.cols, static_cast<std::size_t>(seq[t]));
  }
  return total;
}

Classification classify_options(const ParameterStore<float>& params, const TokenizerModel& tok,
                                const std::string& prompt, std::span<const std::string> options,
                                const OptionScoring& scoring) {
  if (options.size() < 2) throw InvalidArgument("classify_options: need at least two options");
  std::vector<TokenId> context{kEos};
  const auto p = tok.encode(prompt);
  context.insert(context.end(), p.begin(), p.end());

  Classification out;
  for (const auto& option : options) {
    auto ids = tok.encode(option);
    if (ids.empty()) throw InvalidArgument("classify_options: empty option");
    if (scoring.first_token_only) ids.resize(1);
    std::vector<TokenId> seq = context;
    seq.insert(seq.end(), ids.begin(), ids.end());
    if (seq.size() > params.config.max_seq_len) {
      // Keep the most recent context.
      seq.erase(seq.begin(), seq.end() - static_cast<std::ptrdiff_t>(params.config.max_seq_len));
    }
    const std::size_t prefix = seq.size() - ids.size();
    const std::vector<std::vector<TokenId>> rows{seq};
    const auto logits = forward(params, TokenBatch::from_rows(rows));
    double score = continuation_logprob(logits, seq, prefix);
    if (scoring.length_normalize) score /= static_cast<double>(ids.size());
    out.scores.push_back(score);
  }
  for (std::size_t i = 1; i < out.scores.size(); ++i) {
    if (out.scores[i] > out.scores[out.index]) out.index = i;
  }
  return out;
}

std::string greedy_decode(const ParameterStore<float>& params, const TokenizerModel& tok,
                          const std::string& prompt, std::size_t max_new_tokens) {
  std::vector<TokenId> seq{kEos};
  const auto p = tok.encode(prompt);
  seq.insert(seq.end(), p.begin(), p.end());
  if (seq.size() > params.config.max_seq_len) {
    throw InvalidArgument("greedy_decode: prompt exceeds the context length");
  }
  std::vector<TokenId> generated;
  while (generated.size() < max_new_tokens && seq.size() < params.config.max_seq_len) {
    const std::vector<std::vector<TokenId>> rows{seq};
    const auto logits = forward(params, TokenBatch::from_rows(rows));
    const float* last = logits.row(seq.size() - 1);
    std::size_t best = 0;
    for (std::size_t v = 1; v < logits.cols; ++v) {
      if (last[v] > last[best]) best = v;
    }
    const auto id = static_cast<TokenId>(best);
    if (id == kEos) break;
    generated.push_back(id);
    seq.push_back(id);
  }
  return tok.decode(generated);
}

double instances_per_second(std::size_t instances, double seconds) {
  if (!(seconds > 0)) throw InvalidArgument("instances_per_second: elapsed time must be positive");
  return static_cast<double>(instances) / seconds;
}

LatencyReport latency_bench(const ParameterStore<float>& params, const TokenizerModel& tok,
                            std::span<const std::string> passages, std::size_t repeats,
                            const TokenizerModel* reference, std::size_t batch_size) {
  if (passages.empty()) throw InvalidArgument("latency_bench: no passages");
  if (repeats == 0 || batch_size == 0) throw InvalidArgument("latency_bench: repeats and batch size must be positive");
  LatencyReport r;
  r.instances = passages.size();
  r.repeats = repeats;
  std::vector<std::vector<TokenId>> rows;
  for (const auto& text : passages) {
    auto ids = tok.encode(text);
    r.token_counts.push_back(ids.size());
    r.total_tokens += ids.size();
    ids.insert(ids.begin(), kEos);
    ids.resize(std::min(ids.size(), params.config.max_seq_len));
    rows.push_back(std::move(ids));
  }
  if (reference) {
    std::size_t ref = 0;
    for (const auto& text : passages) ref += reference->encode(text).size();
    r.reference_total_tokens = ref;
    if (r.total_tokens > 0) r.predicted_speedup = double(ref) / double(r.total_tokens);
  }
  std::vector<double> times;
  for (std::size_t k = 0; k < repeats; ++k) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < rows.size(); i += batch_size) {
      const std::size_t n = std::min(batch_size, rows.size() - i);
      const auto logits = forward(params, TokenBatch::from_rows(std::span(rows).subspan(i, n)));
      (void)logits;
    }
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(times.begin(), times.end());
  r.median_seconds = times.size() % 2 ? times[times.size() / 2]
                                      : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
  r.instances_per_second = instances_per_second(r.instances, std::max(r.median_seconds, 1e-12));
  return r;
}

void from_json(const nlohmann::json& j, EvalTask& t) {
  t.prompt = j.at("prompt").get<std::string>();
  t.options = j.value("options", std::vector<std::string>{});
  t.answer_index.reset();
  t.reference.reset();
  if (j.contains("answer_index") && !j["answer_index"].is_null()) {
    t.answer_index = j["answer_index"].get<std::size_t>();
  }
  if (j.contains("reference") && !j["reference"].is_null()) t.reference = j["reference"].get<std::string>();
  t.language = j.at("language_tag").get<std::string>();
  if (t.answer_index && *t.answer_index >= t.options.size()) {
    throw InvalidArgument("eval task: answer_index out of range");
  }
}

void to_json(nlohmann::json& j, const EvalTask& t) {
  j = nlohmann::json{{"prompt", t.prompt}, {"language_tag", t.language}};
  if (!t.options.empty()) j["options"] = t.options;
  if (t.answer_index) j["answer_index"] = *t.answer_index;
  if (t.reference) j["reference"] = *t.reference;
}

std::vector<EvalTask> load_eval_tasks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open eval tasks: " + path.string());
  std::vector<EvalTask> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<EvalTask>());
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_eval_tasks(const std::filesystem::path& path, std::span<const EvalTask> tasks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write eval tasks: " + path.string());
  for (const auto& t : tasks) out << nlohmann::json(t).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::map<std::string, TaskScores> evaluate_tasks(const ParameterStore<float>& params,
                                                 const TokenizerModel& tok,
                                                 std::span<const EvalTask> tasks,
                                                 const OptionScoring& scoring,
                                                 std::size_t max_new_tokens) {
  std::map<std::string, TaskScores> out;
  for (const auto& task : tasks) {
    auto& s = out[task.language];
    if (task.answer_index && task.options.size() >= 2) {
      const auto c = classify_options(params, tok, task.prompt, task.options, scoring);
      ++s.classified;
      s.correct += c.index == *task.answer_index;
    }
    if (task.reference) {
      ++s.generated;
      // A prompt that fills the context cannot be answered; scored as a miss.
      if (tok.encode(task.prompt).size() + 1 > params.config.max_seq_len) continue;
      const auto text = greedy_decode(params, tok, task.prompt, max_new_tokens);
      s.exact_match += trim(text) == trim(*task.reference);
    }
  }
  return out;
}

nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json j;
  j["perplexity"] = nlohmann::json::object();
  for (const auto& [lang, p] : r.perplexity) {
    j["perplexity"][lang] = {{"nll", p.nll},
                             {"predictions", p.predictions},
                             {"words", p.words},
                             {"perplexity", p.perplexity},
                             {"word_perplexity", p.word_perplexity}};
  }
  j["tasks"] = nlohmann::json::object();
  for (const auto& [lang, s] : r.tasks) {
    j["tasks"][lang] = {{"classified", s.classified},
                        {"correct", s.correct},
                        {"accuracy", s.accuracy()},
                        {"generated", s.generated},
                        {"exact_match", s.exact_match}};
  }
  return j;
}

}  // namespace graft
