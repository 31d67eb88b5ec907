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

// Command-line front end: tokenizer, data, embedding, training, evaluation,
// fixture generation and the full pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "graft/checkpoint.hpp"
#include "graft/error.hpp"
#include "graft/eval.hpp"
#include "graft/pipeline.hpp"
#include "graft/rng.hpp"
#include "graft/sampler.hpp"
#include "graft/surgery.hpp"
#include "graft/synth.hpp"
#include "graft/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace graft;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitAcceptance = 4;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Flags fill keys the config file leaves out; on a clash the file wins.
json merge_flags(json config, const json& flags) {
  if (config.is_null()) config = json::object();
  for (const auto& [key, value] : flags.items()) {
    if (config.contains(key)) {
      if (config[key] != value) {
        std::cerr << fmt::format("warning: --{} ignored; config file sets {} = {}\n", key, key,
                                 config[key].dump());
      }
      continue;
    }
    config[key] = value;
  }
  return config;
}

// Plain text: one example per line. .jsonl: {"text": ...} per line.
std::vector<std::string> read_texts(const fs::path& path) {
  if (path.extension() != ".jsonl") return read_lines(path);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(json::parse(line).at("text").get<std::string>());
  }
  return out;
}

// "lang=path" pairs into tagged lines.
std::vector<TaggedText> read_tagged(const std::vector<std::string>& specs) {
  std::vector<TaggedText> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("expected LANG=FILE, got '" + s + "'");
    for (auto& l : read_texts(s.substr(eq + 1))) out.emplace_back(s.substr(0, eq), std::move(l));
  }
  return out;
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

void write_examples_jsonl(const fs::path& path, std::span<const Example> ex) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : ex) out << json{{"language", e.language}, {"text", e.text}}.dump() << '\n';
}

std::vector<Example> read_examples_jsonl(const fs::path& path, const std::string& default_lang) {
  std::vector<Example> out;
  if (path.extension() != ".jsonl") {
    for (auto& l : read_lines(path)) out.push_back({default_lang, std::move(l)});
    return out;
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    out.push_back({j.value("language", default_lang), j.at("text").get<std::string>()});
  }
  return out;
}

Pooling pooling_from(const std::string& s) {
  if (s == "AVG") return Pooling::kAverage;
  if (s == "MAX") return Pooling::kMax;
  throw ConfigError("pooling must be AVG or MAX");
}

struct TrainArgs {
  std::string config, ckpt, tokenizer, data, out, metrics, model_config, dev;
  std::map<std::string, double> numbers;
  std::map<std::string, std::size_t> counts;
  std::size_t rank = 4;
  double alpha = 0;
};

void add_tok(CLI::App& app) {
  auto* tok = app.add_subcommand("tok", "tokenizer training and analysis")->require_subcommand(1);

  auto* train = tok->add_subcommand("train", "train a byte-level BPE tokenizer");
  static std::vector<std::string> corpus;
  static std::size_t vocab = 0;
  static std::string out;
  train->add_option("--corpus", corpus, "text files, one line per example")->required();
  train->add_option("--vocab-size", vocab, "target vocabulary size")->required();
  train->add_option("--out", out, "tokenizer JSON")->required();
  train->callback([] {
    std::vector<std::string> lines;
    for (const auto& f : corpus) {
      auto l = read_texts(f);
      lines.insert(lines.end(), l.begin(), l.end());
    }
    const auto model = train_bpe(lines, vocab);
    save_tokenizer(model, out);
    std::cerr << fmt::format("{} tokens{}\n", model.size(), model.truncated() ? " (truncated)" : "");
  });

  auto* prune = tok->add_subcommand("prune", "keep the English tokens of a tokenizer");
  static std::string prune_tok, prune_out;
  static std::vector<std::string> prune_corpus;
  static std::size_t min_count = 1;
  prune->add_option("--tokenizer", prune_tok)->required();
  prune->add_option("--corpus", prune_corpus, "English text files")->required();
  prune->add_option("--min-count", min_count);
  prune->add_option("--out", prune_out, "retained tokenizer JSON")->required();
  prune->callback([] {
    std::vector<std::string> lines;
    for (const auto& f : prune_corpus) {
      auto l = read_texts(f);
      lines.insert(lines.end(), l.begin(), l.end());
    }
    const auto retained = prune_to_english(load_tokenizer(prune_tok), lines, min_count);
    save_tokenizer(extend(retained, TokenizerModel::base(), retained.size()), prune_out);
    std::cerr << fmt::format("{} tokens retained\n", retained.size());
  });

  auto* ext = tok->add_subcommand("extend", "fill a retained vocabulary with multilingual tokens");
  static std::string retained_path, ml_path, ext_out;
  static std::size_t size = 0;
  ext->add_option("--retained", retained_path, "tokenizer JSON from 'tok prune'")->required();
  ext->add_option("--multilingual", ml_path)->required();
  ext->add_option("--size", size)->required();
  ext->add_option("--out", ext_out)->required();
  ext->callback([] {
    const auto retained = load_tokenizer(retained_path);
    const auto model = extend(retained.tokens(), load_tokenizer(ml_path), size);
    save_tokenizer(model, ext_out);
    std::cerr << fmt::format("{} tokens{}\n", model.size(), model.truncated() ? " (truncated)" : "");
  });

  auto* fert = tok->add_subcommand("fertility", "tokens per word by language");
  static std::string fert_tok, fert_ref;
  static std::vector<std::string> fert_text;
  fert->add_option("--tokenizer", fert_tok)->required();
  fert->add_option("--reference", fert_ref);
  fert->add_option("--text", fert_text, "LANG=FILE")->required();
  fert->callback([] {
    const auto model = load_tokenizer(fert_tok);
    std::optional<TokenizerModel> ref;
    if (!fert_ref.empty()) ref = load_tokenizer(fert_ref);
    const auto r = fertility(model, read_tagged(fert_text), ref ? &*ref : nullptr);
    json j;
    for (const auto& [lang, f] : r.languages) {
      j[lang] = {{"tokens", f.token_count}, {"words", f.word_count}, {"fertility", f.fertility}};
      if (f.compression_ratio) j[lang]["compression_ratio"] = *f.compression_ratio;
    }
    j["excluded"] = r.excluded;
    print_json(j);
  });

  auto* ov = tok->add_subcommand("overlap", "shared vocabulary fraction");
  static std::string ov_a, ov_b;
  static bool non_base = false;
  ov->add_option("--a", ov_a)->required();
  ov->add_option("--b", ov_b)->required();
  ov->add_flag("--non-base", non_base, "ignore specials and byte tokens");
  ov->callback([] {
    std::cout << overlap(load_tokenizer(ov_a), load_tokenizer(ov_b),
                         non_base ? OverlapScope::kNonBase : OverlapScope::kAll)
              << '\n';
  });
}

void add_data(CLI::App& app) {
  auto* data = app.add_subcommand("data", "corpus sampling and mixtures")->require_subcommand(1);

  auto* sample = data->add_subcommand("sample", "cap or temperature-sample a corpus directory");
  static std::string dir, out_dir;
  static std::size_t max_lines = 0, total = 0;
  static double tau = 0;
  static std::uint64_t seed = 0;
  sample->add_option("--corpus-dir", dir)->required();
  sample->add_option("--max-lines", max_lines, "per-language cap");
  sample->add_option("--temperature", tau, "sample by size^(1/tau) instead of capping");
  sample->add_option("--total", total, "lines to draw with --temperature");
  sample->add_option("--seed", seed);
  sample->add_option("--out-dir", out_dir)->required();
  sample->callback([] {
    const auto corpora = load_corpus_dir(dir);
    fs::create_directories(out_dir);
    auto emit = [](const std::vector<LanguageCorpus>& cs, const char* kind) {
      for (const auto& c : cs) write_lines(fs::path(out_dir) / (c.language + kind), c.lines);
    };
    if (tau > 0) {
      if (total == 0) throw ConfigError("--temperature needs --total");
      emit(temperature_sample(corpora.sentence, tau, total, seed), ".sent.txt");
    } else {
      if (max_lines == 0) throw ConfigError("give --max-lines or --temperature");
      emit(cap_sample(corpora.sentence, max_lines, seed), ".sent.txt");
      emit(cap_sample(corpora.doc, max_lines, derive_seed(seed, 1)), ".doc.txt");
    }
  });

  auto* mix = data->add_subcommand("mix", "compose the adaptation or LoRA mixture");
  static std::string mix_dir, mix_config, mix_out, it_path, la_path;
  static std::size_t mix_total = 0;
  static double it_fraction = 0.5;
  static std::uint64_t mix_seed = 0;
  mix->add_option("--corpus-dir", mix_dir, "adaptation mixture from a corpus directory");
  mix->add_option("--config", mix_config, "mixture spec JSON");
  mix->add_option("--total", mix_total);
  mix->add_option("--instruct", it_path, "LoRA mixture: instruction data");
  mix->add_option("--adapt", la_path, "LoRA mixture: adaptation data (jsonl)");
  mix->add_option("--it-fraction", it_fraction);
  mix->add_option("--seed", mix_seed);
  mix->add_option("--out", mix_out, "examples JSONL")->required();
  mix->callback([] {
    if (!it_path.empty()) {
      const auto d_it = read_examples_jsonl(it_path, "en");
      const auto d_la = read_examples_jsonl(la_path, "en");
      write_examples_jsonl(mix_out, compose_lora_mixture(d_it, d_la, it_fraction, mix_seed));
      return;
    }
    if (mix_dir.empty() || mix_total == 0) throw ConfigError("give --corpus-dir and --total, or --instruct/--adapt");
    const auto corpora = load_corpus_dir(mix_dir);
    json flags{{"seed", mix_seed}};
    const json cfg = merge_flags(mix_config.empty() ? json::object() : read_json_file(mix_config), flags);
    const auto spec = mixture_spec_from_json(cfg.dump(), corpora);
    write_examples_jsonl(mix_out, compose_pretraining_mixture(spec, mix_total));
  });
}

void add_embed(CLI::App& app) {
  auto* embed = app.add_subcommand("embed", "embedding surgery")->require_subcommand(1);

  auto* init = embed->add_subcommand("init", "initialize rows for a new vocabulary from a donor");
  static std::string ckpt, donor_tok, new_tok, pooling = "AVG", out, report;
  init->add_option("--donor-ckpt", ckpt)->required();
  init->add_option("--donor-tokenizer", donor_tok)->required();
  init->add_option("--tokenizer", new_tok)->required();
  init->add_option("--pooling", pooling, "AVG or MAX");
  init->add_option("--out", out, "embedding file")->required();
  init->add_option("--report", report, "JSON report path");
  init->callback([] {
    const auto donor = load_checkpoint(ckpt);
    const auto r = init_embeddings(donor.embedding(), load_tokenizer(donor_tok), load_tokenizer(new_tok),
                                   pooling_from(pooling));
    save_embedding(r.embedding, out);
    const json j{{"copied", r.report.copied_count}, {"pooled", r.report.pooled_count},
                 {"overlap_fraction", r.report.overlap_fraction}};
    if (!report.empty()) {
      std::ofstream(report) << j.dump(2) << '\n';
    }
    print_json(j);
  });

  auto* comp = embed->add_subcommand("compose", "body from one checkpoint, embeddings from another");
  static std::string body, emb, tok, comp_out;
  comp->add_option("--body", body, "checkpoint directory")->required();
  comp->add_option("--embedding", emb, "embedding file or checkpoint directory")->required();
  comp->add_option("--tokenizer", tok, "tokenizer the embedding must belong to");
  comp->add_option("--out", comp_out)->required();
  comp->callback([] {
    const EmbeddingMatrix e = fs::is_directory(emb) ? load_checkpoint(emb).embedding() : load_embedding(emb);
    std::optional<std::uint64_t> fp;
    if (!tok.empty()) fp = load_tokenizer(tok).fingerprint();
    save_checkpoint(compose(load_checkpoint(body), e, fp), comp_out);
  });

  auto* rep = embed->add_subcommand("report", "which rows would be copied and which pooled");
  static std::string rep_donor, rep_new;
  rep->add_option("--donor-tokenizer", rep_donor)->required();
  rep->add_option("--tokenizer", rep_new)->required();
  rep->callback([] {
    const auto d = load_tokenizer(rep_donor);
    const auto n = load_tokenizer(rep_new);
    std::size_t copied = 0;
    for (const auto& t : n.tokens()) copied += d.contains(t);
    print_json({{"vocab_size", n.size()},
                {"copied", copied},
                {"pooled", n.size() - copied},
                {"overlap_fraction", overlap(n, d)},
                {"overlap_non_base", overlap(n, d, OverlapScope::kNonBase)}});
  });
}

void add_train(CLI::App& app) {
  auto* train = app.add_subcommand("train", "run one training stage")->require_subcommand(1);
  static TrainArgs a;
  static std::string current;
  const std::vector<std::pair<std::string, Stage>> stages{{"pretrain", Stage::kFullCpt},
                                                          {"lang-adapt", Stage::kLangAdapt},
                                                          {"instruct", Stage::kInstructTune},
                                                          {"lora", Stage::kLoraAdapt},
                                                          {"cpt", Stage::kFullCpt}};
  for (const auto& [name, stage] : stages) {
    auto* cmd = train->add_subcommand(name);
    cmd->add_option("--config", a.config, "stage config JSON");
    if (name == "pretrain") {
      cmd->add_option("--model-config", a.model_config, "model config JSON (fresh init)");
      cmd->add_option("--ckpt", a.ckpt, "continue from a checkpoint instead");
    } else {
      cmd->add_option("--ckpt", a.ckpt)->required();
    }
    cmd->add_option("--tokenizer", a.tokenizer)->required();
    cmd->add_option("--data", a.data, "text lines or examples JSONL")->required();
    cmd->add_option("--out", a.out, "output checkpoint directory")->required();
    cmd->add_option("--metrics", a.metrics, "metrics NDJSON path");
    cmd->add_option("--dev", a.dev, "held-out lines for best-checkpoint selection");
    for (const char* k : {"learning_rate", "beta1", "beta2", "eps", "grad_clip", "warmup_fraction"}) {
      cmd->add_option(std::string("--") + k, a.numbers[k]);
    }
    for (const char* k : {"batch_size", "max_steps", "pack_len", "seed", "eval_every"}) {
      cmd->add_option(std::string("--") + k, a.counts[k]);
    }
    if (name == "lora") {
      cmd->add_option("--rank", a.rank, "LoRA rank when injecting");
      cmd->add_option("--alpha", a.alpha, "LoRA alpha (default: rank)");
    }
    cmd->callback([cmd, stage] {
      json flags;
      for (const auto& [k, v] : a.numbers) {
        if (cmd->count("--" + k)) flags[k] = v;
      }
      for (const auto& [k, v] : a.counts) {
        if (cmd->count("--" + k)) flags[k] = v;
      }
      json cfg = a.config.empty() ? json::object() : read_json_file(a.config);
      if (cfg.contains("stage") && cfg["stage"] != to_string(stage)) {
        throw ConfigError(fmt::format("config stage {} does not match the subcommand", cfg["stage"].dump()));
      }
      cfg["stage"] = std::string(to_string(stage));
      StageConfig sc;
      try {
        sc = merge_flags(cfg, flags).get<StageConfig>();
      } catch (const json::exception& e) {
        throw ConfigError(e.what());
      }
      const auto tok = load_tokenizer(a.tokenizer);
      Checkpoint start;
      if (!a.ckpt.empty()) {
        start = load_checkpoint(a.ckpt);
      } else if (!a.model_config.empty()) {
        ModelConfig mc;
        try {
          mc = read_json_file(a.model_config).get<ModelConfig>();
        } catch (const json::exception& e) {
          throw ConfigError(e.what());
        }
        mc.vocab_size = tok.size();
        start = {init_model(mc, mc.seed), tok.fingerprint()};
      } else {
        throw ConfigError("pretrain needs --model-config or --ckpt");
      }
      if (start.vocab_fingerprint != tok.fingerprint()) {
        throw ConfigError("checkpoint embeddings do not belong to --tokenizer");
      }
      if (stage == Stage::kLoraAdapt && !start.params.lora) {
        inject_lora(start.params, a.rank, a.alpha > 0 ? a.alpha : double(a.rank), derive_seed(sc.seed, 1));
      }
      const auto ids = encode_lines(tok, read_texts(a.data));
      const auto packed = pack_examples(ids, sc.pack_len);
      std::ofstream metrics;
      TrainOptions opts;
      if (!a.metrics.empty()) {
        metrics.open(a.metrics, std::ios::binary);
        opts.metrics_log = &metrics;
      }
      std::vector<TaggedText> dev;
      if (!a.dev.empty()) {
        for (auto& l : read_texts(a.dev)) dev.emplace_back("dev", std::move(l));
        opts.evaluator = [&](const ParameterStore<float>& p) {
          return perplexity(p, tok, dev).at("dev").perplexity;
        };
      }
      auto [params, m] = train_stage(start.params, packed, sc, opts);
      save_checkpoint({std::move(params), start.vocab_fingerprint}, a.out);
      std::cerr << fmt::format("{}: {} steps, loss {:.4f} -> {:.4f}, {:.1f}s\n", to_string(stage),
                               m.losses.size(), m.losses.empty() ? 0.0 : m.losses.front(),
                               m.losses.empty() ? 0.0 : m.losses.back(), m.wall_seconds);
    });
  }
}

void add_eval(CLI::App& app) {
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint")->require_subcommand(1);
  static std::string ckpt, tok;
  auto common = [](CLI::App* c) {
    c->add_option("--ckpt", ckpt)->required();
    c->add_option("--tokenizer", tok)->required();
  };

  auto* ppl = ev->add_subcommand("ppl", "perplexity per language");
  common(ppl);
  static std::vector<std::string> text;
  ppl->add_option("--text", text, "LANG=FILE")->required();
  ppl->callback([] {
    const auto r = perplexity(load_checkpoint(ckpt).params, load_tokenizer(tok), read_tagged(text));
    print_json(to_json(EvalResult{r, {}}).at("perplexity"));
  });

  auto* cls = ev->add_subcommand("classify", "option-scoring and generation tasks");
  common(cls);
  static std::string tasks;
  static bool normalize = false, first_only = false;
  static std::size_t max_new = 32;
  cls->add_option("--tasks", tasks, "tasks JSONL")->required();
  cls->add_flag("--length-normalize", normalize);
  cls->add_flag("--first-token-only", first_only);
  cls->add_option("--max-new-tokens", max_new);
  cls->callback([] {
    const auto t = load_eval_tasks(tasks);
    const auto r = evaluate_tasks(load_checkpoint(ckpt).params, load_tokenizer(tok), t,
                                  OptionScoring{normalize, first_only}, max_new);
    print_json(to_json(EvalResult{{}, r}).at("tasks"));
  });

  auto* dec = ev->add_subcommand("decode", "greedy continuation of a prompt");
  common(dec);
  static std::string prompt;
  static std::size_t dec_max = 256;
  dec->add_option("--prompt", prompt)->required();
  dec->add_option("--max-new-tokens", dec_max);
  dec->callback([] {
    std::cout << greedy_decode(load_checkpoint(ckpt).params, load_tokenizer(tok), prompt, dec_max) << '\n';
  });

  auto* lat = ev->add_subcommand("latency", "prefill throughput and token counts");
  common(lat);
  static std::string passages, reference;
  static std::size_t repeats = 3;
  lat->add_option("--passages", passages)->required();
  lat->add_option("--repeats", repeats);
  lat->add_option("--reference", reference, "reference tokenizer for token counts");
  lat->callback([] {
    std::optional<TokenizerModel> ref;
    if (!reference.empty()) ref = load_tokenizer(reference);
    const auto r = latency_bench(load_checkpoint(ckpt).params, load_tokenizer(tok), read_texts(passages),
                                 repeats, ref ? &*ref : nullptr);
    json j{{"instances", r.instances},
           {"median_seconds", r.median_seconds},
           {"instances_per_second", r.instances_per_second},
           {"total_tokens", r.total_tokens}};
    if (r.reference_total_tokens) j["reference_total_tokens"] = *r.reference_total_tokens;
    if (r.predicted_speedup) j["predicted_speedup"] = *r.predicted_speedup;
    print_json(j);
  });
}

void add_synth(CLI::App& app) {
  auto* synth = app.add_subcommand("synth", "synthetic language fixture")->require_subcommand(1);
  auto* gen = synth->add_subcommand("gen", "generate corpora, instruction data and eval tasks");
  static std::string config, out, mode;
  static std::uint64_t seed = 0;
  gen->add_option("--config", config, "fixture spec JSON");
  gen->add_option("--seed", seed);
  gen->add_option("--mode", mode, "CIPHER or SCRIPT_SHIFT");
  gen->add_option("--out", out)->required();
  gen->callback([gen] {
    json flags = json::object();
    if (gen->count("--seed")) flags["seed"] = seed;
    if (gen->count("--mode")) flags["mode"] = mode;
    SyntheticLangSpec spec;
    try {
      spec = merge_flags(config.empty() ? json::object() : read_json_file(config), flags).get<SyntheticLangSpec>();
    } catch (const json::exception& e) {
      throw ConfigError(e.what());
    }
    const auto files = write_synthetic(gen_synthetic_corpora(spec), spec, out);
    std::cerr << fmt::format("{} files written to {}\n", files.size(), out);
  });
}

int g_pipeline_status = 0;

void add_pipeline(CLI::App& app) {
  auto* pipe = app.add_subcommand("pipeline", "end-to-end run")->require_subcommand(1);
  auto* run = pipe->add_subcommand("run", "run (or resume) every stage");
  static std::string config, root;
  static bool check = false;
  run->add_option("--config", config, "pipeline config JSON")->required();
  run->add_option("--artifacts-root", root, "artifacts directory");
  run->add_flag("--check", check, "exit 4 when an acceptance check fails");
  run->callback([run] {
    json flags = json::object();
    if (run->count("--artifacts-root")) flags["artifacts_root"] = root;
    PipelineConfig cfg;
    try {
      cfg = pipeline_config_from_json(merge_flags(read_json_file(config), flags));
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    const auto r = run_pipeline(cfg, &std::cerr);
    print_json(r.report.at("checks"));
    if (check && !r.checks_passed) g_pipeline_status = kExitAcceptance;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vocabulary transfer for small decoder language models"};
  app.require_subcommand(1);
  add_tok(app);
  add_data(app);
  add_embed(app);
  add_train(app);
  add_eval(app);
  add_synth(app);
  add_pipeline(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const StageFailure& e) {
    std::cerr << "stage '" << e.stage() << "' failed: " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return g_pipeline_status;
}
