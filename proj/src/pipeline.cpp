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

#include "graft/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>

#include <fmt/format.h>

#include "graft/checkpoint.hpp"
#include "graft/error.hpp"
#include "graft/eval.hpp"
#include "graft/rng.hpp"

namespace graft {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void derive_stage_seeds(PipelineConfig& c) {
  std::uint64_t tag = 100;
  for (StageConfig* s : {&c.pretrain, &c.instruct, &c.lang_adapt, &c.lora_adapt, &c.cpt, &c.cpt_tune}) {
    s->seed = derive_seed(c.seed, tag++);
  }
}

}  // namespace

PipelineConfig::PipelineConfig() {
  model.model_dim = 64;
  model.num_layers = 2;
  model.num_heads = 4;
  model.mlp_hidden = 256;
  model.max_seq_len = 128;
  pretrain.max_steps = 1500;
  pretrain.learning_rate = 1e-3;
  instruct.max_steps = 300;
  lang_adapt.max_steps = 600;
  lang_adapt.learning_rate = 3e-3;
  lora_adapt.max_steps = 300;
  lora_adapt.learning_rate = 1e-3;
  cpt.max_steps = lang_adapt.max_steps;
  cpt.learning_rate = 1e-3;
  cpt_tune.max_steps = instruct.max_steps + lora_adapt.max_steps;
  cpt_tune.learning_rate = instruct.learning_rate;
  derive_stage_seeds(*this);
}

void PipelineConfig::validate() const {
  synth.validate();
  if (donor_vocab_size < kBaseVocabSize || custom_vocab_size < kBaseVocabSize) {
    throw InvalidArgument(fmt::format("pipeline: vocabulary sizes must be at least {}", kBaseVocabSize));
  }
  ModelConfig probe = model;
  probe.vocab_size = custom_vocab_size;
  probe.validate();
  if (la_examples == 0) throw InvalidArgument("pipeline: la_examples must be positive");
  if (lora_rank == 0) throw InvalidArgument("pipeline: lora_rank must be positive");
  if (!(lora_it_fraction > 0 && lora_it_fraction <= 1)) {
    throw InvalidArgument("pipeline: lora_it_fraction must be in (0, 1]");
  }
  for (const StageConfig* s : {&pretrain, &instruct, &lang_adapt, &lora_adapt, &cpt, &cpt_tune}) {
    s->validate();
    if (s->pack_len > model.max_seq_len) throw InvalidArgument("pipeline: pack_len exceeds the model context");
  }
}

namespace {

const std::set<std::string> kTopKeys{
    "artifacts_root", "seed", "synth", "donor_vocab_size", "custom_vocab_size", "prune_min_count",
    "bpe_lines_per_language", "model", "pooling", "la_examples", "sentence_fraction", "doc_fraction",
    "unimax_n", "la_weights", "lora_rank", "lora_alpha", "lora_it_fraction", "stages", "run_cpt",
    "max_new_tokens"};

struct StageSlot {
  const char* key;
  Stage stage;
  StageConfig PipelineConfig::*member;
};

const std::vector<StageSlot>& stage_slots() {
  static const std::vector<StageSlot> slots{
      {"pretrain", Stage::kFullCpt, &PipelineConfig::pretrain},
      {"instruct", Stage::kInstructTune, &PipelineConfig::instruct},
      {"lang_adapt", Stage::kLangAdapt, &PipelineConfig::lang_adapt},
      {"lora_adapt", Stage::kLoraAdapt, &PipelineConfig::lora_adapt},
      {"cpt", Stage::kFullCpt, &PipelineConfig::cpt},
      {"cpt_tune", Stage::kFullCpt, &PipelineConfig::cpt_tune},
  };
  return slots;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("pipeline config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kTopKeys.count(key)) throw InvalidArgument("pipeline config: unknown key '" + key + "'");
  }
  PipelineConfig c;
  try {
    c.artifacts_root = j.value("artifacts_root", c.artifacts_root.string());
    c.seed = j.value("seed", c.seed);
    derive_stage_seeds(c);
    if (j.contains("synth")) c.synth = j["synth"].get<SyntheticLangSpec>();
    c.donor_vocab_size = j.value("donor_vocab_size", c.donor_vocab_size);
    c.custom_vocab_size = j.value("custom_vocab_size", c.custom_vocab_size);
    c.prune_min_count = j.value("prune_min_count", c.prune_min_count);
    c.bpe_lines_per_language = j.value("bpe_lines_per_language", c.bpe_lines_per_language);
    if (j.contains("model")) {
      json m = c.model;
      m.update(j["model"]);
      c.model = m.get<ModelConfig>();
    }
    if (j.contains("pooling")) {
      const auto p = j["pooling"].get<std::string>();
      if (p == "AVG") c.pooling = Pooling::kAverage;
      else if (p == "MAX") c.pooling = Pooling::kMax;
      else throw InvalidArgument("pipeline config: pooling must be AVG or MAX");
    }
    c.la_examples = j.value("la_examples", c.la_examples);
    c.sentence_fraction = j.value("sentence_fraction", c.sentence_fraction);
    c.doc_fraction = j.value("doc_fraction", c.doc_fraction);
    c.unimax_n = j.value("unimax_n", c.unimax_n);
    if (j.contains("la_weights")) c.la_weights = j["la_weights"].get<std::map<std::string, double>>();
    c.lora_rank = j.value("lora_rank", c.lora_rank);
    c.lora_alpha = j.value("lora_alpha", static_cast<double>(c.lora_rank));
    c.lora_it_fraction = j.value("lora_it_fraction", c.lora_it_fraction);
    c.run_cpt = j.value("run_cpt", c.run_cpt);
    c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
    if (j.contains("stages")) {
      const json& stages = j["stages"];
      for (const auto& [key, _] : stages.items()) {
        const auto& slots = stage_slots();
        if (std::none_of(slots.begin(), slots.end(), [&](const StageSlot& s) { return key == s.key; })) {
          throw InvalidArgument("pipeline config: unknown stage '" + key + "'");
        }
      }
      for (const auto& slot : stage_slots()) {
        if (!stages.contains(slot.key)) continue;
        json merged = c.*slot.member;
        merged.update(stages[slot.key]);
        merged["stage"] = std::string(to_string(slot.stage));
        c.*slot.member = merged.get<StageConfig>();
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

json to_json(const PipelineConfig& c) {
  json model = c.model;
  model.erase("vocab_size");
  json j{{"artifacts_root", c.artifacts_root.string()},
         {"seed", c.seed},
         {"synth", c.synth},
         {"donor_vocab_size", c.donor_vocab_size},
         {"custom_vocab_size", c.custom_vocab_size},
         {"prune_min_count", c.prune_min_count},
         {"bpe_lines_per_language", c.bpe_lines_per_language},
         {"model", model},
         {"pooling", c.pooling == Pooling::kAverage ? "AVG" : "MAX"},
         {"la_examples", c.la_examples},
         {"sentence_fraction", c.sentence_fraction},
         {"doc_fraction", c.doc_fraction},
         {"unimax_n", c.unimax_n},
         {"la_weights", c.la_weights},
         {"lora_rank", c.lora_rank},
         {"lora_alpha", c.lora_alpha},
         {"lora_it_fraction", c.lora_it_fraction},
         {"run_cpt", c.run_cpt},
         {"max_new_tokens", c.max_new_tokens}};
  for (const auto& slot : stage_slots()) j["stages"][slot.key] = c.*slot.member;
  return j;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pipeline config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j);
}

fs::path artifacts_root(const PipelineConfig& config) {
  if (const char* env = std::getenv(kArtifactsRootEnv); env && *env) return env;
  return config.artifacts_root;
}

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages{
      "synth",       "donor_tokenizer", "pretrain", "instruct", "custom_tokenizer", "embed_init",
      "mixtures",    "lang_adapt",      "compose",  "lora_adapt", "cpt",           "cpt_tune",
      "evaluate"};
  return stages;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void write_json(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

std::map<std::string, std::uint32_t> list_files(const fs::path& root, const fs::path& dir) {
  std::map<std::string, std::uint32_t> out;
  if (!fs::exists(dir)) return out;
  if (fs::is_regular_file(dir)) {
    out[fs::relative(dir, root).generic_string()] = file_crc32(dir);
    return out;
  }
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    out[fs::relative(e.path(), root).generic_string()] = file_crc32(e.path());
  }
  return out;
}

std::vector<Example> read_examples(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<Example> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    out.push_back({j.at("language").get<std::string>(), j.at("text").get<std::string>()});
  }
  return out;
}

void write_examples(const fs::path& p, std::span<const Example> examples) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  for (const auto& e : examples) out << json{{"language", e.language}, {"text", e.text}}.dump() << '\n';
  if (!out) throw IoError("write failed: " + p.string());
}

std::vector<std::string> texts(std::span<const Example> examples) {
  std::vector<std::string> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.text);
  return out;
}

std::vector<TaggedText> tagged(const std::string& lang, std::span<const std::string> lines) {
  std::vector<TaggedText> out;
  for (const auto& l : lines) out.emplace_back(lang, l);
  return out;
}

PackedSequences pack_lines(const TokenizerModel& tok, std::span<const std::string> lines, std::size_t pack_len) {
  const auto ids = encode_lines(tok, lines);
  return pack_examples(ids, pack_len);
}

class Runner {
 public:
  Runner(const PipelineConfig& config, fs::path root, std::ostream* log)
      : c_(config), root_(std::move(root)), log_(log) {}

  PipelineResult run() {
    fs::create_directories(root_);
    const json cfg = to_json(c_);
    json cfg_for_hash = cfg;
    cfg_for_hash.erase("artifacts_root");
    const std::string fp = fingerprint_hex(fnv1a(cfg_for_hash.dump()));

    const fs::path manifest_path = root_ / "manifest.json";
    json manifest{{"config_fingerprint", fp}, {"stages", json::object()}, {"files", json::object()}};
    if (fs::exists(manifest_path)) {
      try {
        json old = read_json(manifest_path);
        if (old.value("config_fingerprint", "") == fp) manifest["stages"] = old.value("stages", json::object());
      } catch (const IoError&) {
        // Unreadable manifest: start over.
      }
    }
    write_json(root_ / "config.json", cfg);
    manifest["files"] = list_files(root_, root_ / "config.json");
    write_json(manifest_path, manifest);

    PipelineResult result;
    result.root = root_;
    bool upstream_ran = false;
    const std::map<std::string, std::function<void(const fs::path&)>> actions{
        {"synth", [this](const fs::path& d) { synth(d); }},
        {"donor_tokenizer", [this](const fs::path& d) { donor_tokenizer(d); }},
        {"pretrain", [this](const fs::path& d) { pretrain(d); }},
        {"instruct", [this](const fs::path& d) { instruct(d); }},
        {"custom_tokenizer", [this](const fs::path& d) { custom_tokenizer(d); }},
        {"embed_init", [this](const fs::path& d) { embed_init(d); }},
        {"mixtures", [this](const fs::path& d) { mixtures(d); }},
        {"lang_adapt", [this](const fs::path& d) { lang_adapt(d); }},
        {"compose", [this](const fs::path& d) { compose_stage(d); }},
        {"lora_adapt", [this](const fs::path& d) { lora_adapt(d); }},
        {"cpt", [this](const fs::path& d) { cpt(d); }},
        {"cpt_tune", [this](const fs::path& d) { cpt_tune(d); }},
        {"evaluate", [this](const fs::path& d) { evaluate(d); }},
    };
    for (const auto& name : pipeline_stages()) {
      if (!c_.run_cpt && (name == "cpt" || name == "cpt_tune")) continue;
      const fs::path dir = root_ / name;
      if (!upstream_ran && intact(manifest["stages"], name, dir)) {
        result.skipped.push_back(name);
        note(fmt::format("[{}] artifacts intact, skipped", name));
        continue;
      }
      upstream_ran = true;
      manifest["stages"].erase(name);
      write_json(manifest_path, manifest);
      fs::remove_all(dir);
      fs::create_directories(dir);
      note(fmt::format("[{}] running", name));
      try {
        actions.at(name)(dir);
      } catch (const std::exception& e) {
        throw StageFailure(name, e.what());
      }
      manifest["stages"][name] = {{"files", list_files(root_, dir)}};
      write_json(manifest_path, manifest);
      result.ran.push_back(name);
    }
    result.report = read_json(root_ / "evaluate" / "report.json");
    result.checks_passed = result.report.at("checks").at("all_passed").get<bool>();
    return result;
  }

 private:
  bool intact(const json& stages, const std::string& name, const fs::path& dir) const {
    if (!stages.contains(name)) return false;
    const auto recorded = stages[name].at("files").get<std::map<std::string, std::uint32_t>>();
    try {
      return list_files(root_, dir) == recorded;
    } catch (const std::exception&) {
      return false;
    }
  }

  void note(const std::string& s) const {
    if (log_) *log_ << s << std::endl;
  }

  const std::string& base() const { return c_.synth.base_language; }
  const std::string& target() const { return c_.synth.target_language; }
  fs::path synth_dir() const { return root_ / "synth"; }

  std::vector<std::string> lines(const fs::path& rel) const { return read_lines(synth_dir() / rel); }

  std::vector<std::string> base_pretraining_lines() const {
    auto out = lines(fs::path("corpus") / (base() + ".sent.txt"));
    auto docs = lines(fs::path("corpus") / (base() + ".doc.txt"));
    out.insert(out.end(), docs.begin(), docs.end());
    return out;
  }

  ModelConfig model_for(std::size_t vocab) const {
    ModelConfig m = c_.model;
    m.vocab_size = vocab;
    return m;
  }

  TrainOptions options_for(const fs::path& dir, std::ofstream& metrics,
                           std::function<double(const ParameterStore<float>&)> evaluator = {}) const {
    metrics.open(dir / "metrics.ndjson", std::ios::binary);
    if (!metrics) throw IoError("cannot write metrics log in " + dir.string());
    TrainOptions o;
    o.metrics_log = &metrics;
    o.evaluator = std::move(evaluator);
    return o;
  }

  Checkpoint train(const Checkpoint& start, const PackedSequences& data, const StageConfig& config,
                   const fs::path& dir, std::function<double(const ParameterStore<float>&)> evaluator = {}) {
    std::ofstream metrics;
    auto [params, m] = train_stage(start.params, data, config, options_for(dir, metrics, std::move(evaluator)));
    note(fmt::format("  {} steps, loss {:.4f} -> {:.4f}, {:.1f}s", m.losses.size(),
                     m.losses.empty() ? 0.0 : m.losses.front(), m.losses.empty() ? 0.0 : m.losses.back(),
                     m.wall_seconds));
    return {std::move(params), start.vocab_fingerprint};
  }

  void synth(const fs::path& dir) {
    const auto corpora = gen_synthetic_corpora(c_.synth);
    write_synthetic(corpora, c_.synth, dir);
  }

  void donor_tokenizer(const fs::path& dir) {
    auto corpus = base_pretraining_lines();
    const auto distractor = lines(fs::path("distractor") / (c_.synth.distractor_language + ".txt"));
    corpus.insert(corpus.end(), distractor.begin(), distractor.end());
    save_tokenizer(train_bpe(corpus, c_.donor_vocab_size), dir / "tokenizer.json");
  }

  TokenizerModel donor_tok() const { return load_tokenizer(root_ / "donor_tokenizer" / "tokenizer.json"); }
  TokenizerModel custom_tok() const { return load_tokenizer(root_ / "custom_tokenizer" / "tokenizer.json"); }

  void pretrain(const fs::path& dir) {
    const auto tok = donor_tok();
    const auto data = pack_lines(tok, base_pretraining_lines(), c_.pretrain.pack_len);
    Checkpoint start{init_model(model_for(tok.size()), c_.seed), tok.fingerprint()};
    save_checkpoint(train(start, data, c_.pretrain, dir), dir / "ckpt");
  }

  void instruct(const fs::path& dir) {
    const auto tok = donor_tok();
    const auto data = pack_lines(tok, lines(fs::path("instruct") / (base() + ".txt")), c_.instruct.pack_len);
    save_checkpoint(train(load_checkpoint(root_ / "pretrain" / "ckpt"), data, c_.instruct, dir), dir / "ckpt");
  }

  void custom_tokenizer(const fs::path& dir) {
    const auto donor = donor_tok();
    const auto english = base_pretraining_lines();
    const auto retained = prune_to_english(donor, english, c_.prune_min_count);

    std::vector<LanguageCorpus> pool;
    pool.push_back({base(), english, 0});
    auto tgt = lines(fs::path("corpus") / (target() + ".sent.txt"));
    const auto tgt_docs = lines(fs::path("corpus") / (target() + ".doc.txt"));
    tgt.insert(tgt.end(), tgt_docs.begin(), tgt_docs.end());
    pool.push_back({target(), tgt, 0});
    const auto capped = cap_sample(pool, c_.bpe_lines_per_language, derive_seed(c_.seed, 7));
    std::vector<std::string> bpe_corpus;
    for (const auto& lc : capped) bpe_corpus.insert(bpe_corpus.end(), lc.lines.begin(), lc.lines.end());
    const auto multilingual = train_bpe(bpe_corpus, c_.custom_vocab_size);
    const auto custom = extend(retained, multilingual, c_.custom_vocab_size);
    save_tokenizer(custom, dir / "tokenizer.json");
    write_json(dir / "summary.json", {{"retained", retained.size()},
                                      {"donor_size", donor.size()},
                                      {"size", custom.size()},
                                      {"truncated", custom.truncated()},
                                      {"overlap_with_donor", overlap(custom, donor)}});
  }

  void embed_init(const fs::path& dir) {
    const auto donor_ckpt = load_checkpoint(root_ / "pretrain" / "ckpt");
    const auto r = init_embeddings(donor_ckpt.embedding(), donor_tok(), custom_tok(), c_.pooling);
    save_embedding(r.embedding, dir / "embedding.bin");
    write_json(dir / "report.json", {{"copied", r.report.copied_count},
                                     {"pooled", r.report.pooled_count},
                                     {"overlap_fraction", r.report.overlap_fraction}});
  }

  void mixtures(const fs::path& dir) {
    const auto corpora = load_corpus_dir(synth_dir() / "corpus");
    MixtureSpec spec;
    auto weight_of = [&](const std::string& lang) {
      auto it = c_.la_weights.find(lang);
      return it == c_.la_weights.end() ? 1.0 : it->second;
    };
    for (const auto& lc : corpora.sentence) spec.sentence_sources.push_back({lc, weight_of(lc.language)});
    for (const auto& lc : corpora.doc) spec.doc_sources.push_back({lc, weight_of(lc.language)});
    spec.sentence_fraction = c_.sentence_fraction;
    spec.doc_fraction = c_.doc_fraction;
    spec.unimax_n = c_.unimax_n;
    spec.english_language = base();
    spec.seed = derive_seed(c_.seed, 11);
    const auto d_la = compose_pretraining_mixture(spec, c_.la_examples);
    write_examples(dir / "d_la.jsonl", d_la);

    std::vector<Example> d_it;
    for (auto& l : lines(fs::path("instruct") / (base() + ".txt"))) d_it.push_back({base(), std::move(l)});
    const auto d_mix = compose_lora_mixture(d_it, d_la, c_.lora_it_fraction, derive_seed(c_.seed, 12));
    write_examples(dir / "d_mix.jsonl", d_mix);
  }

  std::function<double(const ParameterStore<float>&)> target_dev_evaluator(const TokenizerModel& tok) const {
    auto dev = std::make_shared<std::vector<TaggedText>>(
        tagged(target(), lines(fs::path("eval") / (target() + ".dev.txt"))));
    const std::string lang = target();
    return [dev, &tok, lang](const ParameterStore<float>& p) {
      return perplexity(p, tok, *dev).at(lang).word_perplexity;
    };
  }

  Checkpoint donor_initialized() const {
    const auto emb = load_embedding(root_ / "embed_init" / "embedding.bin");
    return compose(load_checkpoint(root_ / "pretrain" / "ckpt"), emb, custom_tok().fingerprint());
  }

  void lang_adapt(const fs::path& dir) {
    const auto tok = custom_tok();
    const auto d_la = read_examples(root_ / "mixtures" / "d_la.jsonl");
    const auto data = pack_lines(tok, texts(d_la), c_.lang_adapt.pack_len);
    const auto trained = train(donor_initialized(), data, c_.lang_adapt, dir, target_dev_evaluator(tok));
    save_checkpoint(trained, dir / "ckpt");
    save_embedding(trained.embedding(), dir / "embedding.bin");
  }

  void compose_stage(const fs::path& dir) {
    const auto body = load_checkpoint(root_ / "instruct" / "ckpt");
    const auto emb = load_embedding(root_ / "lang_adapt" / "embedding.bin");
    save_checkpoint(compose(body, emb, custom_tok().fingerprint()), dir / "ckpt");
  }

  void lora_adapt(const fs::path& dir) {
    const auto tok = custom_tok();
    auto start = load_checkpoint(root_ / "compose" / "ckpt");
    inject_lora(start.params, c_.lora_rank, c_.lora_alpha, derive_seed(c_.seed, 13));
    const auto d_mix = read_examples(root_ / "mixtures" / "d_mix.jsonl");
    const auto data = pack_lines(tok, texts(d_mix), c_.lora_adapt.pack_len);
    save_checkpoint(train(start, data, c_.lora_adapt, dir), dir / "ckpt");
  }

  void cpt(const fs::path& dir) {
    const auto tok = custom_tok();
    const auto d_la = read_examples(root_ / "mixtures" / "d_la.jsonl");
    const auto data = pack_lines(tok, texts(d_la), c_.cpt.pack_len);
    save_checkpoint(train(donor_initialized(), data, c_.cpt, dir), dir / "ckpt");
  }

  void cpt_tune(const fs::path& dir) {
    const auto tok = custom_tok();
    const auto data = pack_lines(tok, lines(fs::path("instruct") / (base() + ".txt")), c_.cpt_tune.pack_len);
    save_checkpoint(train(load_checkpoint(root_ / "cpt" / "ckpt"), data, c_.cpt_tune, dir), dir / "ckpt");
  }

  json evaluate_model(const ParameterStore<float>& p, const TokenizerModel& tok,
                      std::span<const TaggedText> heldout, std::span<const EvalTask> tasks) const {
    EvalResult r;
    r.perplexity = perplexity(p, tok, heldout);
    r.tasks = evaluate_tasks(p, tok, tasks, {}, c_.max_new_tokens);
    return to_json(r);
  }

  void evaluate(const fs::path& dir) {
    const auto donor = donor_tok();
    const auto custom = custom_tok();
    std::vector<TaggedText> heldout;
    for (const auto& lang : {base(), target()}) {
      const auto t = tagged(lang, lines(fs::path("eval") / (lang + ".heldout.txt")));
      heldout.insert(heldout.end(), t.begin(), t.end());
    }
    const auto tasks = load_eval_tasks(synth_dir() / "eval" / "tasks.jsonl");

    json report;
    const std::vector<std::tuple<std::string, std::string, const TokenizerModel*>> models{
        {"pretrained", "pretrain", &donor},   {"instruct_baseline", "instruct", &donor},
        {"composed", "compose", &custom},     {"adapted", "lora_adapt", &custom},
        {"cpt", "cpt_tune", &custom}};
    for (const auto& [name, stage, tok] : models) {
      if (!c_.run_cpt && name == "cpt") continue;
      const auto ckpt = load_checkpoint(root_ / stage / "ckpt");
      note(fmt::format("  evaluating {}", name));
      report["models"][name] = evaluate_model(ckpt.params, *tok, heldout, tasks);
    }

    const auto fd = fertility(donor, heldout);
    const auto fc = fertility(custom, heldout, &donor);
    auto fert_json = [](const FertilityReport& f) {
      json j;
      for (const auto& [lang, lf] : f.languages) {
        j[lang] = {{"tokens", lf.token_count}, {"words", lf.word_count}, {"fertility", lf.fertility}};
      }
      return j;
    };
    report["fertility"] = {{"donor", fert_json(fd)}, {"custom", fert_json(fc)}};

    const auto& m = report["models"];
    auto wppl = [&](const char* model, const std::string& lang) {
      return m.at(model).at("perplexity").at(lang).at("word_perplexity").get<double>();
    };
    auto acc = [&](const char* model, const std::string& lang) {
      return m.at(model).at("tasks").at(lang).at("accuracy").get<double>();
    };
    json checks;
    checks["fertility_target_ratio"] =
        fc.languages.at(target()).fertility / fd.languages.at(target()).fertility;
    checks["fertility_base_ratio"] = fc.languages.at(base()).fertility / fd.languages.at(base()).fertility;
    checks["target_ppl_reduction"] = 1.0 - wppl("adapted", target()) / wppl("instruct_baseline", target());
    checks["target_accuracy_gain_pp"] = 100.0 * (acc("adapted", target()) - acc("instruct_baseline", target()));
    checks["base_ppl_regression"] = wppl("adapted", base()) / wppl("instruct_baseline", base()) - 1.0;
    bool ok = checks["fertility_target_ratio"].get<double>() <= 0.6 &&
              checks["fertility_base_ratio"].get<double>() <= 1.1 &&
              checks["target_ppl_reduction"].get<double>() >= 0.2 &&
              checks["target_accuracy_gain_pp"].get<double>() >= 15.0 &&
              checks["base_ppl_regression"].get<double>() < 0.1;
    if (c_.run_cpt) {
      const double pre = wppl("pretrained", base());
      checks["cpt_base_ppl_increase"] = wppl("cpt", base()) - pre;
      checks["adapted_base_ppl_increase"] = wppl("adapted", base()) - pre;
      ok = ok && checks["cpt_base_ppl_increase"].get<double>() > checks["adapted_base_ppl_increase"].get<double>();
    }
    checks["all_passed"] = ok;
    report["checks"] = checks;
    write_json(dir / "report.json", report);
  }

  const PipelineConfig& c_;
  fs::path root_;
  std::ostream* log_;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log) {
  config.validate();
  return Runner(config, artifacts_root(config), log).run();
}

}  // namespace graft
