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
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "graft/sampler.hpp"
#include "graft/surgery.hpp"
#include "graft/synth.hpp"
#include "graft/trainer.hpp"

namespace graft {

// Environment variable that overrides PipelineConfig::artifacts_root.
inline constexpr const char* kArtifactsRootEnv = "GRAFT_ARTIFACTS_ROOT";

struct PipelineConfig {
  std::filesystem::path artifacts_root = "artifacts";
  std::uint64_t seed = 1234;
  SyntheticLangSpec synth;
  std::size_t donor_vocab_size = 1024;
  std::size_t custom_vocab_size = 2000;
  std::size_t prune_min_count = 1;
  // Lines per language fed to the multilingual BPE trainer.
  std::size_t bpe_lines_per_language = 4000;
  ModelConfig model;  // vocab_size is filled per tokenizer
  Pooling pooling = Pooling::kAverage;

  // Language-adaptation mixture.
  std::size_t la_examples = 8000;
  double sentence_fraction = 0.65;
  double doc_fraction = 0.35;
  std::uint64_t unimax_n = 5;
  std::map<std::string, double> la_weights;

  std::size_t lora_rank = 4;
  double lora_alpha = 4.0;
  double lora_it_fraction = 0.5;

  StageConfig pretrain = StageConfig::defaults(Stage::kFullCpt);
  StageConfig instruct = StageConfig::defaults(Stage::kInstructTune);
  StageConfig lang_adapt = StageConfig::defaults(Stage::kLangAdapt);
  StageConfig lora_adapt = StageConfig::defaults(Stage::kLoraAdapt);
  // Baseline: full tuning on the adaptation mixture, then full tuning on
  // the instruction data.
  StageConfig cpt = StageConfig::defaults(Stage::kFullCpt);
  StageConfig cpt_tune = StageConfig::defaults(Stage::kFullCpt);
  bool run_cpt = true;

  std::size_t max_new_tokens = 16;

  PipelineConfig();
  void validate() const;
};

// Unknown keys are rejected. Stage seeds default to values derived from
// the top-level seed.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineResult {
  std::filesystem::path root;
  std::vector<std::string> ran;
  std::vector<std::string> skipped;
  nlohmann::json report;
  bool checks_passed = false;
};

// Stage order.
const std::vector<std::string>& pipeline_stages();

// Runs every stage, skipping stages whose recorded artifacts are intact.
// Writes <root>/manifest.json listing each file with its CRC32. A failing
// stage throws StageFailure; earlier artifacts stay on disk.
PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log = nullptr);

// Resolved artifacts root (environment override applied).
std::filesystem::path artifacts_root(const PipelineConfig& config);

}  // namespace graft
