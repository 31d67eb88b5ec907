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

#include <cstdlib>
#include <fstream>

#include "fixtures.hpp"
#include "graft/checkpoint.hpp"
#include "graft/error.hpp"
#include "graft/pipeline.hpp"

namespace graft {
namespace {

namespace fs = std::filesystem;

nlohmann::json tiny_config_json(std::size_t steps) {
  nlohmann::json stage{{"max_steps", steps}, {"pack_len", 32}, {"batch_size", 4}};
  nlohmann::json stages;
  for (const char* s : {"pretrain", "instruct", "lang_adapt", "lora_adapt", "cpt", "cpt_tune"}) stages[s] = stage;
  return {
      {"seed", 5},
      {"synth",
       {{"num_names", 100}, {"base_sentences", 600}, {"base_docs", 60}, {"target_sentences", 300},
        {"target_docs", 30}, {"parallel_pairs", 60}, {"distractor_lines", 60}, {"instruct_examples", 120},
        {"eval_tasks_per_language", 8}, {"heldout_lines", 20}, {"dev_lines", 10}}},
      {"donor_vocab_size", 320},
      {"custom_vocab_size", 360},
      {"bpe_lines_per_language", 300},
      {"model", {{"model_dim", 16}, {"num_layers", 1}, {"num_heads", 2}, {"mlp_hidden", 32}, {"max_seq_len", 32}}},
      {"la_examples", 200},
      {"lora_rank", 2},
      {"max_new_tokens", 4},
      {"stages", stages},
  };
}

PipelineConfig tiny_config(const fs::path& root, std::size_t steps) {
  auto c = pipeline_config_from_json(tiny_config_json(steps));
  c.artifacts_root = root;
  return c;
}

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(PipelineConfig, RejectsUnknownKeys) {
  auto j = tiny_config_json(1);
  j["learning_rate"] = 1;
  EXPECT_THROW(pipeline_config_from_json(j), InvalidArgument);
  j = tiny_config_json(1);
  j["stages"]["warmup"] = nlohmann::json::object();
  EXPECT_THROW(pipeline_config_from_json(j), InvalidArgument);
}

TEST(PipelineConfig, StageOverridesMergeOntoDefaults) {
  const auto c = pipeline_config_from_json(tiny_config_json(3));
  EXPECT_EQ(c.lang_adapt.max_steps, 3u);
  EXPECT_EQ(c.lang_adapt.stage, Stage::kLangAdapt);
  EXPECT_DOUBLE_EQ(c.lang_adapt.learning_rate, PipelineConfig().lang_adapt.learning_rate);
  EXPECT_DOUBLE_EQ(c.lora_adapt.warmup_fraction, 0.1);
  EXPECT_NE(c.pretrain.seed, c.instruct.seed);
  const auto again = pipeline_config_from_json(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
}

TEST(PipelineConfig, EnvironmentOverridesTheRoot) {
  auto c = pipeline_config_from_json(tiny_config_json(1));
  c.artifacts_root = "from-config";
  ::setenv(kArtifactsRootEnv, "/tmp/from-env", 1);
  EXPECT_EQ(artifacts_root(c), fs::path("/tmp/from-env"));
  ::unsetenv(kArtifactsRootEnv);
  EXPECT_EQ(artifacts_root(c), fs::path("from-config"));
}

TEST(Pipeline, NoTrainingComposesDonorInitializedEmbeddings) {
  testing::ScratchDir dir("pipe0");
  const auto result = run_pipeline(tiny_config(dir.path(), 0));
  EXPECT_EQ(result.ran, pipeline_stages());
  const auto pre = load_checkpoint(dir.path() / "pretrain" / "ckpt");
  const auto init = load_embedding(dir.path() / "embed_init" / "embedding.bin");
  const auto composed = load_checkpoint(dir.path() / "compose" / "ckpt");
  EXPECT_EQ(composed.params.layers, pre.params.layers);
  EXPECT_EQ(composed.params.final_norm, pre.params.final_norm);
  EXPECT_EQ(composed.embedding(), init);
  EXPECT_EQ(load_checkpoint(dir.path() / "instruct" / "ckpt"), pre);
  EXPECT_TRUE(result.report.contains("checks"));
  EXPECT_TRUE(result.report.contains("models"));
}

class TrainedPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::ScratchDir("pipe");
    first_ = new PipelineResult(run_pipeline(tiny_config(dir_->path(), 4)));
  }
  static void TearDownTestSuite() {
    delete first_;
    delete dir_;
  }
  static testing::ScratchDir* dir_;
  static PipelineResult* first_;
};
testing::ScratchDir* TrainedPipeline::dir_ = nullptr;
PipelineResult* TrainedPipeline::first_ = nullptr;

TEST_F(TrainedPipeline, ManifestListsEveryFile) {
  const auto manifest = nlohmann::json::parse(std::ifstream(dir_->path() / "manifest.json"));
  std::map<std::string, std::uint32_t> listed;
  for (const auto& [name, stage] : manifest.at("stages").items()) {
    for (const auto& [rel, crc] : stage.at("files").items()) listed[rel] = crc.get<std::uint32_t>();
  }
  for (const auto& [rel, crc] : manifest.at("files").items()) listed[rel] = crc.get<std::uint32_t>();
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_->path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir_->path()).generic_string();
    if (rel == "manifest.json") continue;
    ++files;
    ASSERT_EQ(listed.count(rel), 1u) << rel << " missing from the manifest";
    EXPECT_EQ(listed[rel], file_crc32(e.path())) << rel;
  }
  EXPECT_EQ(files, listed.size());
  EXPECT_EQ(manifest.at("stages").size(), pipeline_stages().size());
}

TEST_F(TrainedPipeline, RerunSkipsEverything) {
  const auto final_body = bytes_of(dir_->path() / "lora_adapt" / "ckpt" / "body.bin");
  const auto again = run_pipeline(tiny_config(dir_->path(), 4));
  EXPECT_TRUE(again.ran.empty());
  EXPECT_EQ(again.skipped, pipeline_stages());
  EXPECT_EQ(bytes_of(dir_->path() / "lora_adapt" / "ckpt" / "body.bin"), final_body);
}

TEST_F(TrainedPipeline, DamagedStageReRunsWithIdenticalResults) {
  const auto ckpt = dir_->path() / "lora_adapt" / "ckpt";
  const auto before = load_checkpoint(ckpt);
  fs::remove(ckpt / "lora.bin");
  const auto again = run_pipeline(tiny_config(dir_->path(), 4));
  ASSERT_FALSE(again.ran.empty());
  EXPECT_EQ(again.ran.front(), "lora_adapt");
  EXPECT_EQ(again.ran.back(), "evaluate");
  EXPECT_EQ(std::count(again.skipped.begin(), again.skipped.end(), "compose"), 1);
  EXPECT_EQ(load_checkpoint(ckpt), before);
  EXPECT_EQ(again.report, first_->report);
}

TEST_F(TrainedPipeline, FreezeContractsHoldOnDisk) {
  const auto pre = load_checkpoint(dir_->path() / "pretrain" / "ckpt");
  const auto it = load_checkpoint(dir_->path() / "instruct" / "ckpt");
  const auto la = load_checkpoint(dir_->path() / "lang_adapt" / "ckpt");
  const auto composed = load_checkpoint(dir_->path() / "compose" / "ckpt");
  const auto adapted = load_checkpoint(dir_->path() / "lora_adapt" / "ckpt");
  EXPECT_EQ(it.params.embedding, pre.params.embedding);
  EXPECT_EQ(la.params.layers, pre.params.layers);
  EXPECT_EQ(composed.params.layers, it.params.layers);
  EXPECT_EQ(composed.params.embedding, la.params.embedding);
  EXPECT_EQ(adapted.params.layers, composed.params.layers);
  EXPECT_EQ(adapted.params.embedding, composed.params.embedding);
  ASSERT_TRUE(adapted.params.lora.has_value());
  EXPECT_EQ(adapted.params.lora->rank, 2u);
}

TEST(Pipeline, FailingStageIsNamedAndEarlierArtifactsStay) {
  testing::ScratchDir dir("pipefail");
  auto j = tiny_config_json(0);
  j["la_examples"] = 1000000;
  auto c = pipeline_config_from_json(j);
  c.artifacts_root = dir.path();
  try {
    run_pipeline(c);
    FAIL() << "expected a stage failure";
  } catch (const StageFailure& e) {
    EXPECT_EQ(e.stage(), "mixtures");
  }
  EXPECT_TRUE(fs::exists(dir.path() / "embed_init" / "embedding.bin"));
  EXPECT_TRUE(fs::exists(dir.path() / "manifest.json"));
}

}  // namespace
}  // namespace graft
