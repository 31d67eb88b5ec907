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

// Runs the command-line tool as a subprocess and checks exit codes.

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"

namespace fs = std::filesystem;
using graft::testing::ScratchDir;

namespace {

struct Run {
  int status = -1;
  std::string err;
};

// Arguments are passed through the shell unquoted; tests only use safe paths.
Run run_cli(const std::string& args, const fs::path& dir) {
  const fs::path err_file = dir / "stderr.txt";
  const std::string cmd = std::string(GRAFT_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() +
                          " 2> " + err_file.string();
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(err_file);
  r.err.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

nlohmann::json tiny_pipeline(std::size_t steps) {
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

nlohmann::json small_synth() {
  return {{"num_names", 50},         {"base_sentences", 100}, {"base_docs", 10},  {"target_sentences", 50},
          {"target_docs", 5},        {"parallel_pairs", 20},  {"distractor_lines", 20}, {"instruct_examples", 20},
          {"eval_tasks_per_language", 4}, {"heldout_lines", 5}, {"dev_lines", 5}};
}

fs::path write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream(p) << j.dump(2);
  return p;
}

TEST(Cli, HelpExitsZero) {
  ScratchDir dir("cli");
  EXPECT_EQ(run_cli("--help", dir.path()).status, 0);
}

TEST(Cli, UnknownFlagIsAConfigError) {
  ScratchDir dir("cli");
  EXPECT_EQ(run_cli("synth gen --out x --bogus 1", dir.path()).status, 2);
  EXPECT_EQ(run_cli("", dir.path()).status, 2);
}

TEST(Cli, SynthGenWritesFiles) {
  ScratchDir dir("cli");
  const auto cfg = write_json(dir.path() / "spec.json", small_synth());
  const auto out = dir.path() / "synth";
  const auto r = run_cli("synth gen --config " + cfg.string() + " --out " + out.string(), dir.path());
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_FALSE(fs::is_empty(out));
}

TEST(Cli, ConfigFileWinsOverFlagsWithAWarning) {
  ScratchDir dir("cli");
  auto spec = small_synth();
  spec["seed"] = 3;
  const auto cfg = write_json(dir.path() / "spec.json", spec);
  const auto r = run_cli("synth gen --config " + cfg.string() + " --seed 9 --out " + (dir.path() / "s").string(),
                         dir.path());
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.err.find("warning: --seed ignored"), std::string::npos) << r.err;
}

TEST(Cli, UnknownPipelineKeyIsAConfigError) {
  ScratchDir dir("cli");
  auto j = tiny_pipeline(0);
  j["not_a_key"] = 1;
  const auto cfg = write_json(dir.path() / "p.json", j);
  const auto r = run_cli("pipeline run --config " + cfg.string() + " --artifacts-root " +
                             (dir.path() / "art").string(),
                         dir.path());
  EXPECT_EQ(r.status, 2) << r.err;
}

TEST(Cli, StageFailureExitsThree) {
  ScratchDir dir("cli");
  auto j = tiny_pipeline(0);
  j["la_examples"] = 1000000;
  const auto cfg = write_json(dir.path() / "p.json", j);
  const auto r = run_cli("pipeline run --config " + cfg.string() + " --artifacts-root " +
                             (dir.path() / "art").string(),
                         dir.path());
  EXPECT_EQ(r.status, 3) << r.err;
  EXPECT_NE(r.err.find("mixtures"), std::string::npos) << r.err;
}

TEST(Cli, FailedChecksExitFourOnlyWithCheck) {
  ScratchDir dir("cli");
  const auto cfg = write_json(dir.path() / "p.json", tiny_pipeline(0));
  const auto root = (dir.path() / "art").string();
  const auto plain = run_cli("pipeline run --config " + cfg.string() + " --artifacts-root " + root, dir.path());
  EXPECT_EQ(plain.status, 0) << plain.err;
  const auto checked =
      run_cli("pipeline run --check --config " + cfg.string() + " --artifacts-root " + root, dir.path());
  EXPECT_EQ(checked.status, 4) << checked.err;
}

}  // namespace
