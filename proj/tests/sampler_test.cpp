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

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "graft/error.hpp"
#include "graft/sampler.hpp"

namespace graft {
namespace {

LanguageCorpus numbered(const std::string& lang, const std::string& prefix, std::size_t n) {
  LanguageCorpus c{lang, {}, 0};
  for (std::size_t i = 0; i < n; ++i) c.lines.push_back(prefix + std::to_string(i));
  return c;
}

TEST(CapSample, SmallCorpusPassesThrough) {
  const std::vector<LanguageCorpus> in{numbered("en", "l", 100)};
  const auto out = cap_sample(in, 500, 1);
  EXPECT_EQ(out[0].lines, in[0].lines);
}

TEST(CapSample, LargeCorpusIsCutToTheCap) {
  const std::vector<LanguageCorpus> in{numbered("en", "l", 1000), numbered("sw", "s", 10)};
  const auto out = cap_sample(in, 500, 1);
  ASSERT_EQ(out[0].lines.size(), 500u);
  const std::set<std::string> original(in[0].lines.begin(), in[0].lines.end());
  const std::set<std::string> drawn(out[0].lines.begin(), out[0].lines.end());
  EXPECT_EQ(drawn.size(), 500u);
  for (const auto& l : out[0].lines) EXPECT_TRUE(original.count(l));
  EXPECT_EQ(out[1].lines.size(), 10u);
  EXPECT_EQ(cap_sample(in, 500, 1)[0].lines, out[0].lines);
  EXPECT_NE(cap_sample(in, 500, 2)[0].lines, out[0].lines);
  EXPECT_THROW(cap_sample(in, 0, 1), InvalidArgument);
}

TEST(TemperatureWeights, Examples) {
  const std::vector<double> sizes{1, 9};
  auto p = temperature_weights(sizes, 1.0);
  EXPECT_NEAR(p[0], 0.1, 1e-15);
  EXPECT_NEAR(p[1], 0.9, 1e-15);
  p = temperature_weights(sizes, 1e9);
  EXPECT_NEAR(p[0], 0.5, 1e-6);
  EXPECT_NEAR(p[1], 0.5, 1e-6);
  const std::vector<double> sizes2{4, 16};
  p = temperature_weights(sizes2, 2.0);
  EXPECT_NEAR(p[0], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(p[1], 4.0 / 6.0, 1e-15);
}

TEST(TemperatureWeights, NormalizedAndPermutationEquivariant) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> sizes;
    const std::size_t n = 1 + rng.below(8);
    for (std::size_t i = 0; i < n; ++i) sizes.push_back(1 + rng.uniform() * 1e6);
    const double tau = 0.2 + rng.uniform() * 5;
    const auto p = temperature_weights(sizes, tau);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<double> shuffled;
    for (auto i : perm) shuffled.push_back(sizes[i]);
    const auto q = temperature_weights(shuffled, tau);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(q[k], p[perm[k]], 1e-15);
  }
}

TEST(TemperatureWeights, RejectsBadInput) {
  const std::vector<double> sizes{1, 2};
  EXPECT_THROW(temperature_weights(sizes, 0.0), InvalidArgument);
  EXPECT_THROW(temperature_weights(sizes, -1.0), InvalidArgument);
  const std::vector<double> zero{0, 2};
  EXPECT_THROW(temperature_weights(zero, 1.0), InvalidArgument);
}

TEST(TemperatureSample, DrawsTheRequestedTotal) {
  const std::vector<LanguageCorpus> in{numbered("en", "e", 900), numbered("sw", "s", 100)};
  const auto out = temperature_sample(in, 1.0, 500, 9);
  EXPECT_EQ(out[0].lines.size() + out[1].lines.size(), 500u);
  EXPECT_EQ(out[0].lines.size(), 450u);
  const auto again = temperature_sample(in, 1.0, 500, 9);
  EXPECT_EQ(again[0].lines, out[0].lines);
  EXPECT_EQ(again[1].lines, out[1].lines);
}

TEST(Unimax, Examples) {
  EXPECT_EQ(unimax_allocate(std::vector<std::uint64_t>{100, 1000, 10000}, 6000, 5),
            (std::vector<std::uint64_t>{500, 2750, 2750}));
  EXPECT_EQ(unimax_allocate(std::vector<std::uint64_t>{100, 1000, 10000}, 0, 5),
            (std::vector<std::uint64_t>{0, 0, 0}));
  EXPECT_EQ(unimax_allocate(std::vector<std::uint64_t>{10}, 1000, 5), (std::vector<std::uint64_t>{50}));
}

TEST(Unimax, ResultIsInInputOrder) {
  EXPECT_EQ(unimax_allocate(std::vector<std::uint64_t>{10000, 100, 1000}, 6000, 5),
            (std::vector<std::uint64_t>{2750, 500, 2750}));
}

TEST(Unimax, AgreesWithWaterFilling) {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const std::uint64_t epochs = 1 + rng.below(6);
    std::vector<std::uint64_t> sizes, caps;
    for (std::size_t i = 0; i < n; ++i) {
      sizes.push_back(1 + rng.below(300));
      caps.push_back(sizes.back() * epochs);
    }
    const std::uint64_t total_cap = std::accumulate(caps.begin(), caps.end(), std::uint64_t{0});
    const std::uint64_t budget = rng.below(total_cap + total_cap / 2 + 1);
    const auto alloc = unimax_allocate(sizes, budget, epochs);
    const std::uint64_t sum = std::accumulate(alloc.begin(), alloc.end(), std::uint64_t{0});
    EXPECT_LE(sum, budget);
    if (total_cap >= budget) {
      EXPECT_EQ(sum, budget) << "trial " << trial;
    }
    const std::uint64_t level = testing::water_level(caps, budget);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_LE(alloc[i], caps[i]);
      if (caps[i] <= level) {
        EXPECT_EQ(alloc[i], caps[i]) << "trial " << trial;
      } else {
        EXPECT_GE(alloc[i], level) << "trial " << trial;
        EXPECT_LE(alloc[i], level + 1) << "trial " << trial;
      }
    }
  }
}

class MixtureTest : public ::testing::Test {
 protected:
  MixtureTest() {
    spec_.sentence_sources = {{numbered("en", "en-s", 400), 1.0}, {numbered("ka", "ka-s", 100), 1.0}};
    spec_.doc_sources = {{numbered("en", "en-d", 200), 1.0}, {numbered("ka", "ka-d", 40), 1.0}};
    spec_.seed = 21;
  }
  static std::size_t count_prefix(const std::vector<Example>& ex, const std::string& infix) {
    return static_cast<std::size_t>(std::count_if(
        ex.begin(), ex.end(), [&](const Example& e) { return e.text.find(infix) != std::string::npos; }));
  }
  MixtureSpec spec_;
};

TEST_F(MixtureTest, SentenceDocumentSplit) {
  const auto mix = compose_pretraining_mixture(spec_, 200);
  ASSERT_EQ(mix.size(), 200u);
  EXPECT_EQ(count_prefix(mix, "-s"), 130u);
  EXPECT_EQ(count_prefix(mix, "-d"), 70u);
}

TEST_F(MixtureTest, QuotasFollowUnimax) {
  const auto mix = compose_pretraining_mixture(spec_, 200);
  const auto sent = unimax_allocate(std::vector<std::uint64_t>{400, 100}, 130, 5);
  const auto doc = unimax_allocate(std::vector<std::uint64_t>{200, 40}, 70, 5);
  EXPECT_EQ(count_prefix(mix, "en-s"), sent[0]);
  EXPECT_EQ(count_prefix(mix, "ka-s"), sent[1]);
  EXPECT_EQ(count_prefix(mix, "en-d"), doc[0]);
  EXPECT_EQ(count_prefix(mix, "ka-d"), doc[1]);
}

TEST_F(MixtureTest, SentenceOnly) {
  spec_.sentence_fraction = 1.0;
  spec_.doc_fraction = 0.0;
  const auto mix = compose_pretraining_mixture(spec_, 200);
  EXPECT_EQ(count_prefix(mix, "-s"), 200u);
}

TEST_F(MixtureTest, DeterministicAndShuffled) {
  const auto a = compose_pretraining_mixture(spec_, 200);
  EXPECT_EQ(a, compose_pretraining_mixture(spec_, 200));
  spec_.seed = 22;
  EXPECT_NE(a, compose_pretraining_mixture(spec_, 200));
}

TEST_F(MixtureTest, EnglishStaysWithZeroWeight) {
  spec_.sentence_sources[0].weight = 0.0;
  spec_.doc_sources[0].weight = 0.0;
  const auto mix = compose_pretraining_mixture(spec_, 200);
  EXPECT_GT(count_prefix(mix, "en-"), 0u);
}

TEST_F(MixtureTest, ShortfallIsReported) {
  spec_.unimax_n = 1;
  try {
    compose_pretraining_mixture(spec_, 2000);
    FAIL() << "expected a shortfall error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("short by"), std::string::npos) << e.what();
  }
}

TEST_F(MixtureTest, FractionsMustSumToOne) {
  spec_.doc_fraction = 0.5;
  EXPECT_THROW(compose_pretraining_mixture(spec_, 200), InvalidArgument);
}

std::vector<Example> examples(const std::string& lang, std::size_t n) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({lang, lang + std::to_string(i)});
  return out;
}

TEST(LoraMixture, EqualCounts) {
  const auto it = examples("it", 1000);
  const auto la = examples("la", 5000);
  const auto mix = compose_lora_mixture(it, la, 0.10, 3);
  ASSERT_EQ(mix.size(), 200u);
  const auto n_it = std::count_if(mix.begin(), mix.end(), [](const Example& e) { return e.language == "it"; });
  EXPECT_EQ(n_it, 100);
  EXPECT_EQ(mix, compose_lora_mixture(it, la, 0.10, 3));
}

TEST(LoraMixture, FullFraction) {
  const auto it = examples("it", 300);
  const auto la = examples("la", 300);
  EXPECT_EQ(compose_lora_mixture(it, la, 1.0, 3).size(), 600u);
}

TEST(LoraMixture, TooFewAdaptationExamples) {
  const auto it = examples("it", 1000);
  const auto la = examples("la", 50);
  EXPECT_THROW(compose_lora_mixture(it, la, 0.10, 3), InvalidArgument);
  EXPECT_THROW(compose_lora_mixture(it, la, 0.0, 3), InvalidArgument);
}

TEST(CorpusFiles, LoadDirectoryAndSpec) {
  testing::ScratchDir dir("corpus");
  write_lines(dir.path() / "en.sent.txt", numbered("en", "a", 5).lines);
  write_lines(dir.path() / "ka.sent.txt", numbered("ka", "b", 3).lines);
  write_lines(dir.path() / "en.doc.txt", numbered("en", "c", 2).lines);
  const auto corpora = load_corpus_dir(dir.path());
  ASSERT_EQ(corpora.sentence.size(), 2u);
  ASSERT_EQ(corpora.doc.size(), 1u);
  EXPECT_EQ(corpora.sentence[1].language, "ka");
  EXPECT_EQ(corpora.sentence[1].lines.size(), 3u);
  const auto spec = mixture_spec_from_json(R"({"sentence_fraction": 0.8, "weights": {"ka": 0}, "seed": 4})",
                                           corpora);
  EXPECT_NEAR(spec.doc_fraction, 0.2, 1e-12);
  EXPECT_EQ(spec.seed, 4u);
  EXPECT_EQ(spec.sentence_sources[1].weight, 0.0);
  EXPECT_THROW(mixture_spec_from_json("{", corpora), InvalidArgument);
}

}  // namespace
}  // namespace graft
