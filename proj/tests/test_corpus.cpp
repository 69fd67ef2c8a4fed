#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "seqlrp/corpus.hpp"

using namespace seqlrp;

namespace {

ModelConfig desk_config() { return ModelConfig{}; }

}  // namespace

TEST(Corpus, SingleTriggerDeterminesTarget) {
  ModelConfig cfg = desk_config();
  SyntheticCorpusSpec spec = default_toy_spec(cfg, 5);
  spec.num_texts = 20;
  auto corpus = generate_synthetic_corpus(spec, cfg);
  ASSERT_EQ(corpus.size(), 20u);
  for (const auto& pair : corpus) {
    ASSERT_EQ(pair.triggers.size(), 1u);
    const auto& tmpl = spec.trigger_table.at(pair.triggers[0].trigger_id);
    EXPECT_EQ(pair.target_ids, tmpl);
  }
}

TEST(Corpus, SeedDeterminism) {
  ModelConfig cfg = desk_config();
  SyntheticCorpusSpec spec = default_toy_spec(cfg, 42);
  spec.num_texts = 30;
  auto a = generate_synthetic_corpus(spec, cfg);
  auto b = generate_synthetic_corpus(spec, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    EXPECT_EQ(a[n].input_ids, b[n].input_ids);
    EXPECT_EQ(a[n].target_ids, b[n].target_ids);
  }
  SyntheticCorpusSpec other = spec;
  other.seed = 43;
  auto c = generate_synthetic_corpus(other, cfg);
  bool differs = false;
  for (std::size_t n = 0; n < a.size() && !differs; ++n) differs = a[n].input_ids != c[n].input_ids;
  EXPECT_TRUE(differs);
}

TEST(Corpus, MetadataMatchesPlacedTokens) {
  ModelConfig cfg = desk_config();
  SyntheticCorpusSpec spec = default_toy_spec(cfg, 7);
  spec.num_texts = 50;
  spec.num_triggers = 2;
  auto corpus = generate_synthetic_corpus(spec, cfg);
  for (const auto& pair : corpus) {
    ASSERT_EQ(pair.triggers.size(), 2u);
    for (const auto& placement : pair.triggers) {
      EXPECT_EQ(pair.input_ids[static_cast<std::size_t>(placement.position)],
                placement.trigger_id);
    }
    // Every non-trigger position holds a noise token.
    std::set<int> trigger_positions;
    for (const auto& placement : pair.triggers) trigger_positions.insert(placement.position);
    for (int t = 0; t < static_cast<int>(pair.input_ids.size()); ++t) {
      if (trigger_positions.count(t)) continue;
      const int id = pair.input_ids[static_cast<std::size_t>(t)];
      EXPECT_GE(id, spec.noise_lo);
      EXPECT_LT(id, spec.noise_hi);
    }
  }
}

TEST(Corpus, TriggerNoiseOverlapRejected) {
  ModelConfig cfg = desk_config();
  SyntheticCorpusSpec spec = default_toy_spec(cfg, 1);
  spec.trigger_table[spec.noise_lo + 1] = {9};  // trigger inside the noise range
  EXPECT_THROW(generate_synthetic_corpus(spec, cfg), DataError);
}

TEST(Corpus, FileRoundTrip) {
  ModelConfig cfg = desk_config();
  SyntheticCorpusSpec spec = default_toy_spec(cfg, 11);
  spec.num_texts = 12;
  auto corpus = generate_synthetic_corpus(spec, cfg);
  auto dir = std::filesystem::temp_directory_path() / "seqlrp_corpus_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "corpus.jsonl").string();
  save_corpus(path, corpus);
  auto loaded = load_corpus(path);
  ASSERT_EQ(loaded.size(), corpus.size());
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    EXPECT_EQ(loaded[n].input_ids, corpus[n].input_ids);
    EXPECT_EQ(loaded[n].target_ids, corpus[n].target_ids);
    ASSERT_EQ(loaded[n].triggers.size(), corpus[n].triggers.size());
    for (std::size_t k = 0; k < corpus[n].triggers.size(); ++k) {
      EXPECT_EQ(loaded[n].triggers[k].position, corpus[n].triggers[k].position);
      EXPECT_EQ(loaded[n].triggers[k].trigger_id, corpus[n].triggers[k].trigger_id);
    }
  }
}

TEST(Corpus, MalformedFileRejected) {
  auto dir = std::filesystem::temp_directory_path() / "seqlrp_corpus_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "bad.jsonl").string();
  std::ofstream(path) << "{not json\n";
  EXPECT_THROW(load_corpus(path), DataError);
}

TEST(Corpus, ToyVocabCoversConfiguredIds) {
  ModelConfig cfg = desk_config();
  Vocab v = toy_vocab(cfg);
  EXPECT_EQ(v.size(), cfg.vocab_size);
  SyntheticCorpusSpec spec = default_toy_spec(cfg, 3);
  for (const auto& [key, tmpl] : spec.trigger_table) {
    EXPECT_EQ(v.token_of(key).rfind("key", 0), 0u);
    for (int id : tmpl) EXPECT_EQ(v.token_of(id).rfind("ans", 0), 0u);
  }
}
