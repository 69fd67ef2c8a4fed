#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqlrp/model.hpp"
#include "seqlrp/rng.hpp"
#include "seqlrp/vocab.hpp"

namespace seqlrp {

struct TriggerPlacement {
  int position = 0;
  int trigger_id = 0;
};

struct CorpusPair {
  std::vector<int> input_ids;
  std::vector<int> target_ids;  // stop marker excluded
  std::vector<TriggerPlacement> triggers;
};

// Synthetic planted-dependency corpus: each text is noise except for trigger
// keywords whose presence determines the target summary. The trigger
// positions are the ground-truth important positions.
struct SyntheticCorpusSpec {
  int num_texts = 200;
  int text_len = 24;
  int num_triggers = 1;  // triggers planted per text
  std::map<int, std::vector<int>> trigger_table;
  int noise_lo = 15;  // noise token ids drawn from [noise_lo, noise_hi)
  int noise_hi = 200;
  std::uint64_t seed = 1;

  void validate(const ModelConfig& cfg) const {
    if (num_texts <= 0 || text_len <= 0 || num_triggers <= 0) {
      throw DataError("SyntheticCorpusSpec: counts must be positive");
    }
    if (text_len > cfg.max_input_len) {
      throw DataError("SyntheticCorpusSpec: text_len exceeds max_input_len");
    }
    if (trigger_table.empty()) throw DataError("SyntheticCorpusSpec: empty trigger table");
    if (num_triggers > text_len) throw DataError("SyntheticCorpusSpec: more triggers than positions");
    if (noise_lo < Vocab::kNumSpecials || noise_hi <= noise_lo || noise_hi > cfg.vocab_size) {
      throw DataError("SyntheticCorpusSpec: bad noise range");
    }
    for (const auto& [key, tmpl] : trigger_table) {
      if (key >= noise_lo && key < noise_hi) {
        throw DataError("SyntheticCorpusSpec: trigger " + std::to_string(key) +
                        " overlaps the noise range");
      }
      if (key < Vocab::kNumSpecials || key >= cfg.vocab_size) {
        throw DataError("SyntheticCorpusSpec: trigger " + std::to_string(key) + " out of vocab");
      }
      if (tmpl.empty()) throw DataError("SyntheticCorpusSpec: empty target template");
      for (int id : tmpl) {
        if (id < Vocab::kNumSpecials || id >= cfg.vocab_size) {
          throw DataError("SyntheticCorpusSpec: template token " + std::to_string(id) +
                          " out of vocab");
        }
      }
    }
  }
};

// Default toy layout over the desk-scale vocabulary: trigger keywords
// directly after the specials, one answer token per keyword, one background
// answer token, noise beyond.
inline int toy_background_answer(int trigger_types = 12) {
  return Vocab::kNumSpecials + 2 * trigger_types;
}

inline SyntheticCorpusSpec default_toy_spec(const ModelConfig& cfg, std::uint64_t seed,
                                            int trigger_types = 12) {
  SyntheticCorpusSpec spec;
  spec.seed = seed;
  spec.noise_lo = toy_background_answer(trigger_types) + 1;
  spec.noise_hi = cfg.vocab_size;
  for (int k = 0; k < trigger_types; ++k) {
    const int key = Vocab::kNumSpecials + k;
    const int answer = Vocab::kNumSpecials + trigger_types + k;
    spec.trigger_table[key] = {answer};
  }
  return spec;
}

// Token names for the toy layout, aligned with default_toy_spec.
inline Vocab toy_vocab(const ModelConfig& cfg, int trigger_types = 12) {
  Vocab v = Vocab::with_specials();
  for (int k = 0; k < trigger_types; ++k) v.push("key" + std::to_string(k));
  for (int k = 0; k < trigger_types; ++k) v.push("ans" + std::to_string(k));
  v.push("bg");
  for (int id = v.size(); id < cfg.vocab_size; ++id) v.push("w" + std::to_string(id));
  return v;
}

// Noise-only texts mapped to a fixed background answer. Trained alongside the
// planted corpus they anchor the model's no-keyword behavior, giving keyword
// deletion a well-defined counterfactual output.
inline std::vector<CorpusPair> generate_background_corpus(int num_texts, int text_len,
                                                          int background_answer,
                                                          const SyntheticCorpusSpec& layout,
                                                          std::uint64_t seed,
                                                          const ModelConfig& cfg) {
  if (num_texts < 0 || text_len <= 0 || text_len > cfg.max_input_len) {
    throw DataError("generate_background_corpus: bad counts");
  }
  if (background_answer < Vocab::kNumSpecials || background_answer >= cfg.vocab_size) {
    throw DataError("generate_background_corpus: background answer out of vocab");
  }
  Rng rng(seed);
  std::vector<CorpusPair> corpus;
  corpus.reserve(static_cast<std::size_t>(num_texts));
  for (int n = 0; n < num_texts; ++n) {
    CorpusPair pair;
    pair.input_ids.resize(static_cast<std::size_t>(text_len));
    for (int t = 0; t < text_len; ++t) {
      pair.input_ids[static_cast<std::size_t>(t)] =
          layout.noise_lo + rng.below_int(layout.noise_hi - layout.noise_lo);
    }
    pair.target_ids = {background_answer};
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

inline std::vector<CorpusPair> generate_synthetic_corpus(const SyntheticCorpusSpec& spec,
                                                         const ModelConfig& cfg) {
  spec.validate(cfg);
  Rng rng(spec.seed);
  std::vector<int> keys;
  keys.reserve(spec.trigger_table.size());
  for (const auto& [key, tmpl] : spec.trigger_table) keys.push_back(key);

  std::vector<CorpusPair> corpus;
  corpus.reserve(static_cast<std::size_t>(spec.num_texts));
  for (int n = 0; n < spec.num_texts; ++n) {
    CorpusPair pair;
    pair.input_ids.resize(static_cast<std::size_t>(spec.text_len));
    for (int t = 0; t < spec.text_len; ++t) {
      pair.input_ids[static_cast<std::size_t>(t)] =
          spec.noise_lo + rng.below_int(spec.noise_hi - spec.noise_lo);
    }
    // Distinct positions for the planted triggers.
    std::vector<int> positions(static_cast<std::size_t>(spec.text_len));
    for (int t = 0; t < spec.text_len; ++t) positions[static_cast<std::size_t>(t)] = t;
    rng.shuffle(positions);
    positions.resize(static_cast<std::size_t>(spec.num_triggers));
    std::sort(positions.begin(), positions.end());
    for (int p : positions) {
      const int key = keys[static_cast<std::size_t>(rng.below_int(static_cast<int>(keys.size())))];
      pair.input_ids[static_cast<std::size_t>(p)] = key;
      pair.triggers.push_back({p, key});
    }
    for (const auto& placement : pair.triggers) {
      const auto& tmpl = spec.trigger_table.at(placement.trigger_id);
      pair.target_ids.insert(pair.target_ids.end(), tmpl.begin(), tmpl.end());
    }
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

// Line-delimited corpus file: one JSON record per pair with fixed field order.
inline void save_corpus(const std::string& path, const std::vector<CorpusPair>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_corpus: cannot write " + path);
  for (const auto& pair : corpus) {
    nlohmann::ordered_json rec;
    rec["input"] = pair.input_ids;
    rec["target"] = pair.target_ids;
    nlohmann::ordered_json triggers = nlohmann::ordered_json::array();
    for (const auto& t : pair.triggers) {
      triggers.push_back(nlohmann::ordered_json{{"pos", t.position}, {"id", t.trigger_id}});
    }
    rec["triggers"] = triggers;
    out << rec.dump() << "\n";
  }
}

inline std::vector<CorpusPair> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_corpus: cannot read " + path);
  std::vector<CorpusPair> corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("load_corpus: " + path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    CorpusPair pair;
    pair.input_ids = rec.at("input").get<std::vector<int>>();
    pair.target_ids = rec.at("target").get<std::vector<int>>();
    for (const auto& t : rec.at("triggers")) {
      pair.triggers.push_back({t.at("pos").get<int>(), t.at("id").get<int>()});
    }
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

}  // namespace seqlrp
