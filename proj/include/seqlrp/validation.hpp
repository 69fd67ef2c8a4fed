#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "seqlrp/lrp.hpp"
#include "seqlrp/model.hpp"
#include "seqlrp/saliency.hpp"
#include "seqlrp/vocab.hpp"

namespace seqlrp {

enum class DeletionDirection { MostImportant, LeastImportant };
enum class DeletionMode { Remove, ReplaceWithUnknown };

// A text's attribution counts as truthful when the control deletion keeps the
// summary this much closer (token jaccard) than the important deletion. The
// margin is an artifact choice; the protocol's source gives no number.
inline constexpr double kTruthfulnessMargin = 0.2;

struct DeletionSpec {
  double fraction = 0.07;
  DeletionDirection direction = DeletionDirection::MostImportant;
  DeletionMode mode = DeletionMode::Remove;

  // Round half up; the spec is invalid for a text where no position survives
  // rounding.
  int deleted_count(int effective_length) const {
    if (fraction <= 0.0 || fraction >= 1.0) {
      throw DataError("DeletionSpec: fraction must lie in (0, 1)");
    }
    const int k = static_cast<int>(std::floor(fraction * effective_length + 0.5));
    if (k < 1) {
      throw DataError("DeletionSpec: fraction " + std::to_string(fraction) + " of " +
                      std::to_string(effective_length) + " positions rounds to zero deletions");
    }
    return k;
  }
};

// Remove mode drops the positions and re-pads to the original length with the
// shared PAD/UNKNOWN id; replace mode overwrites them in place.
inline std::vector<int> delete_tokens(const std::vector<int>& ids, const std::vector<int>& positions,
                                      DeletionMode mode) {
  std::set<int> marked;
  for (int p : positions) {
    if (p < 0 || p >= static_cast<int>(ids.size())) {
      throw DataError("delete_tokens: position " + std::to_string(p) + " out of range");
    }
    if (Vocab::is_special(ids[static_cast<std::size_t>(p)])) {
      throw DataError("delete_tokens: position " + std::to_string(p) + " holds a special token");
    }
    marked.insert(p);
  }
  std::vector<int> out;
  out.reserve(ids.size());
  if (mode == DeletionMode::ReplaceWithUnknown) {
    out = ids;
    for (int p : marked) out[static_cast<std::size_t>(p)] = Vocab::kPadUnk;
  } else {
    for (int t = 0; t < static_cast<int>(ids.size()); ++t) {
      if (!marked.count(t)) out.push_back(ids[static_cast<std::size_t>(t)]);
    }
    out.resize(ids.size(), Vocab::kPadUnk);
  }
  return out;
}

struct DegradationMetrics {
  double token_jaccard = 0.0;
  double unigram_overlap_f1 = 0.0;
  double unknown_rate = 0.0;
  double repetition_rate = 0.0;
};

inline double token_jaccard(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::set<int> sa(a.begin(), a.end());
  std::set<int> sb(b.begin(), b.end());
  int inter = 0;
  for (int v : sa) inter += sb.count(v) ? 1 : 0;
  const int uni = static_cast<int>(sa.size() + sb.size()) - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline DegradationMetrics degradation_metrics(const std::vector<int>& baseline,
                                              const std::vector<int>& perturbed) {
  DegradationMetrics m;
  m.token_jaccard = token_jaccard(baseline, perturbed);

  // Unigram F1 on clipped counts.
  std::map<int, int> cb, cp;
  for (int v : baseline) ++cb[v];
  for (int v : perturbed) ++cp[v];
  int overlap = 0;
  for (const auto& [tok, n] : cb) {
    auto it = cp.find(tok);
    if (it != cp.end()) overlap += std::min(n, it->second);
  }
  if (baseline.empty() && perturbed.empty()) {
    m.unigram_overlap_f1 = 1.0;
  } else if (overlap == 0) {
    m.unigram_overlap_f1 = 0.0;
  } else {
    const double precision = static_cast<double>(overlap) / static_cast<double>(perturbed.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(baseline.size());
    m.unigram_overlap_f1 = 2.0 * precision * recall / (precision + recall);
  }

  if (!perturbed.empty()) {
    int unk = 0;
    for (int v : perturbed) unk += v == Vocab::kPadUnk ? 1 : 0;
    m.unknown_rate = static_cast<double>(unk) / static_cast<double>(perturbed.size());
  }

  if (perturbed.size() >= 3) {
    std::set<std::vector<int>> distinct;
    const int total = static_cast<int>(perturbed.size()) - 2;
    for (int t = 0; t < total; ++t) {
      distinct.insert({perturbed[static_cast<std::size_t>(t)],
                       perturbed[static_cast<std::size_t>(t) + 1],
                       perturbed[static_cast<std::size_t>(t) + 2]});
    }
    m.repetition_rate = 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total);
  }
  return m;
}

struct DirectionOutcome {
  std::vector<int> deleted_positions;
  std::vector<int> summary_ids;
  DegradationMetrics metrics;
};

struct DeletionResult {
  std::vector<int> baseline_summary;
  double fraction = 0.0;
  DeletionMode mode = DeletionMode::Remove;
  DirectionOutcome most_important;
  DirectionOutcome least_important;
  std::string verdict;     // "truthful" | "not_distinguishable"
  double jaccard_margin = 0.0;  // jaccard(control) - jaccard(important)
};

inline std::set<int> special_ids() {
  std::set<int> s;
  for (int id = 0; id < Vocab::kNumSpecials; ++id) s.insert(id);
  return s;
}

// decode -> relevance stack -> aggregate -> rank -> delete top/bottom
// fraction -> re-decode -> metrics, both directions in one run.
inline DeletionResult run_deletion_experiment(const std::vector<int>& text_ids,
                                              const ModelWeights& w, const ModelConfig& cfg,
                                              const LrpConfig& lrp_cfg, double fraction,
                                              DeletionMode mode,
                                              const Aggregation& agg_mode = {}) {
  DecodeResult baseline = decode_greedy(text_ids, w, cfg);
  if (baseline.summary_ids.empty()) {
    throw DataError("run_deletion_experiment: baseline summary is empty");
  }
  SaliencyStack stack = relevance_stack(baseline.tape, w, cfg, lrp_cfg);
  AggregatedSaliency agg = aggregate(stack, agg_mode);
  std::vector<int> ranking = rank_tokens(agg, baseline.tape.input_ids, special_ids());
  if (ranking.empty()) throw DataError("run_deletion_experiment: no rankable positions");

  DeletionSpec spec;
  spec.fraction = fraction;
  spec.mode = mode;
  const int k = spec.deleted_count(static_cast<int>(ranking.size()));
  const int take = std::min<int>(k, static_cast<int>(ranking.size()));

  DeletionResult result;
  result.baseline_summary = baseline.summary_ids;
  result.fraction = fraction;
  result.mode = mode;

  auto run_direction = [&](DeletionDirection dir) {
    DirectionOutcome out;
    if (dir == DeletionDirection::MostImportant) {
      out.deleted_positions.assign(ranking.begin(), ranking.begin() + take);
    } else {
      out.deleted_positions.assign(ranking.end() - take, ranking.end());
      std::reverse(out.deleted_positions.begin(), out.deleted_positions.end());
    }
    std::vector<int> perturbed = delete_tokens(baseline.tape.input_ids, out.deleted_positions, mode);
    DecodeResult redecoded = decode_greedy(perturbed, w, cfg);
    out.summary_ids = redecoded.summary_ids;
    out.metrics = degradation_metrics(baseline.summary_ids, redecoded.summary_ids);
    return out;
  };
  result.most_important = run_direction(DeletionDirection::MostImportant);
  result.least_important = run_direction(DeletionDirection::LeastImportant);
  result.jaccard_margin =
      result.least_important.metrics.token_jaccard - result.most_important.metrics.token_jaccard;
  result.verdict = result.jaccard_margin >= kTruthfulnessMargin ? "truthful" : "not_distinguishable";
  return result;
}

// Brute-force single-position importance: score[t] = 1 - jaccard(baseline,
// summary after replacing position t with UNKNOWN). Positions already holding
// the PAD/UNKNOWN id are identity perturbations and score zero without a
// re-decode.
inline std::vector<double> occlusion_importance(const std::vector<int>& text_ids,
                                                const ModelWeights& w, const ModelConfig& cfg) {
  DecodeResult baseline = decode_greedy(text_ids, w, cfg);
  const std::vector<int>& padded = baseline.tape.input_ids;
  std::vector<double> scores(padded.size(), 0.0);
  for (std::size_t t = 0; t < padded.size(); ++t) {
    if (padded[t] == Vocab::kPadUnk) continue;
    std::vector<int> occluded = padded;
    occluded[t] = Vocab::kPadUnk;
    DecodeResult redecoded = decode_greedy(occluded, w, cfg);
    scores[t] = 1.0 - token_jaccard(baseline.summary_ids, redecoded.summary_ids);
  }
  return scores;
}

}  // namespace seqlrp
