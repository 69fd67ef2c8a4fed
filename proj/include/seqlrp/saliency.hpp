#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "seqlrp/lrp.hpp"

namespace seqlrp {

enum class AggregationMode { AbsMean, RawMean, ScaledAbs };

struct Aggregation {
  AggregationMode mode = AggregationMode::AbsMean;
  // Scale applied to negative relevance magnitudes in ScaledAbs mode. The
  // constant is an artifact choice; the method's source leaves it unstated.
  double negative_scale = 0.5;
};

struct AggregatedSaliency {
  Vector scores;
  Aggregation how;
};

inline AggregatedSaliency aggregate(const SaliencyStack& stack, const Aggregation& how) {
  if (stack.maps.empty()) throw DataError("aggregate: empty stack");
  if (how.mode == AggregationMode::ScaledAbs &&
      (how.negative_scale < 0.0 || how.negative_scale > 1.0)) {
    throw DataError("aggregate: negative_scale must lie in [0, 1]");
  }
  const std::size_t L = stack.maps[0].values.size();
  for (const auto& m : stack.maps) {
    if (m.values.size() != L) throw DimensionError("aggregate: maps of unequal length");
  }
  AggregatedSaliency agg;
  agg.how = how;
  agg.scores.assign(L, 0.0);
  for (const auto& m : stack.maps) {
    for (std::size_t t = 0; t < L; ++t) {
      const double r = m.values[t];
      switch (how.mode) {
        case AggregationMode::AbsMean:
          agg.scores[t] += std::abs(r);
          break;
        case AggregationMode::RawMean:
          agg.scores[t] += r;
          break;
        case AggregationMode::ScaledAbs:
          agg.scores[t] += r >= 0.0 ? r : how.negative_scale * std::abs(r);
          break;
      }
    }
  }
  const double n = static_cast<double>(stack.maps.size());
  for (double& s : agg.scores) s /= n;
  return agg;
}

// Positions ordered by descending score; ties break by ascending position.
// Positions holding excluded token ids are removed.
inline std::vector<int> rank_tokens(const AggregatedSaliency& agg, const std::vector<int>& ids,
                                    const std::set<int>& exclude_ids) {
  if (agg.scores.size() != ids.size()) {
    throw DimensionError("rank_tokens: " + std::to_string(agg.scores.size()) + " scores for " +
                         std::to_string(ids.size()) + " ids");
  }
  std::vector<int> positions;
  positions.reserve(ids.size());
  for (int t = 0; t < static_cast<int>(ids.size()); ++t) {
    if (!exclude_ids.count(ids[static_cast<std::size_t>(t)])) positions.push_back(t);
  }
  std::stable_sort(positions.begin(), positions.end(), [&](int a, int b) {
    const double sa = agg.scores[static_cast<std::size_t>(a)];
    const double sb = agg.scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return positions;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

inline double cosine(const Vector& a, const Vector& b) {
  const double ab = dot(a, b);
  const double aa = dot(a, a);
  const double bb = dot(b, b);
  return ab / std::sqrt(aa * bb);
}

inline std::optional<double> pearson(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DimensionError("pearson: lengths " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()));
  }
  const double n = static_cast<double>(x.size());
  const double mx = sum(x) / n;
  const double my = sum(y) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;  // zero variance: undefined
  return sxy / std::sqrt(sxx * syy);
}

// Average ranks, ties sharing the mean of their rank run.
inline Vector average_ranks(const Vector& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  Vector ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> spearman(const Vector& x, const Vector& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

struct SimilarityStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  int pairs_total = 0;
  int pairs_skipped = 0;  // pairs involving an all-zero map
};

// Pairwise cosine over the signed maps of one stack.
inline SimilarityStats map_pairwise_similarity(const SaliencyStack& stack) {
  if (stack.maps.size() < 2) throw DataError("map_pairwise_similarity: need at least 2 maps");
  auto is_zero = [](const Vector& v) {
    for (double x : v) {
      if (x != 0.0) return false;
    }
    return true;
  };
  SimilarityStats st;
  st.min = 1.0;
  st.max = -1.0;
  double acc = 0.0;
  int used = 0;
  for (std::size_t a = 0; a < stack.maps.size(); ++a) {
    for (std::size_t b = a + 1; b < stack.maps.size(); ++b) {
      ++st.pairs_total;
      if (is_zero(stack.maps[a].values) || is_zero(stack.maps[b].values)) {
        ++st.pairs_skipped;
        continue;
      }
      const double c = cosine(stack.maps[a].values, stack.maps[b].values);
      acc += c;
      st.min = std::min(st.min, c);
      st.max = std::max(st.max, c);
      ++used;
    }
  }
  if (used == 0) throw DataError("map_pairwise_similarity: all maps are zero");
  st.mean = acc / static_cast<double>(used);
  return st;
}

struct StepCorrelation {
  int step = 0;
  std::optional<double> pearson_r;
  std::optional<double> spearman_r;
};

struct CorrelationReport {
  std::vector<StepCorrelation> per_step;
  std::optional<double> mean_pearson;
  std::optional<double> mean_spearman;
};

// Correlates, per decode step, the attention distribution over input
// positions with the absolute relevance map for that step. Zero-variance
// vectors make the coefficient undefined for that step; undefined steps are
// excluded from the means.
inline CorrelationReport attention_saliency_correlation(const SaliencyStack& stack,
                                                        const ActivationTape& tape) {
  if (stack.maps.empty()) throw DataError("attention_saliency_correlation: empty stack");
  if (tape.decoded_steps() < static_cast<int>(stack.maps.size())) {
    throw DataError("attention_saliency_correlation: tape has fewer decode steps than stack maps");
  }
  CorrelationReport rep;
  double pear_acc = 0.0, spear_acc = 0.0;
  int pear_n = 0, spear_n = 0;
  for (std::size_t k = 0; k < stack.maps.size(); ++k) {
    const Vector& alpha = tape.dec_steps[k].attention.alpha;
    if (alpha.size() != stack.maps[k].values.size()) {
      throw DimensionError("attention_saliency_correlation: alpha length " +
                           std::to_string(alpha.size()) + " vs map length " +
                           std::to_string(stack.maps[k].values.size()));
    }
    Vector abs_map(stack.maps[k].values.size());
    for (std::size_t t = 0; t < abs_map.size(); ++t) abs_map[t] = std::abs(stack.maps[k].values[t]);
    StepCorrelation sc;
    sc.step = static_cast<int>(k);
    sc.pearson_r = pearson(alpha, abs_map);
    sc.spearman_r = spearman(alpha, abs_map);
    if (sc.pearson_r) {
      pear_acc += *sc.pearson_r;
      ++pear_n;
    }
    if (sc.spearman_r) {
      spear_acc += *sc.spearman_r;
      ++spear_n;
    }
    rep.per_step.push_back(sc);
  }
  if (pear_n > 0) rep.mean_pearson = pear_acc / pear_n;
  if (spear_n > 0) rep.mean_spearman = spear_acc / spear_n;
  return rep;
}

}  // namespace seqlrp
