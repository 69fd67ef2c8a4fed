// Command-line pipeline: generate a planted-dependency corpus, train the
// desk-scale summarizer, decode, explain decodes with relevance heatmaps and
// validate the attributions with deletion experiments and the occlusion
// oracle.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "seqlrp/corpus.hpp"
#include "seqlrp/heatmap.hpp"
#include "seqlrp/lrp.hpp"
#include "seqlrp/model.hpp"
#include "seqlrp/saliency.hpp"
#include "seqlrp/serialize.hpp"
#include "seqlrp/train.hpp"
#include "seqlrp/validation.hpp"
#include "seqlrp/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace seqlrp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct RunConfig {
  ModelConfig model;
  LrpConfig lrp;
  std::vector<double> fractions = {0.01, 0.03, 0.05, 0.07, 0.10};
  double headline_fraction = 0.07;
  Aggregation aggregation;
  DeletionMode deletion_mode = DeletionMode::Remove;
  std::uint64_t seed = 1;
  Hyperparams train;
  int corpus_texts = 200;
  int corpus_text_len = 24;
  int corpus_triggers = 1;      // triggers planted per text
  int corpus_trigger_types = 12;
  int corpus_background_texts = 150;  // noise-only texts mixed into the training file
  int corpus_eval_texts = 50;
};

Aggregation parse_aggregation(const std::string& text) {
  Aggregation agg;
  if (text == "abs") {
    agg.mode = AggregationMode::AbsMean;
  } else if (text == "raw") {
    agg.mode = AggregationMode::RawMean;
  } else if (text.rfind("scaled:", 0) == 0) {
    agg.mode = AggregationMode::ScaledAbs;
    agg.negative_scale = std::stod(text.substr(7));
  } else {
    throw DataError("aggregation must be abs, raw or scaled:<factor>, got '" + text + "'");
  }
  return agg;
}

std::string aggregation_name(const Aggregation& agg) {
  switch (agg.mode) {
    case AggregationMode::AbsMean: return "abs";
    case AggregationMode::RawMean: return "raw";
    case AggregationMode::ScaledAbs: return "scaled:" + std::to_string(agg.negative_scale);
  }
  return "abs";
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  if (out.empty()) throw DataError("empty fractions list");
  return out;
}

void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("config file " + path + ": " + e.what());
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    if (m.contains("vocab_size")) rc.model.vocab_size = m["vocab_size"].get<int>();
    if (m.contains("embed_dim")) rc.model.embed_dim = m["embed_dim"].get<int>();
    if (m.contains("hidden_dim")) rc.model.hidden_dim = m["hidden_dim"].get<int>();
    if (m.contains("max_input_len")) rc.model.max_input_len = m["max_input_len"].get<int>();
    if (m.contains("max_output_len")) rc.model.max_output_len = m["max_output_len"].get<int>();
    if (m.contains("maps_per_text")) rc.model.maps_per_text = m["maps_per_text"].get<int>();
  }
  if (j.contains("lrp")) {
    const auto& l = j["lrp"];
    if (l.contains("epsilon")) rc.lrp.epsilon = l["epsilon"].get<double>();
    if (l.contains("attention_path_enabled")) {
      rc.lrp.attention_path_enabled = l["attention_path_enabled"].get<bool>();
    }
    if (l.contains("steps_back")) rc.lrp.steps_back = l["steps_back"].get<int>();
    if (l.contains("bias_redistribution")) {
      rc.lrp.bias_redistribution = l["bias_redistribution"].get<bool>();
    }
  }
  if (j.contains("fractions")) rc.fractions = j["fractions"].get<std::vector<double>>();
  if (j.contains("headline_fraction")) rc.headline_fraction = j["headline_fraction"].get<double>();
  if (j.contains("aggregation")) rc.aggregation = parse_aggregation(j["aggregation"].get<std::string>());
  if (j.contains("deletion_mode")) {
    const std::string mode = j["deletion_mode"].get<std::string>();
    if (mode != "remove" && mode != "replace") throw DataError("deletion_mode must be remove or replace");
    rc.deletion_mode = mode == "remove" ? DeletionMode::Remove : DeletionMode::ReplaceWithUnknown;
  }
  if (j.contains("seed")) rc.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("train")) {
    const auto& t = j["train"];
    if (t.contains("lr")) rc.train.lr = t["lr"].get<double>();
    if (t.contains("epochs")) rc.train.epochs = t["epochs"].get<int>();
    if (t.contains("clip_norm")) rc.train.clip_norm = t["clip_norm"].get<double>();
    if (t.contains("init_scale")) rc.train.init_scale = t["init_scale"].get<double>();
  }
  if (j.contains("corpus")) {
    const auto& c = j["corpus"];
    if (c.contains("texts")) rc.corpus_texts = c["texts"].get<int>();
    if (c.contains("text_len")) rc.corpus_text_len = c["text_len"].get<int>();
    if (c.contains("triggers")) rc.corpus_triggers = c["triggers"].get<int>();
    if (c.contains("trigger_types")) rc.corpus_trigger_types = c["trigger_types"].get<int>();
    if (c.contains("background_texts")) rc.corpus_background_texts = c["background_texts"].get<int>();
    if (c.contains("eval_texts")) rc.corpus_eval_texts = c["eval_texts"].get<int>();
  }
}

ordered_json effective_config_json(const RunConfig& rc) {
  ordered_json j;
  j["model"] = {{"vocab_size", rc.model.vocab_size},       {"embed_dim", rc.model.embed_dim},
                {"hidden_dim", rc.model.hidden_dim},       {"max_input_len", rc.model.max_input_len},
                {"max_output_len", rc.model.max_output_len}, {"maps_per_text", rc.model.maps_per_text}};
  j["lrp"] = {{"epsilon", rc.lrp.epsilon},
              {"attention_path_enabled", rc.lrp.attention_path_enabled},
              {"steps_back", rc.lrp.steps_back},
              {"bias_redistribution", rc.lrp.bias_redistribution}};
  j["fractions"] = rc.fractions;
  j["headline_fraction"] = rc.headline_fraction;
  j["aggregation"] = aggregation_name(rc.aggregation);
  j["deletion_mode"] = rc.deletion_mode == DeletionMode::Remove ? "remove" : "replace";
  j["seed"] = rc.seed;
  j["train"] = {{"lr", rc.train.lr},
                {"epochs", rc.train.epochs},
                {"clip_norm", rc.train.clip_norm},
                {"init_scale", rc.train.init_scale},
                {"seed", rc.seed}};
  j["corpus"] = {{"texts", rc.corpus_texts},
                 {"text_len", rc.corpus_text_len},
                 {"triggers", rc.corpus_triggers},
                 {"trigger_types", rc.corpus_trigger_types},
                 {"background_texts", rc.corpus_background_texts},
                 {"eval_texts", rc.corpus_eval_texts}};
  return j;
}

void write_effective_config(const RunConfig& rc, const fs::path& out_dir) {
  std::ofstream out(out_dir / "effective_config.json", std::ios::binary);
  out << effective_config_json(rc).dump(2) << "\n";
}

fs::path ensure_out_dir(const std::string& out) {
  if (out.empty()) throw DataError("--out directory is required");
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

// Texts come either from a corpus file (id records) or a whitespace-tokenized
// plain text file, one text per line.
std::vector<CorpusPair> load_texts(const std::string& corpus_path, const std::string& text_path,
                                   const Vocab* vocab) {
  if (!corpus_path.empty() && !text_path.empty()) {
    throw DataError("give either --corpus or --text, not both");
  }
  if (!corpus_path.empty()) return load_corpus(corpus_path);
  if (text_path.empty()) throw DataError("one of --corpus or --text is required");
  if (vocab == nullptr) throw DataError("--text requires --vocab");
  std::ifstream in(text_path);
  if (!in) throw DataError("cannot read " + text_path);
  std::vector<CorpusPair> out;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    CorpusPair pair;
    std::string tok;
    while (ss >> tok) pair.input_ids.push_back(vocab->lookup(tok));
    if (!pair.input_ids.empty()) out.push_back(std::move(pair));
  }
  return out;
}

std::vector<std::string> to_tokens(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.token_of(id));
  return out;
}

std::string join_tokens(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (k) out += ' ';
    out += vocab.token_of(ids[k]);
  }
  return out;
}

ordered_json metrics_json(const DegradationMetrics& m) {
  return ordered_json{{"token_jaccard", m.token_jaccard},
                      {"unigram_overlap_f1", m.unigram_overlap_f1},
                      {"unknown_rate", m.unknown_rate},
                      {"repetition_rate", m.repetition_rate}};
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

// Writes corpus.jsonl (planted texts plus background texts, the training
// mix), corpus_eval.jsonl (planted held-out texts) and the matching vocab.
int cmd_gen_corpus(const RunConfig& rc, const std::string& out) {
  const fs::path dir = ensure_out_dir(out);
  rc.model.validate();
  SyntheticCorpusSpec spec = default_toy_spec(rc.model, rc.seed, rc.corpus_trigger_types);
  spec.num_texts = rc.corpus_texts;
  spec.text_len = rc.corpus_text_len;
  spec.num_triggers = rc.corpus_triggers;
  auto corpus = generate_synthetic_corpus(spec, rc.model);
  if (rc.corpus_background_texts > 0) {
    auto background = generate_background_corpus(rc.corpus_background_texts, spec.text_len,
                                                 toy_background_answer(rc.corpus_trigger_types),
                                                 spec, spec.seed ^ 0xb6ull, rc.model);
    corpus.insert(corpus.end(), background.begin(), background.end());
  }
  save_corpus((dir / "corpus.jsonl").string(), corpus);
  if (rc.corpus_eval_texts > 0) {
    SyntheticCorpusSpec eval_spec = spec;
    eval_spec.num_texts = rc.corpus_eval_texts;
    eval_spec.seed = spec.seed ^ 0xe7a1d5ull;  // distinct held-out stream
    auto eval_corpus = generate_synthetic_corpus(eval_spec, rc.model);
    save_corpus((dir / "corpus_eval.jsonl").string(), eval_corpus);
  }
  toy_vocab(rc.model, rc.corpus_trigger_types).save((dir / "vocab.txt").string());
  write_effective_config(rc, dir);
  std::cout << "wrote " << corpus.size() << " texts to " << (dir / "corpus.jsonl").string() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& rc, const std::string& corpus_path, const std::string& eval_path,
              double holdout, const std::string& out) {
  const fs::path dir = ensure_out_dir(out);
  auto corpus = load_corpus(corpus_path);
  std::vector<CorpusPair> heldout;
  if (!eval_path.empty()) {
    heldout = load_corpus(eval_path);
  } else if (holdout > 0.0) {
    const std::size_t keep = corpus.size() - static_cast<std::size_t>(holdout * corpus.size());
    heldout.assign(corpus.begin() + static_cast<std::ptrdiff_t>(keep), corpus.end());
    corpus.resize(keep);
  }
  Hyperparams hp = rc.train;
  hp.seed = rc.seed;
  TrainResult result = train_toy(corpus, heldout, rc.model, hp);
  save_weights((dir / "weights.bin").string(), rc.model, result.weights);

  ordered_json report;
  report["epochs"] = result.report.epoch_loss.size();
  report["epoch_loss"] = result.report.epoch_loss;
  report["eval_texts"] = result.report.eval_texts;
  if (result.report.eval_texts > 0) {
    report["trigger_accuracy"] = result.report.trigger_accuracy;
  } else {
    report["trigger_accuracy"] = nullptr;
  }
  std::ofstream rep(dir / "train_report.json", std::ios::binary);
  rep << report.dump(2) << "\n";
  write_effective_config(rc, dir);
  std::cout << "trained " << hp.epochs << " epochs on " << corpus.size() << " texts";
  if (result.report.eval_texts > 0) {
    std::cout << ", trigger accuracy " << result.report.trigger_accuracy << " on "
              << result.report.eval_texts << " held-out texts";
  }
  std::cout << "\n";
  return kExitOk;
}

int cmd_summarize(const RunConfig& rc, const std::string& weights_path,
                  const std::string& vocab_path, const std::string& corpus_path,
                  const std::string& text_path, int limit, const std::string& out) {
  LoadedModel model = load_weights(weights_path);
  Vocab vocab = Vocab::load(vocab_path);
  auto texts = load_texts(corpus_path, text_path, &vocab);
  if (limit > 0 && static_cast<int>(texts.size()) > limit) texts.resize(static_cast<std::size_t>(limit));
  std::ofstream file;
  if (!out.empty()) {
    const fs::path dir = ensure_out_dir(out);
    file.open(dir / "summaries.txt", std::ios::binary);
    RunConfig echoed = rc;
    echoed.model = model.config;
    write_effective_config(echoed, dir);
  }
  for (std::size_t n = 0; n < texts.size(); ++n) {
    DecodeResult dec = decode_greedy(texts[n].input_ids, model.weights, model.config);
    const std::string line = std::to_string(n) + "\t" + join_tokens(dec.summary_ids, vocab);
    std::cout << line << "\n";
    if (file.is_open()) file << line << "\n";
  }
  return kExitOk;
}

int cmd_explain(const RunConfig& rc, const std::string& weights_path, const std::string& vocab_path,
                const std::string& corpus_path, const std::string& text_path, int limit, bool ansi,
                int maps_override, const std::string& out) {
  LoadedModel model = load_weights(weights_path);
  ModelConfig cfg = model.config;
  if (maps_override > 0) cfg.maps_per_text = std::min(maps_override, cfg.max_output_len);
  Vocab vocab = Vocab::load(vocab_path);
  auto texts = load_texts(corpus_path, text_path, &vocab);
  if (limit > 0 && static_cast<int>(texts.size()) > limit) texts.resize(static_cast<std::size_t>(limit));
  const fs::path dir = ensure_out_dir(out);
  RunConfig echoed = rc;
  echoed.model = cfg;
  write_effective_config(echoed, dir);

  std::ofstream report(dir / "explain_report.jsonl", std::ios::binary);
  for (std::size_t n = 0; n < texts.size(); ++n) {
    DecodeResult dec = decode_greedy(texts[n].input_ids, model.weights, cfg);
    if (dec.tape.decoded_steps() == 0) continue;
    SaliencyStack stack = relevance_stack(dec.tape, model.weights, cfg, rc.lrp);

    char name[32];
    std::snprintf(name, sizeof(name), "heatmap_%03zu.html", n);
    {
      std::ofstream html(dir / name, std::ios::binary);
      html << heatmap_html(stack, vocab, "text " + std::to_string(n));
    }
    if (ansi) std::cout << heatmap_ansi(stack, vocab);

    ordered_json rec;
    rec["text"] = n;
    rec["source_len"] = dec.tape.source_len;
    rec["truncated"] = dec.tape.source_len > cfg.max_input_len;
    rec["maps"] = stack.maps.size();
    rec["summary"] = to_tokens(dec.summary_ids, vocab);
    if (stack.maps.size() >= 2) {
      SimilarityStats sim = map_pairwise_similarity(stack);
      rec["map_similarity"] = ordered_json{{"mean_cosine", sim.mean},
                                           {"min_cosine", sim.min},
                                           {"max_cosine", sim.max},
                                           {"pairs_skipped", sim.pairs_skipped}};
    } else {
      rec["map_similarity"] = nullptr;
    }
    CorrelationReport corr = attention_saliency_correlation(stack, dec.tape);
    ordered_json corr_json;
    corr_json["mean_pearson"] = corr.mean_pearson ? ordered_json(*corr.mean_pearson) : ordered_json(nullptr);
    corr_json["mean_spearman"] =
        corr.mean_spearman ? ordered_json(*corr.mean_spearman) : ordered_json(nullptr);
    rec["attention_correlation"] = corr_json;

    // Same maps with the attention path removed, reported as a mean cosine
    // between the two variants.
    LrpConfig ablated = rc.lrp;
    ablated.attention_path_enabled = false;
    SaliencyStack ablated_stack = relevance_stack(dec.tape, model.weights, cfg, ablated);
    double cos_acc = 0.0;
    int cos_n = 0;
    for (std::size_t k = 0; k < stack.maps.size(); ++k) {
      const Vector& a = stack.maps[k].values;
      const Vector& b = ablated_stack.maps[k].values;
      if (dot(a, a) == 0.0 || dot(b, b) == 0.0) continue;
      cos_acc += cosine(a, b);
      ++cos_n;
    }
    rec["ablation_mean_cosine"] = cos_n > 0 ? ordered_json(cos_acc / cos_n) : ordered_json(nullptr);
    rec["heatmap"] = name;
    report << rec.dump() << "\n";
  }
  std::cout << "explained " << texts.size() << " texts into " << dir.string() << "\n";
  return kExitOk;
}

int cmd_validate(const RunConfig& rc, const std::string& weights_path,
                 const std::string& vocab_path, const std::string& corpus_path, int limit,
                 const std::string& out) {
  LoadedModel model = load_weights(weights_path);
  const ModelConfig& cfg = model.config;
  Vocab vocab = Vocab::load(vocab_path);
  auto texts = load_corpus(corpus_path);
  if (limit > 0 && static_cast<int>(texts.size()) > limit) texts.resize(static_cast<std::size_t>(limit));
  const fs::path dir = ensure_out_dir(out);
  RunConfig echoed = rc;
  echoed.model = cfg;
  write_effective_config(echoed, dir);

  std::ofstream results(dir / "validation_results.jsonl", std::ios::binary);
  ordered_json per_text = ordered_json::array();
  int truthful = 0, distinguishable_total = 0;
  std::vector<std::pair<int, double>> skipped;  // (text, fraction) pairs below 1 deletion

  if (texts.empty()) {
    std::cerr << "warning: empty corpus, nothing to validate\n";
  }
  for (std::size_t n = 0; n < texts.size(); ++n) {
    const auto& text = texts[n];
    DecodeResult baseline = decode_greedy(text.input_ids, model.weights, cfg);
    if (baseline.summary_ids.empty()) {
      std::cerr << "warning: text " << n << " decodes to an empty summary, skipped\n";
      continue;
    }
    SaliencyStack stack = relevance_stack(baseline.tape, model.weights, cfg, rc.lrp);
    AggregatedSaliency agg = aggregate(stack, rc.aggregation);
    std::vector<int> ranking = rank_tokens(agg, baseline.tape.input_ids, special_ids());

    std::vector<double> occlusion = occlusion_importance(text.input_ids, model.weights, cfg);

    ordered_json text_summary;
    text_summary["text"] = n;

    // Oracle vs attribution agreement over the rankable positions.
    Vector occ_ranked, lrp_ranked;
    for (int p : ranking) {
      occ_ranked.push_back(occlusion[static_cast<std::size_t>(p)]);
      lrp_ranked.push_back(agg.scores[static_cast<std::size_t>(p)]);
    }
    std::optional<double> rho;
    if (occ_ranked.size() >= 2) rho = spearman(occ_ranked, lrp_ranked);
    text_summary["oracle_lrp_spearman"] = rho ? ordered_json(*rho) : ordered_json(nullptr);

    int occ_top1 = 0;
    for (std::size_t p = 1; p < occlusion.size(); ++p) {
      if (occlusion[p] > occlusion[static_cast<std::size_t>(occ_top1)]) occ_top1 = static_cast<int>(p);
    }
    text_summary["occlusion_top1"] = occ_top1;
    text_summary["lrp_top1"] = ranking.empty() ? -1 : ranking[0];
    if (!text.triggers.empty()) {
      ordered_json trig = ordered_json::array();
      for (const auto& t : text.triggers) trig.push_back(t.position);
      text_summary["trigger_positions"] = trig;
    }

    std::string headline_verdict = "undefined";
    double headline_margin = 0.0;
    for (double fraction : rc.fractions) {
      DeletionSpec probe;
      probe.fraction = fraction;
      try {
        probe.deleted_count(static_cast<int>(ranking.size()));
      } catch (const DataError&) {
        skipped.emplace_back(static_cast<int>(n), fraction);
        continue;
      }
      DeletionResult r = run_deletion_experiment(text.input_ids, model.weights, cfg, rc.lrp,
                                                 fraction, rc.deletion_mode, rc.aggregation);
      const std::pair<const char*, const DirectionOutcome*> outcomes[] = {
          {"most_important", &r.most_important}, {"least_important", &r.least_important}};
      for (const auto& [direction_name, outcome] : outcomes) {
        ordered_json rec;
        rec["text"] = n;
        rec["fraction"] = fraction;
        rec["direction"] = direction_name;
        rec["mode"] = rc.deletion_mode == DeletionMode::Remove ? "remove" : "replace";
        rec["baseline_summary"] = to_tokens(r.baseline_summary, vocab);
        rec["perturbed_summary"] = to_tokens(outcome->summary_ids, vocab);
        rec["deleted_positions"] = outcome->deleted_positions;
        rec["metrics"] = metrics_json(outcome->metrics);
        rec["verdict"] = r.verdict;
        results << rec.dump() << "\n";
      }
      if (fraction == rc.headline_fraction) {
        headline_verdict = r.verdict;
        headline_margin = r.jaccard_margin;
      }
    }
    if (headline_verdict != "undefined") {
      ++distinguishable_total;
      if (headline_verdict == "truthful") ++truthful;
    }
    text_summary["verdict"] = headline_verdict;
    text_summary["jaccard_margin"] = headline_margin;
    per_text.push_back(text_summary);
  }

  ordered_json summary;
  summary["texts"] = per_text.size();
  summary["headline_fraction"] = rc.headline_fraction;
  summary["truthful"] = truthful;
  summary["not_distinguishable"] = distinguishable_total - truthful;
  summary["truthful_fraction"] =
      distinguishable_total > 0
          ? ordered_json(static_cast<double>(truthful) / distinguishable_total)
          : ordered_json(nullptr);
  ordered_json skipped_json = ordered_json::array();
  for (const auto& [text, fraction] : skipped) {
    skipped_json.push_back(ordered_json{{"text", text}, {"fraction", fraction}});
  }
  summary["skipped_fractions"] = skipped_json;
  summary["per_text"] = per_text;
  std::ofstream summary_out(dir / "validation_summary.json", std::ios::binary);
  summary_out << summary.dump(2) << "\n";
  std::cout << "validated " << per_text.size() << " texts into " << dir.string() << "\n";
  return kExitOk;
}

int cmd_report(const std::string& results_path, const std::string& summary_path,
               double headline_fraction, const std::string& out) {
  std::ifstream results(results_path);
  if (!results) throw DataError("cannot read " + results_path);
  std::ostringstream text;

  if (!summary_path.empty()) {
    std::ifstream sin(summary_path);
    if (!sin) throw DataError("cannot read " + summary_path);
    nlohmann::json summary;
    sin >> summary;
    text << "texts: " << summary["texts"] << "\n";
    text << "headline fraction: " << summary["headline_fraction"] << "\n";
    text << "truthful: " << summary["truthful"] << "  not distinguishable: "
         << summary["not_distinguishable"] << "  truthful fraction: "
         << summary["truthful_fraction"] << "\n\n";
    text << "text  oracle-lrp-spearman  verdict\n";
    for (const auto& t : summary["per_text"]) {
      text << t["text"] << "     " << t["oracle_lrp_spearman"] << "  " << t["verdict"] << "\n";
    }
    text << "\n";
  }

  text << "before/after summaries at the headline fraction\n";
  std::string line;
  int line_no = 0;
  while (std::getline(results, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(results_path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (rec["fraction"].get<double>() != headline_fraction) continue;
    text << "text " << rec["text"] << " [" << rec["direction"].get<std::string>()
         << "] verdict=" << rec["verdict"].get<std::string>() << "\n";
    text << "  baseline : ";
    for (const auto& tok : rec["baseline_summary"]) text << tok.get<std::string>() << " ";
    text << "\n  perturbed: ";
    for (const auto& tok : rec["perturbed_summary"]) text << tok.get<std::string>() << " ";
    text << "\n  jaccard=" << rec["metrics"]["token_jaccard"]
         << " f1=" << rec["metrics"]["unigram_overlap_f1"]
         << " unk=" << rec["metrics"]["unknown_rate"]
         << " rep=" << rec["metrics"]["repetition_rate"] << "\n";
  }

  if (out.empty()) {
    std::cout << text.str();
  } else {
    fs::path out_path(out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    std::ofstream f(out_path, std::ios::binary);
    f << text.str();
    std::cout << "wrote report to " << out << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale seq2seq summarizer with relevance propagation and validation"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string config_path, out_dir, weights_path, vocab_path, corpus_path, eval_corpus_path,
      text_path, results_path, summary_path, aggregation_text, fractions_text;
  int limit = 0;
  int maps_override = 0;
  bool ansi = false;
  bool no_attention = false;
  double holdout = 0.0;

  app.add_option("--config", config_path, "JSON config file (flags override it)");

  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--vocab-size", rc.model.vocab_size);
    cmd->add_option("--embed-dim", rc.model.embed_dim);
    cmd->add_option("--hidden-dim", rc.model.hidden_dim);
    cmd->add_option("--input-len", rc.model.max_input_len);
    cmd->add_option("--output-len", rc.model.max_output_len);
    cmd->add_option("--maps", rc.model.maps_per_text, "saliency maps per text");
  };
  auto add_lrp_flags = [&](CLI::App* cmd) {
    cmd->add_option("--epsilon", rc.lrp.epsilon, "propagation stabilizer");
    cmd->add_flag("--no-attention-relevance", no_attention,
                  "drop relevance routed through the attention mechanism");
    cmd->add_option("--steps-back", rc.lrp.steps_back, "decoder unroll depth (0 = full)");
    cmd->add_flag("!--no-bias-redistribution", rc.lrp.bias_redistribution,
                  "disable the bias/epsilon numerator share");
  };

  CLI::App* gen = app.add_subcommand("gen-corpus", "generate a planted-dependency corpus");
  gen->add_option("--out", out_dir)->required();
  gen->add_option("--texts", rc.corpus_texts);
  gen->add_option("--text-len", rc.corpus_text_len);
  gen->add_option("--triggers", rc.corpus_triggers, "triggers planted per text");
  gen->add_option("--trigger-types", rc.corpus_trigger_types, "distinct trigger keywords");
  gen->add_option("--background-texts", rc.corpus_background_texts,
                  "noise-only texts mixed into the training file");
  gen->add_option("--eval-texts", rc.corpus_eval_texts);
  gen->add_option("--seed", rc.seed);
  add_model_flags(gen);

  CLI::App* train = app.add_subcommand("train", "teacher-forced training on a corpus");
  train->add_option("--corpus", corpus_path)->required();
  train->add_option("--eval-corpus", eval_corpus_path);
  train->add_option("--holdout", holdout, "held-out tail fraction when no eval corpus given");
  train->add_option("--out", out_dir)->required();
  train->add_option("--epochs", rc.train.epochs);
  train->add_option("--lr", rc.train.lr);
  train->add_option("--clip", rc.train.clip_norm);
  train->add_option("--seed", rc.seed);
  add_model_flags(train);

  CLI::App* summarize = app.add_subcommand("summarize", "greedy decode");
  summarize->add_option("--weights", weights_path)->required();
  summarize->add_option("--vocab", vocab_path)->required();
  summarize->add_option("--corpus", corpus_path);
  summarize->add_option("--text", text_path, "whitespace-tokenized texts, one per line");
  summarize->add_option("--limit", limit);
  summarize->add_option("--out", out_dir);

  CLI::App* explain = app.add_subcommand("explain", "saliency maps and map statistics");
  explain->add_option("--weights", weights_path)->required();
  explain->add_option("--vocab", vocab_path)->required();
  explain->add_option("--corpus", corpus_path);
  explain->add_option("--text", text_path);
  explain->add_option("--limit", limit);
  explain->add_flag("--ansi", ansi, "also render heatmaps to the terminal");
  explain->add_option("--out", out_dir)->required();
  explain->add_option("--maps", maps_override, "saliency maps per text (default from weights)");
  add_lrp_flags(explain);

  CLI::App* validate = app.add_subcommand("validate", "deletion protocol and occlusion oracle");
  validate->add_option("--weights", weights_path)->required();
  validate->add_option("--vocab", vocab_path)->required();
  validate->add_option("--corpus", corpus_path)->required();
  validate->add_option("--limit", limit);
  validate->add_option("--out", out_dir)->required();
  validate->add_option("--fractions", fractions_text, "comma-separated deletion fractions");
  validate->add_option("--aggregation", aggregation_text, "abs | raw | scaled:<factor>");
  validate->add_option("--mode", [&rc](const std::vector<std::string>& vals) {
    if (vals[0] == "remove") {
      rc.deletion_mode = DeletionMode::Remove;
    } else if (vals[0] == "replace") {
      rc.deletion_mode = DeletionMode::ReplaceWithUnknown;
    } else {
      return false;
    }
    return true;
  }, "remove | replace");
  add_lrp_flags(validate);

  CLI::App* report = app.add_subcommand("report", "render validation results as text");
  report->add_option("--results", results_path)->required();
  report->add_option("--summary", summary_path);
  report->add_option("--headline-fraction", rc.headline_fraction);
  report->add_option("--out", out_dir, "output file (stdout when omitted)");

  for (CLI::App* sub : {gen, train, summarize, explain, validate, report}) sub->fallthrough();

  try {
    // First pass parses --config so file values land under explicit flags.
    app.parse(argc, argv);
    if (!config_path.empty()) {
      RunConfig file_rc;
      apply_config_file(file_rc, config_path);
      // Re-apply: file first, then flags (second parse overrides).
      rc = file_rc;
      app.clear();
      app.parse(argc, argv);
    }
    if (no_attention) rc.lrp.attention_path_enabled = false;
    if (!aggregation_text.empty()) rc.aggregation = parse_aggregation(aggregation_text);
    if (!fractions_text.empty()) rc.fractions = parse_fractions(fractions_text);
    rc.model.maps_per_text = std::min(rc.model.maps_per_text, rc.model.max_output_len);

    if (gen->parsed()) return cmd_gen_corpus(rc, out_dir);
    if (train->parsed()) return cmd_train(rc, corpus_path, eval_corpus_path, holdout, out_dir);
    if (summarize->parsed()) {
      return cmd_summarize(rc, weights_path, vocab_path, corpus_path, text_path, limit, out_dir);
    }
    if (explain->parsed()) {
      return cmd_explain(rc, weights_path, vocab_path, corpus_path, text_path, limit, ansi,
                         maps_override, out_dir);
    }
    if (validate->parsed()) {
      return cmd_validate(rc, weights_path, vocab_path, corpus_path, limit, out_dir);
    }
    if (report->parsed()) {
      return cmd_report(results_path, summary_path, rc.headline_fraction, out_dir);
    }
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const SingularityError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
