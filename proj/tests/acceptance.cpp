// Acceptance suite. Runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion; exit code is the number of failures.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqlrp/corpus.hpp"
#include "seqlrp/lrp.hpp"
#include "seqlrp/model.hpp"
#include "seqlrp/saliency.hpp"
#include "seqlrp/serialize.hpp"
#include "seqlrp/train.hpp"
#include "seqlrp/validation.hpp"

namespace fs = std::filesystem;
using namespace seqlrp;

namespace {

struct Criterion {
  int number;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Criterion> g_results;

void record(int number, const std::string& name, bool pass, const std::string& detail) {
  g_results.push_back({number, name, pass, detail});
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared toy-model artifacts (criterion 5 setup, reused by 2, 6, 8)
// ---------------------------------------------------------------------------

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.vocab_size = 200;
  cfg.embed_dim = 16;
  cfg.hidden_dim = 32;
  cfg.max_input_len = 32;
  cfg.max_output_len = 8;
  cfg.maps_per_text = 1;  // the toy summaries carry one content token
  return cfg;
}

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.vocab_size = 8;
  cfg.embed_dim = 2;
  cfg.hidden_dim = 3;
  cfg.max_input_len = 5;
  cfg.max_output_len = 4;
  cfg.maps_per_text = 4;
  return cfg;
}

struct ToyArtifacts {
  ModelConfig config;
  std::vector<CorpusPair> train_pairs;
  std::vector<CorpusPair> eval_pairs;
  ModelWeights weights;
  double trigger_accuracy = 0.0;
};

// The planted corpus for the faithfulness experiments (200 texts, 1 trigger
// each) plus background texts that anchor the model's no-keyword output, so
// keyword deletion has a trained counterfactual. Hyperparameters were
// calibrated once against the occlusion oracle and frozen here.
ToyArtifacts build_toy_artifacts() {
  ToyArtifacts art;
  art.config = toy_config();
  SyntheticCorpusSpec spec = default_toy_spec(art.config, 20250811, 12);
  spec.num_texts = 200;
  spec.text_len = 24;
  spec.num_triggers = 1;
  art.train_pairs = generate_synthetic_corpus(spec, art.config);
  SyntheticCorpusSpec eval_spec = spec;
  eval_spec.num_texts = 60;
  eval_spec.seed = spec.seed ^ 0xe7a1d5ull;
  art.eval_pairs = generate_synthetic_corpus(eval_spec, art.config);

  std::vector<CorpusPair> train_mix = art.train_pairs;
  std::vector<CorpusPair> background = generate_background_corpus(
      150, spec.text_len, toy_background_answer(12), spec, spec.seed ^ 0xb6ull, art.config);
  train_mix.insert(train_mix.end(), background.begin(), background.end());

  Hyperparams hp;
  hp.lr = 0.5;
  hp.epochs = 60;
  hp.seed = 7;
  hp.clip_norm = 5.0;
  hp.init_scale = 0.5;
  TrainResult result = train_toy(train_mix, art.eval_pairs, art.config, hp);
  art.weights = std::move(result.weights);
  art.trigger_accuracy = result.report.trigger_accuracy;
  return art;
}

void zero_biases(ModelWeights& w) {
  for (LstmWeights* l : {&w.encoder_fwd, &w.encoder_bwd, &w.decoder}) {
    for (LstmGateWeights* g : {&l->input_gate, &l->forget_gate, &l->output_gate, &l->candidate}) {
      std::fill(g->b.begin(), g->b.end(), 0.0);
    }
  }
  std::fill(w.projection.b.begin(), w.projection.b.end(), 0.0);
}

double conservation_gap(const PropagationResult& r) {
  const double recovered = r.input_sum + r.prev_token_sum + r.initial_state_sum +
                           r.attention_dropped_sum + r.truncated_sum;
  return std::abs(r.injected - recovered) / std::max(std::abs(r.injected), 1e-300);
}

std::size_t expected_product_count(const ActivationTape& tape, int output_step) {
  const std::size_t L = static_cast<std::size_t>(tape.input_len());
  const std::size_t steps = static_cast<std::size_t>(output_step) + 1;
  return 3 * steps + L * steps + 2 * 3 * L;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

void criterion_1_eq1_fidelity() {
  Matrix W{{1, 1}};
  Vector no_bias = lrp_linear(W, {0}, {1, 3}, {4}, {4}, 0.0);
  const bool exact = no_bias == Vector{1, 3};

  Vector with_bias = lrp_linear(W, {2}, {1, 3}, {6}, {4}, 0.0, true);
  const double gap = std::abs(sum(with_bias) - 4.0) / 4.0;
  const bool conserved = gap <= 1e-9;

  record(1, "epsilon-rule unit fidelity", exact && conserved,
         "hand case -> [" + fmt(no_bias[0]) + ", " + fmt(no_bias[1]) +
             "], bias-case conservation gap " + fmt(gap));
}

void criterion_2_gate_totality(const ToyArtifacts& art) {
  const CorpusPair& pair = art.train_pairs.front();
  DecodeResult dec = decode_greedy(pair.input_ids, art.weights, art.config);
  if (dec.tape.decoded_steps() == 0) {
    record(2, "gate-rule totality", false, "toy model decoded zero steps");
    return;
  }
  LrpConfig lrp;
  const int k = dec.tape.decoded_steps() - 1;
  PropagationResult r = propagate_token(dec.tape, k, art.weights, lrp);
  const std::size_t expected = expected_product_count(dec.tape, k);
  const bool pass = r.audit.count() == expected && r.audit.max_gate_relevance() == 0.0;
  record(2, "gate-rule totality", pass,
         std::to_string(r.audit.count()) + "/" + std::to_string(expected) +
             " product nodes audited, max gate relevance " + fmt(r.audit.max_gate_relevance()));
}

void criterion_3_conservation() {
  ModelConfig cfg = micro_config();
  ModelWeights w = init_weights(cfg, 51);
  zero_biases(w);
  DecodeResult dec = decode_greedy({3, 4, 5, 6}, w, cfg);
  if (dec.tape.decoded_steps() == 0) {
    record(3, "end-to-end conservation", false, "micro model decoded zero steps");
    return;
  }
  const int k = dec.tape.decoded_steps() - 1;

  LrpConfig exact;
  exact.epsilon = 0.0;
  const double gap0 = conservation_gap(propagate_token(dec.tape, k, w, exact));

  LrpConfig stabilized;
  stabilized.epsilon = 1e-5;
  const double gap_eps = conservation_gap(propagate_token(dec.tape, k, w, stabilized));

  const bool pass = gap0 <= 1e-4 && gap_eps <= 1e-2;
  record(3, "end-to-end conservation", pass,
         "eps=0 gap " + fmt(gap0) + " (<=1e-4), eps=1e-5 drift " + fmt(gap_eps) + " (<=1e-2)");
}

void criterion_4_gradient_check() {
  ModelConfig cfg = micro_config();
  ModelWeights w = init_weights(cfg, 101, 0.5);
  std::vector<CorpusPair> pairs = {
      {{5, 6, 7, 3}, {4, 6}, {}},
      {{7, 3, 5}, {6}, {}},
      {{3, 3, 6, 7, 5}, {5, 4, 6}, {}},
  };
  Gradients analytic = zero_weights(cfg);
  for (const auto& pair : pairs) loss_and_gradients(pair, w, cfg, analytic);

  auto loss_of = [&]() {
    Gradients sink = zero_weights(cfg);
    double total = 0.0;
    for (const auto& pair : pairs) total += loss_and_gradients(pair, w, cfg, sink);
    return total;
  };

  const double h = 1e-5;
  std::size_t total = 0, good = 0;
  auto wp = named_params(w);
  auto gp = named_params(analytic);
  for (std::size_t blk = 0; blk < wp.size(); ++blk) {
    for (std::size_t k = 0; k < wp[blk].count(); ++k) {
      const double saved = wp[blk].data[k];
      wp[blk].data[k] = saved + h;
      const double up = loss_of();
      wp[blk].data[k] = saved - h;
      const double down = loss_of();
      wp[blk].data[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = gp[blk].data[k];
      const double diff = std::abs(a - numeric);
      const double denom = std::max(std::abs(a), std::abs(numeric));
      ++total;
      // Absolute floor covers gradients below finite-difference resolution.
      if (diff <= 1e-9 || diff <= 1e-4 * denom) ++good;
    }
  }
  const double rate = static_cast<double>(good) / static_cast<double>(total);
  record(4, "trainer gradient check", rate >= 0.99,
         fmt(100.0 * rate) + "% of " + std::to_string(total) +
             " parameters within 1e-4 of central differences");
}

void criterion_5_planted_faithfulness(const ToyArtifacts& art) {
  std::ostringstream detail;
  detail << "held-out trigger accuracy " << fmt(art.trigger_accuracy);
  bool pass = art.trigger_accuracy >= 0.9;

  LrpConfig lrp;
  int occl_hits = 0, lrp_hits = 0, margin_hits = 0, usable = 0;
  for (const auto& pair : art.train_pairs) {
    const int trigger_pos = pair.triggers.front().position;
    DecodeResult baseline = decode_greedy(pair.input_ids, art.weights, art.config);
    if (baseline.summary_ids.empty()) continue;
    ++usable;

    std::vector<double> occ = occlusion_importance(pair.input_ids, art.weights, art.config);
    int occ_top = 0;
    for (std::size_t p = 1; p < occ.size(); ++p) {
      if (occ[p] > occ[static_cast<std::size_t>(occ_top)]) occ_top = static_cast<int>(p);
    }
    if (occ_top == trigger_pos) ++occl_hits;

    SaliencyStack stack = relevance_stack(baseline.tape, art.weights, art.config, lrp);
    AggregatedSaliency agg = aggregate(stack, {AggregationMode::AbsMean});
    std::vector<int> ranking = rank_tokens(agg, baseline.tape.input_ids, special_ids());
    if (!ranking.empty() && ranking.front() == trigger_pos) ++lrp_hits;

    DeletionResult del = run_deletion_experiment(pair.input_ids, art.weights, art.config, lrp,
                                                 0.07, DeletionMode::Remove,
                                                 {AggregationMode::AbsMean});
    if (del.most_important.metrics.token_jaccard < del.least_important.metrics.token_jaccard) {
      ++margin_hits;
    }
  }
  const double n = std::max(1, usable);
  const double occl_rate = occl_hits / n;
  const double lrp_rate = lrp_hits / n;
  const double margin_rate = margin_hits / n;
  detail << "; occlusion top-1 " << fmt(occl_rate) << " (>=0.95)"
         << "; attribution top-1 " << fmt(lrp_rate) << " (>=0.60)"
         << "; deletion margin " << fmt(margin_rate) << " (>=0.70)"
         << "; usable texts " << usable << "/" << art.train_pairs.size();
  pass = pass && usable == static_cast<int>(art.train_pairs.size()) && occl_rate >= 0.95 &&
         lrp_rate >= 0.60 && margin_rate >= 0.70;
  record(5, "planted-dependency faithfulness", pass, detail.str());
}

// ---------------------------------------------------------------------------
// CLI-level criteria
// ---------------------------------------------------------------------------

struct CliRunner {
  std::string cli;
  fs::path scratch;

  int run(const std::string& args, const std::string& log_name) const {
    const fs::path log = scratch / log_name;
    const std::string command = "\"" + cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    return std::system(command.c_str());
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool write_pipeline_config(const fs::path& path) {
  std::ofstream out(path);
  out << R"({
  "model": {"vocab_size": 200, "embed_dim": 16, "hidden_dim": 32,
            "max_input_len": 32, "max_output_len": 8, "maps_per_text": 8},
  "lrp": {"epsilon": 1e-5},
  "fractions": [0.03, 0.05, 0.07, 0.10],
  "aggregation": "abs",
  "seed": 99,
  "train": {"lr": 0.5, "epochs": 4, "clip_norm": 5.0},
  "corpus": {"texts": 30, "text_len": 24, "triggers": 1, "eval_texts": 10}
})";
  return static_cast<bool>(out);
}

// One full gen-corpus -> train -> explain -> validate pass under `dir`.
bool run_pipeline(const CliRunner& runner, const fs::path& config, const fs::path& dir,
                  std::string& error) {
  fs::create_directories(dir);
  auto step = [&](const std::string& args, const std::string& log) {
    const int rc = runner.run("--config \"" + config.string() + "\" " + args, log);
    if (rc != 0) {
      error = "step failed (" + log + "), exit " + std::to_string(rc);
      return false;
    }
    return true;
  };
  const std::string d = dir.string();
  if (!step("gen-corpus --out \"" + d + "\"", dir.filename().string() + "_gen.log")) return false;
  if (!step("train --corpus \"" + d + "/corpus.jsonl\" --eval-corpus \"" + d +
                "/corpus_eval.jsonl\" --out \"" + d + "\"",
            dir.filename().string() + "_train.log")) {
    return false;
  }
  if (!step("explain --weights \"" + d + "/weights.bin\" --vocab \"" + d +
                "/vocab.txt\" --corpus \"" + d + "/corpus.jsonl\" --limit 6 --out \"" + d +
                "/explain\"",
            dir.filename().string() + "_explain.log")) {
    return false;
  }
  if (!step("validate --weights \"" + d + "/weights.bin\" --vocab \"" + d +
                "/vocab.txt\" --corpus \"" + d + "/corpus.jsonl\" --limit 6 --out \"" + d +
                "/validate\"",
            dir.filename().string() + "_validate.log")) {
    return false;
  }
  return true;
}

void criterion_6_observation_reports(const CliRunner& runner, const ToyArtifacts& art) {
  // Exact statistics on hand-constructed stacks.
  SaliencyStack identical;
  identical.input_ids = {5, 6, 7};
  for (int k = 0; k < 3; ++k) {
    TokenRelevance tr;
    tr.values = {1, -2, 3};
    tr.output_step = k;
    tr.emitted_id = 4;
    identical.maps.push_back(tr);
  }
  SimilarityStats sim = map_pairwise_similarity(identical);
  const bool cosine_exact = sim.mean == 1.0 && sim.min == 1.0 && sim.max == 1.0;

  SaliencyStack proportional;
  proportional.input_ids = {5, 6, 7, 8};
  {
    TokenRelevance tr;
    tr.values = {1, -3, 3, 1};  // |map| = {1,3,3,1}, alpha = |map|/8 is dyadic
    tr.output_step = 0;
    tr.emitted_id = 4;
    proportional.maps.push_back(tr);
  }
  ActivationTape alpha_tape;
  {
    DecodeStepTape s;
    s.attention.alpha = {0.125, 0.375, 0.375, 0.125};
    alpha_tape.dec_steps.push_back(s);
  }
  CorrelationReport corr = attention_saliency_correlation(proportional, alpha_tape);
  const bool corr_exact = corr.mean_pearson && *corr.mean_pearson == 1.0 && corr.mean_spearman &&
                          *corr.mean_spearman == 1.0;

  // command_explain emits the statistics for every text.
  const fs::path dir = runner.scratch / "c6";
  fs::create_directories(dir);
  save_corpus((dir / "corpus.jsonl").string(), std::vector<CorpusPair>(art.train_pairs.begin(),
                                                                       art.train_pairs.begin() + 5));
  save_weights((dir / "weights.bin").string(), art.config, art.weights);
  toy_vocab(art.config).save((dir / "vocab.txt").string());
  // --maps 8 keeps both decode steps in the stack so pairwise similarity is
  // defined for single-answer summaries.
  const int rc = runner.run("explain --maps 8 --weights \"" + (dir / "weights.bin").string() +
                                "\" --vocab \"" + (dir / "vocab.txt").string() + "\" --corpus \"" +
                                (dir / "corpus.jsonl").string() + "\" --out \"" +
                                (dir / "out").string() + "\"",
                            "c6_explain.log");
  bool report_ok = rc == 0;
  int lines = 0;
  if (report_ok) {
    std::ifstream in(dir / "out" / "explain_report.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++lines;
      nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
      if (rec.is_discarded() || !rec.contains("map_similarity") ||
          !rec.contains("attention_correlation") || rec["map_similarity"].is_null() ||
          rec["map_similarity"]["mean_cosine"].is_null() ||
          rec["attention_correlation"]["mean_spearman"].is_null()) {
        report_ok = false;
      }
    }
    report_ok = report_ok && lines == 5;
  }
  record(6, "observation statistics reported", cosine_exact && corr_exact && report_ok,
         std::string("hand-stack cosine mean ") + fmt(sim.mean) + ", pearson " +
             fmt(corr.mean_pearson.value_or(-2)) + ", spearman " +
             fmt(corr.mean_spearman.value_or(-2)) + "; explain records " + std::to_string(lines) +
             "/5 with statistics");
}

void criterion_7_determinism(const CliRunner& runner) {
  const fs::path config = runner.scratch / "pipeline_config.json";
  if (!write_pipeline_config(config)) {
    record(7, "pipeline determinism", false, "cannot write pipeline config");
    return;
  }
  std::string error;
  const fs::path run1 = runner.scratch / "determinism_run1";
  const fs::path run2 = runner.scratch / "determinism_run2";
  if (!run_pipeline(runner, config, run1, error) || !run_pipeline(runner, config, run2, error)) {
    record(7, "pipeline determinism", false, error);
    return;
  }
  const std::vector<std::string> artifacts = {
      "corpus.jsonl",
      "corpus_eval.jsonl",
      "vocab.txt",
      "weights.bin",
      "train_report.json",
      "effective_config.json",
      "explain/explain_report.jsonl",
      "explain/heatmap_000.html",
      "explain/heatmap_005.html",
      "validate/validation_results.jsonl",
      "validate/validation_summary.json",
  };
  std::string mismatch;
  for (const auto& rel : artifacts) {
    const std::string a = slurp(run1 / rel);
    const std::string b = slurp(run2 / rel);
    if (a.empty() || a != b) {
      mismatch = rel + (a.empty() ? " (missing/empty)" : " (differs)");
      break;
    }
  }
  record(7, "pipeline determinism", mismatch.empty(),
         mismatch.empty() ? "all " + std::to_string(artifacts.size()) + " artifacts byte-identical"
                          : mismatch);
}

void criterion_8_ablation(const ToyArtifacts& art, const CliRunner& runner) {
  // Library-level: zero attention-path relevance, gate totality and
  // conservation still hold.
  ModelConfig cfg = micro_config();
  ModelWeights w = init_weights(cfg, 51);
  zero_biases(w);
  DecodeResult dec = decode_greedy({3, 4, 5, 6}, w, cfg);
  LrpConfig ablated;
  ablated.epsilon = 0.0;
  ablated.attention_path_enabled = false;
  const int k = dec.tape.decoded_steps() - 1;
  PropagationResult r = propagate_token(dec.tape, k, w, ablated);
  const bool attention_zero = r.attention_to_encoder_sum == 0.0;
  const bool audit_ok = r.audit.count() == expected_product_count(dec.tape, k) &&
                        r.audit.max_gate_relevance() == 0.0;
  const double gap = conservation_gap(r);

  LrpConfig ablated_eps = ablated;
  ablated_eps.epsilon = 1e-5;
  const double gap_eps = conservation_gap(propagate_token(dec.tape, k, w, ablated_eps));

  // CLI-level: the flag drives the same path.
  const fs::path dir = runner.scratch / "c8";
  fs::create_directories(dir);
  save_corpus((dir / "corpus.jsonl").string(),
              std::vector<CorpusPair>(art.train_pairs.begin(), art.train_pairs.begin() + 2));
  save_weights((dir / "weights.bin").string(), art.config, art.weights);
  toy_vocab(art.config).save((dir / "vocab.txt").string());
  const int rc = runner.run("explain --no-attention-relevance --weights \"" +
                                (dir / "weights.bin").string() + "\" --vocab \"" +
                                (dir / "vocab.txt").string() + "\" --corpus \"" +
                                (dir / "corpus.jsonl").string() + "\" --out \"" +
                                (dir / "out").string() + "\"",
                            "c8_explain.log");

  const bool pass = attention_zero && audit_ok && gap <= 1e-4 && gap_eps <= 1e-2 && rc == 0;
  record(8, "attention-relevance ablation", pass,
         "attention relevance " + fmt(r.attention_to_encoder_sum) + ", conservation gap " +
             fmt(gap) + " (eps=1e-5: " + fmt(gap_eps) + "), dropped mass " +
             fmt(r.attention_dropped_sum) + ", cli exit " + std::to_string(rc));
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::string scratch = "acceptance_scratch";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli") cli = argv[i + 1];
    if (flag == "--scratch") scratch = argv[i + 1];
  }
  if (cli.empty()) {
    std::cerr << "usage: acceptance --cli <path-to-seqlrp> [--scratch <dir>]\n";
    return 64;
  }
  CliRunner runner{cli, fs::path(scratch)};
  fs::create_directories(runner.scratch);

  try {
    criterion_1_eq1_fidelity();
    criterion_3_conservation();
    criterion_4_gradient_check();

    std::cout << "training toy model for criteria 2, 5, 6, 8..." << std::endl;
    ToyArtifacts art = build_toy_artifacts();

    criterion_2_gate_totality(art);
    criterion_5_planted_faithfulness(art);
    criterion_6_observation_reports(runner, art);
    criterion_7_determinism(runner);
    criterion_8_ablation(art, runner);
  } catch (const std::exception& e) {
    std::cerr << "acceptance aborted: " << e.what() << "\n";
    return 65;
  }

  std::sort(g_results.begin(), g_results.end(),
            [](const Criterion& a, const Criterion& b) { return a.number < b.number; });
  int failures = 0;
  for (const auto& c : g_results) {
    std::cout << (c.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.number << ": " << c.name
              << " — " << c.detail << "\n";
    if (!c.pass) ++failures;
  }
  return failures;
}
