#include <gtest/gtest.h>

#include <cmath>

#include "seqlrp/train.hpp"

using namespace seqlrp;

namespace {

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

double corpus_loss(const std::vector<CorpusPair>& pairs, const ModelWeights& w,
                   const ModelConfig& cfg) {
  Gradients sink = zero_weights(cfg);
  double total = 0.0;
  for (const auto& pair : pairs) total += loss_and_gradients(pair, w, cfg, sink);
  return total;
}

}  // namespace

TEST(Train, ZeroEpochsReturnsInitialWeights) {
  ModelConfig cfg = micro_config();
  std::vector<CorpusPair> corpus = {{{5, 6, 7}, {4}, {}}};
  Hyperparams hp;
  hp.epochs = 0;
  hp.seed = 33;
  TrainResult r = train_toy(corpus, {}, cfg, hp);
  EXPECT_TRUE(r.report.epoch_loss.empty());
  ModelWeights init = init_weights(cfg, hp.seed, hp.init_scale);
  auto got = named_params(r.weights);
  auto want = named_params(init);
  for (std::size_t b = 0; b < got.size(); ++b) {
    for (std::size_t k = 0; k < got[b].count(); ++k) {
      ASSERT_EQ(got[b].data[k], want[b].data[k]) << got[b].name;
    }
  }
}

TEST(Train, SinglePairMemorization) {
  ModelConfig cfg;
  cfg.vocab_size = 16;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 6;
  cfg.max_input_len = 6;
  cfg.max_output_len = 4;
  cfg.maps_per_text = 2;
  CorpusPair pair{{5, 9, 3, 12}, {7}, {{1, 9}}};
  Hyperparams hp;
  hp.epochs = 300;
  hp.lr = 0.5;
  hp.seed = 3;
  TrainResult r = train_toy({pair}, {pair}, cfg, hp);
  EXPECT_EQ(r.report.trigger_accuracy, 1.0);
  for (double loss : r.report.epoch_loss) EXPECT_TRUE(std::isfinite(loss));
}

TEST(Train, FullDeterminism) {
  ModelConfig cfg = micro_config();
  std::vector<CorpusPair> corpus = {{{5, 6, 7}, {4}, {}}, {{6, 7, 5}, {3}, {}}};
  Hyperparams hp;
  hp.epochs = 3;
  hp.seed = 77;
  TrainResult a = train_toy(corpus, {}, cfg, hp);
  TrainResult b = train_toy(corpus, {}, cfg, hp);
  auto pa = named_params(a.weights);
  auto pb = named_params(b.weights);
  for (std::size_t blk = 0; blk < pa.size(); ++blk) {
    for (std::size_t k = 0; k < pa[blk].count(); ++k) {
      ASSERT_EQ(pa[blk].data[k], pb[blk].data[k]) << pa[blk].name;
    }
  }
  EXPECT_EQ(a.report.epoch_loss, b.report.epoch_loss);
}

TEST(Train, TeacherForcingFeedsGoldPreviousTokens) {
  ModelConfig cfg = micro_config();
  ModelWeights w = init_weights(cfg, 55);
  std::vector<int> targets = {4, 6, 5};
  ActivationTape tape = decode_forced({5, 6, 7}, targets, w, cfg);
  ASSERT_EQ(tape.decoded_steps(), 4);  // targets + stop step
  EXPECT_EQ(tape.dec_steps[0].prev_token, Vocab::kStart);
  EXPECT_EQ(tape.dec_steps[1].prev_token, 4);
  EXPECT_EQ(tape.dec_steps[2].prev_token, 6);
  EXPECT_EQ(tape.dec_steps[3].prev_token, 5);
  EXPECT_EQ(tape.dec_steps[3].emitted, Vocab::kStop);
}

TEST(Train, DivergenceAborts) {
  ModelConfig cfg = micro_config();
  std::vector<CorpusPair> corpus = {{{5, 6, 7}, {4}, {}}};
  Hyperparams hp;
  hp.epochs = 4;
  hp.lr = 1e300;
  hp.clip_norm = 0.0;  // clipping disabled
  hp.seed = 5;
  EXPECT_THROW(train_toy(corpus, {}, cfg, hp), NumericalError);
}

// Analytic gradients against central finite differences on the micro model.
// Gradients below the finite-difference noise floor (ulp(loss)/2h ~ 1e-10)
// pass on an absolute tolerance instead of a relative one.
TEST(Train, GradientsMatchFiniteDifferences) {
  ModelConfig cfg = micro_config();
  ModelWeights w = init_weights(cfg, 101, 0.5);
  std::vector<CorpusPair> pairs = {
      {{5, 6, 7, 3}, {4, 6}, {}},
      {{7, 3, 5}, {6}, {}},
      {{3, 3, 6, 7, 5}, {5, 4, 6}, {}},
  };

  Gradients analytic = zero_weights(cfg);
  for (const auto& pair : pairs) loss_and_gradients(pair, w, cfg, analytic);

  const double h = 1e-5;
  std::size_t total = 0, good = 0;
  auto wp = named_params(w);
  auto gp = named_params(analytic);
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t blk = 0; blk < wp.size(); ++blk) {
    for (std::size_t k = 0; k < wp[blk].count(); ++k) {
      const double saved = wp[blk].data[k];
      wp[blk].data[k] = saved + h;
      const double up = corpus_loss(pairs, w, cfg);
      wp[blk].data[k] = saved - h;
      const double down = corpus_loss(pairs, w, cfg);
      wp[blk].data[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = gp[blk].data[k];
      ++total;
      const double diff = std::abs(a - numeric);
      const double denom = std::max(std::abs(a), std::abs(numeric));
      if (diff <= 1e-9 || diff <= 1e-4 * denom) {
        ++good;
      } else if (diff / denom > worst) {
        worst = diff / denom;
        worst_name = wp[blk].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  const double pass_rate = static_cast<double>(good) / static_cast<double>(total);
  EXPECT_GE(pass_rate, 0.99) << "worst offender " << worst_name << " rel err " << worst;
}

TEST(Train, EmptyCorpusRejected) {
  ModelConfig cfg = micro_config();
  Hyperparams hp;
  EXPECT_THROW(train_toy({}, {}, cfg, hp), DataError);
}

TEST(Train, TriggerAccuracyCountsContainment) {
  ModelConfig cfg = micro_config();
  ModelWeights w = zero_weights(cfg);
  w.projection.b[4] = 5.0;  // constant emission of token 4, never stop
  std::vector<CorpusPair> pairs = {
      {{5, 6}, {4}, {}},  // satisfied: 4 is emitted
      {{5, 6}, {3}, {}},  // not satisfied
  };
  EXPECT_EQ(trigger_accuracy(pairs, w, cfg), 0.5);
}
