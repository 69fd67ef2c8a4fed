#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "seqlrp/corpus.hpp"
#include "seqlrp/model.hpp"
#include "seqlrp/rng.hpp"

namespace seqlrp {

struct Hyperparams {
  double lr = 0.5;
  int epochs = 80;
  std::uint64_t seed = 7;
  double clip_norm = 5.0;
  double init_scale = 0.1;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean cross-entropy per token, per epoch
  double trigger_accuracy = std::nan("");
  int eval_texts = 0;
};

// Gradients share the parameter layout of the weights.
using Gradients = ModelWeights;

namespace detail {

inline void accumulate_lstm_step_grads(const LstmWeights& w, LstmWeights& g,
                                       const LstmStepTape& s, const Vector& h_prev,
                                       const Vector& c_prev, const Vector& dh, const Vector& dc,
                                       Vector& dx_out, Vector& dh_prev_out, Vector& dc_prev_out) {
  const std::size_t H = s.h.size();
  Vector d_o(H), d_c(H), d_f(H), d_i(H), d_g(H);
  for (std::size_t k = 0; k < H; ++k) {
    d_o[k] = dh[k] * s.tanh_c[k];
    d_c[k] = dc[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
    d_f[k] = d_c[k] * c_prev[k];
    d_i[k] = d_c[k] * s.g[k];
    d_g[k] = d_c[k] * s.i[k];
    dc_prev_out[k] = d_c[k] * s.f[k];
  }
  // Pre-activation gradients through the gate nonlinearities.
  Vector da_i(H), da_f(H), da_o(H), da_g(H);
  for (std::size_t k = 0; k < H; ++k) {
    da_i[k] = d_i[k] * s.i[k] * (1.0 - s.i[k]);
    da_f[k] = d_f[k] * s.f[k] * (1.0 - s.f[k]);
    da_o[k] = d_o[k] * s.o[k] * (1.0 - s.o[k]);
    da_g[k] = d_g[k] * (1.0 - s.g[k] * s.g[k]);
  }
  struct GateRef {
    const LstmGateWeights* w;
    LstmGateWeights* g;
    const Vector* da;
  };
  for (GateRef ref : {GateRef{&w.input_gate, &g.input_gate, &da_i},
                      GateRef{&w.forget_gate, &g.forget_gate, &da_f},
                      GateRef{&w.output_gate, &g.output_gate, &da_o},
                      GateRef{&w.candidate, &g.candidate, &da_g}}) {
    add_outer(ref.g->W, *ref.da, s.x);
    add_outer(ref.g->U, *ref.da, h_prev);
    add_into(ref.g->b, *ref.da);
    add_matvec_transposed(dx_out, ref.w->W, *ref.da);
    add_matvec_transposed(dh_prev_out, ref.w->U, *ref.da);
  }
}

}  // namespace detail

// Teacher-forced cross-entropy for one pair, with gradients accumulated into
// `grads`. Returns the mean cross-entropy per decoder step. The backward pass
// walks the same activation tape the relevance propagation consumes.
inline double loss_and_gradients(const CorpusPair& pair, const ModelWeights& w,
                                 const ModelConfig& cfg, Gradients& grads) {
  ActivationTape tape = decode_forced(pair.input_ids, pair.target_ids, w, cfg);
  const std::size_t T = static_cast<std::size_t>(tape.decoded_steps());
  const std::size_t L = static_cast<std::size_t>(tape.input_len());
  const std::size_t H = static_cast<std::size_t>(cfg.hidden_dim);
  const std::size_t E = static_cast<std::size_t>(cfg.embed_dim);
  const double inv_T = 1.0 / static_cast<double>(T);

  double loss = 0.0;
  Vector dh(H, 0.0), dc(H, 0.0);
  std::vector<Vector> d_enc_concat(L, Vector(2 * H, 0.0));
  Vector dh0_dec(H, 0.0), dc0_dec(H, 0.0);

  for (std::size_t ti = T; ti-- > 0;) {
    const DecodeStepTape& step = tape.dec_steps[ti];
    const LstmStepTape& cell = tape.decoder.steps[ti];
    const Vector& h_prev = tape.decoder.h_prev(ti);
    const Vector& c_prev = tape.decoder.c_prev(ti);

    // Softmax cross-entropy on the recorded logits; target = emitted token
    // (gold under teacher forcing).
    Vector probs = softmax(step.logits);
    const int gold = step.emitted;
    const double p_gold = probs[static_cast<std::size_t>(gold)];
    loss += -std::log(std::max(p_gold, 1e-300)) * inv_T;
    Vector dlogits = probs;
    dlogits[static_cast<std::size_t>(gold)] -= 1.0;
    for (double& v : dlogits) v *= inv_T;

    add_outer(grads.projection.W, dlogits, cell.h);
    add_into(grads.projection.b, dlogits);
    add_matvec_transposed(dh, w.projection.W, dlogits);

    Vector dx(cell.x.size(), 0.0);
    Vector dh_prev(H, 0.0), dc_prev(H, 0.0);
    detail::accumulate_lstm_step_grads(w.decoder, grads.decoder, cell, h_prev, c_prev, dh, dc, dx,
                                       dh_prev, dc_prev);

    // Previous-token embedding.
    for (std::size_t e = 0; e < E; ++e) {
      grads.embedding.at(static_cast<std::size_t>(step.prev_token), e) += dx[e];
    }

    // Attention backward: context, softmax, energies, tanh, both affine maps.
    const AttentionTape& att = step.attention;
    Vector dctx(dx.begin() + static_cast<std::ptrdiff_t>(E), dx.end());
    Vector dalpha(L, 0.0);
    for (std::size_t j = 0; j < L; ++j) {
      dalpha[j] = dot(dctx, tape.encoder_concat[j]);
      axpy_into(d_enc_concat[j], att.alpha[j], dctx);
    }
    double alpha_dot = 0.0;
    for (std::size_t j = 0; j < L; ++j) alpha_dot += att.alpha[j] * dalpha[j];
    Vector de(L);
    for (std::size_t j = 0; j < L; ++j) de[j] = att.alpha[j] * (dalpha[j] - alpha_dot);
    for (std::size_t j = 0; j < L; ++j) {
      if (de[j] == 0.0) continue;
      axpy_into(grads.attention.v, de[j], att.u[j]);
      Vector da_att(att.u[j].size());
      for (std::size_t a = 0; a < da_att.size(); ++a) {
        da_att[a] = de[j] * w.attention.v[a] * (1.0 - att.u[j][a] * att.u[j][a]);
      }
      add_outer(grads.attention.W_query, da_att, h_prev);
      add_outer(grads.attention.U_keys, da_att, tape.encoder_concat[j]);
      add_matvec_transposed(dh_prev, w.attention.W_query, da_att);
      add_matvec_transposed(d_enc_concat[j], w.attention.U_keys, da_att);
    }

    if (ti > 0) {
      dh = std::move(dh_prev);
      dc = std::move(dc_prev);
    } else {
      dh0_dec = std::move(dh_prev);
      dc0_dec = std::move(dc_prev);
    }
  }

  // Hand the decoder-state and attention gradients to the encoder.
  std::vector<Vector> dh_fwd(L, Vector(H, 0.0));
  std::vector<Vector> dc_fwd(L, Vector(H, 0.0));
  std::vector<Vector> dh_bwd(L, Vector(H, 0.0));
  add_into(dh_fwd[L - 1], dh0_dec);
  add_into(dc_fwd[L - 1], dc0_dec);
  for (std::size_t j = 0; j < L; ++j) {
    for (std::size_t k = 0; k < H; ++k) {
      dh_fwd[j][k] += d_enc_concat[j][k];
      dh_bwd[L - 1 - j][k] += d_enc_concat[j][H + k];
    }
  }

  auto run_encoder_bptt = [&](const LstmWeights& enc_w, LstmWeights& enc_g,
                              const LstmSequenceTape& seq, std::vector<Vector>& dh_by_step,
                              std::vector<Vector>& dc_by_step, auto&& position_of_step) {
    Vector dh_carry(H, 0.0), dc_carry(H, 0.0);
    for (std::size_t ti = seq.steps.size(); ti-- > 0;) {
      Vector dht = dh_carry;
      add_into(dht, dh_by_step[ti]);
      Vector dct = dc_carry;
      if (!dc_by_step.empty()) add_into(dct, dc_by_step[ti]);
      Vector dx(E, 0.0);
      Vector dh_prev(H, 0.0), dc_prev(H, 0.0);
      detail::accumulate_lstm_step_grads(enc_w, enc_g, seq.steps[ti], seq.h_prev(ti),
                                         seq.c_prev(ti), dht, dct, dx, dh_prev, dc_prev);
      const int pos = position_of_step(static_cast<int>(ti));
      const int token = tape.input_ids[static_cast<std::size_t>(pos)];
      for (std::size_t e = 0; e < E; ++e) {
        grads.embedding.at(static_cast<std::size_t>(token), e) += dx[e];
      }
      dh_carry = std::move(dh_prev);
      dc_carry = std::move(dc_prev);
    }
  };

  std::vector<Vector> no_cell;
  run_encoder_bptt(w.encoder_fwd, grads.encoder_fwd, tape.encoder_fwd, dh_fwd, dc_fwd,
                   [](int t) { return t; });
  run_encoder_bptt(w.encoder_bwd, grads.encoder_bwd, tape.encoder_bwd, dh_bwd, no_cell,
                   [&](int t) { return static_cast<int>(L) - 1 - t; });

  return loss;
}

inline double gradient_norm(Gradients& g) {
  double acc = 0.0;
  for (const auto& p : named_params(g)) {
    for (std::size_t k = 0; k < p.count(); ++k) acc += p.data[k] * p.data[k];
  }
  return std::sqrt(acc);
}

inline void sgd_update(ModelWeights& w, Gradients& g, double lr, double clip_norm) {
  double scale = lr;
  if (clip_norm > 0.0) {
    const double norm = gradient_norm(g);
    if (norm > clip_norm) scale = lr * clip_norm / norm;
  }
  auto wp = named_params(w);
  auto gp = named_params(g);
  for (std::size_t b = 0; b < wp.size(); ++b) {
    for (std::size_t k = 0; k < wp[b].count(); ++k) wp[b].data[k] -= scale * gp[b].data[k];
  }
}

// Fraction of pairs whose decoded summary contains every target token.
inline double trigger_accuracy(const std::vector<CorpusPair>& pairs, const ModelWeights& w,
                               const ModelConfig& cfg) {
  if (pairs.empty()) return std::nan("");
  int hits = 0;
  for (const auto& pair : pairs) {
    DecodeResult dec = decode_greedy(pair.input_ids, w, cfg);
    bool all_present = true;
    for (int target : pair.target_ids) {
      bool found = false;
      for (int emitted : dec.summary_ids) {
        if (emitted == target) {
          found = true;
          break;
        }
      }
      if (!found) {
        all_present = false;
        break;
      }
    }
    if (all_present) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

struct TrainResult {
  ModelWeights weights;
  TrainReport report;
};

// Plain SGD with gradient-norm clipping, single-threaded and sequential so
// that (corpus, seed, hyperparams) determine the weights bit-exactly.
inline TrainResult train_toy(const std::vector<CorpusPair>& train_pairs,
                             const std::vector<CorpusPair>& heldout_pairs,
                             const ModelConfig& cfg, const Hyperparams& hp) {
  if (train_pairs.empty()) throw DataError("train_toy: empty corpus");
  cfg.validate();
  TrainResult out;
  out.weights = init_weights(cfg, hp.seed, hp.init_scale);
  Rng order_rng(hp.seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<std::size_t> order(train_pairs.size());
  for (std::size_t n = 0; n < order.size(); ++n) order[n] = n;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t n : order) {
      Gradients grads = zero_weights(cfg);
      const double loss = loss_and_gradients(train_pairs[n], out.weights, cfg, grads);
      if (!std::isfinite(loss)) {
        throw NumericalError("train_toy: loss diverged (non-finite) at epoch " +
                             std::to_string(epoch));
      }
      epoch_loss += loss;
      sgd_update(out.weights, grads, hp.lr, hp.clip_norm);
    }
    out.report.epoch_loss.push_back(epoch_loss / static_cast<double>(train_pairs.size()));
  }

  out.report.eval_texts = static_cast<int>(heldout_pairs.size());
  if (!heldout_pairs.empty()) {
    out.report.trigger_accuracy = trigger_accuracy(heldout_pairs, out.weights, cfg);
  }
  return out;
}

}  // namespace seqlrp
