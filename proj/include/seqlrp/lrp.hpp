#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqlrp/model.hpp"
#include "seqlrp/tensor.hpp"

namespace seqlrp {

struct LrpConfig {
  // Stabilizer added to propagation denominators.
  double epsilon = 1e-5;
  // When false, relevance reaching the attention context is dropped instead
  // of being routed to the encoder states (the ablation experiment).
  bool attention_path_enabled = true;
  // How many decoder timesteps to unroll relevance through; <= 0 means the
  // full unroll back to step 0. Truncation is a performance knob only.
  int steps_back = 0;
  // Redistribute the (epsilon * sign(z) + b) / D numerator share. On, the
  // propagation conserves relevance exactly, bias included; off, epsilon and
  // biases absorb relevance.
  bool bias_redistribution = true;

  void validate() const {
    if (epsilon < 0.0) throw DataError("LrpConfig: epsilon must be nonnegative");
  }
};

// sign with sign(0) := +1
inline double sign_pos(double x) { return x < 0.0 ? -1.0 : 1.0; }

// Instrumentation over elementwise-product nodes: every product traversed by
// a backward pass registers the relevance assigned to its gate side, which
// the gate rule makes identically zero.
struct ProductAudit {
  struct Entry {
    std::string node;
    double gate_abs_max;
  };
  std::vector<Entry> entries;

  void record(const std::string& node, const Vector& gate_relevance) {
    double m = 0.0;
    for (double v : gate_relevance) m = std::max(m, std::abs(v));
    entries.push_back({node, m});
  }

  double max_gate_relevance() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.gate_abs_max);
    return m;
  }

  std::size_t count() const { return entries.size(); }
};

// Relevance attached to tape nodes, keyed "section[step].role".
struct RelevancePacket {
  std::map<std::string, Vector> nodes;

  void deposit(const std::string& key, const Vector& r) {
    auto it = nodes.find(key);
    if (it == nodes.end()) {
      nodes.emplace(key, r);
    } else {
      add_into(it->second, r);
    }
  }

  std::size_t nonzero_nodes() const {
    std::size_t n = 0;
    for (const auto& [key, r] : nodes) {
      for (double v : r) {
        if (v != 0.0) {
          ++n;
          break;
        }
      }
    }
    return n;
  }
};

// ---------------------------------------------------------------------------
// Propagation rules
// ---------------------------------------------------------------------------

// Epsilon rule for an affine layer z_out = W x + b. Returns the relevance of
// each input component:
//   R_in[i] = sum_j (W[j,i] x[i] + (eps sign(z_j) + b_j) / D)
//             / (z_j + eps sign(z_j)) * R_out[j],   D = len(x).
inline Vector lrp_linear(const Matrix& W, const Vector& b, const Vector& x, const Vector& z_out,
                         const Vector& R_out, double eps, bool bias_redistribution = true) {
  if (W.cols != x.size() || W.rows != z_out.size() || W.rows != R_out.size() || W.rows != b.size()) {
    throw DimensionError("lrp_linear: W is " + shape_str(W) + ", x/b/z/R lengths " +
                         std::to_string(x.size()) + "/" + std::to_string(b.size()) + "/" +
                         std::to_string(z_out.size()) + "/" + std::to_string(R_out.size()));
  }
  const double D = static_cast<double>(x.size());
  Vector R_in(x.size(), 0.0);
  for (std::size_t j = 0; j < W.rows; ++j) {
    const double stab = eps * sign_pos(z_out[j]);
    const double denom = z_out[j] + stab;
    if (denom == 0.0) {
      throw SingularityError("lrp_linear: zero denominator at output " + std::to_string(j) +
                             " with eps = 0");
    }
    const double factor = R_out[j] / denom;
    if (factor == 0.0) continue;
    const double share = bias_redistribution ? (stab + b[j]) / D : 0.0;
    const double* wj = W.row(j);
    for (std::size_t i = 0; i < x.size(); ++i) {
      R_in[i] += (wj[i] * x[i] + share) * factor;
    }
  }
  return R_in;
}

// Same rule over a two-block input [x1; x2] with z_out = W1 x1 + W2 x2 + b,
// without materializing the concatenated matrix. D = len(x1) + len(x2).
struct SplitRelevance {
  Vector first;
  Vector second;
};

inline SplitRelevance lrp_linear_split(const Matrix& W1, const Vector& x1, const Matrix& W2,
                                       const Vector& x2, const Vector& b, const Vector& z_out,
                                       const Vector& R_out, double eps,
                                       bool bias_redistribution = true) {
  if (W1.cols != x1.size() || W2.cols != x2.size() || W1.rows != W2.rows ||
      W1.rows != z_out.size() || W1.rows != R_out.size() || W1.rows != b.size()) {
    throw DimensionError("lrp_linear_split: W1 " + shape_str(W1) + ", W2 " + shape_str(W2) +
                         ", x1/x2/b/z/R lengths " + std::to_string(x1.size()) + "/" +
                         std::to_string(x2.size()) + "/" + std::to_string(b.size()) + "/" +
                         std::to_string(z_out.size()) + "/" + std::to_string(R_out.size()));
  }
  const double D = static_cast<double>(x1.size() + x2.size());
  SplitRelevance r{Vector(x1.size(), 0.0), Vector(x2.size(), 0.0)};
  for (std::size_t j = 0; j < W1.rows; ++j) {
    const double stab = eps * sign_pos(z_out[j]);
    const double denom = z_out[j] + stab;
    if (denom == 0.0) {
      throw SingularityError("lrp_linear_split: zero denominator at output " + std::to_string(j) +
                             " with eps = 0");
    }
    const double factor = R_out[j] / denom;
    if (factor == 0.0) continue;
    const double share = bias_redistribution ? (stab + b[j]) / D : 0.0;
    const double* w1j = W1.row(j);
    for (std::size_t i = 0; i < x1.size(); ++i) r.first[i] += (w1j[i] * x1[i] + share) * factor;
    const double* w2j = W2.row(j);
    for (std::size_t i = 0; i < x2.size(); ++i) r.second[i] += (w2j[i] * x2[i] + share) * factor;
  }
  return r;
}

// Gate rule for an elementwise product: the information vector receives all
// of the upper relevance, the gate vector none.
struct GateSplit {
  Vector info_relevance;
  Vector gate_relevance;
};

inline GateSplit lrp_gate_product(const Vector& gate, const Vector& info, const Vector& R_out) {
  if (gate.size() != info.size() || gate.size() != R_out.size()) {
    throw DimensionError("lrp_gate_product: lengths " + std::to_string(gate.size()) + "/" +
                         std::to_string(info.size()) + "/" + std::to_string(R_out.size()));
  }
  return {R_out, Vector(gate.size(), 0.0)};
}

// Split for a two-term componentwise sum z_out = z_a + z_b: each summand is a
// contribution in the epsilon rule with no weight and no bias, D = 2.
inline SplitRelevance lrp_sum_split(const Vector& z_a, const Vector& z_b, const Vector& z_out,
                                    const Vector& R_out, double eps, bool redistribute = true) {
  if (z_a.size() != z_b.size() || z_a.size() != z_out.size() || z_a.size() != R_out.size()) {
    throw DimensionError("lrp_sum_split: lengths " + std::to_string(z_a.size()) + "/" +
                         std::to_string(z_b.size()) + "/" + std::to_string(z_out.size()) + "/" +
                         std::to_string(R_out.size()));
  }
  SplitRelevance r{Vector(z_a.size(), 0.0), Vector(z_b.size(), 0.0)};
  for (std::size_t k = 0; k < z_out.size(); ++k) {
    const double stab = eps * sign_pos(z_out[k]);
    const double denom = z_out[k] + stab;
    if (denom == 0.0) {
      throw SingularityError("lrp_sum_split: zero denominator at component " + std::to_string(k) +
                             " with eps = 0");
    }
    const double share = redistribute ? stab / 2.0 : 0.0;
    r.first[k] = (z_a[k] + share) / denom * R_out[k];
    r.second[k] = (z_b[k] + share) / denom * R_out[k];
  }
  return r;
}

// ---------------------------------------------------------------------------
// LSTM and attention backward walks
// ---------------------------------------------------------------------------

struct LstmStepRelevance {
  Vector x;
  Vector h_prev;
  Vector c_prev;
};

// One timestep of the Arras walk: relevance on h goes through the output-gate
// product to the cell, the cell update splits over its two additive terms,
// the candidate share passes through tanh onto the candidate affine map, and
// the forget share moves one step back in time.
inline LstmStepRelevance lrp_lstm_step_backward(const LstmWeights& w, const LstmStepTape& s,
                                                const Vector& h_prev, const Vector& c_prev,
                                                const Vector& R_h, const Vector& R_c,
                                                const LrpConfig& cfg, ProductAudit* audit,
                                                const std::string& node) {
  GateSplit at_h = lrp_gate_product(s.o, s.tanh_c, R_h);
  if (audit) audit->record(node + ".o*tanh(c)", at_h.gate_relevance);

  Vector R_cell = at_h.info_relevance;
  add_into(R_cell, R_c);

  const Vector z_forget = hadamard(s.f, c_prev);
  const Vector z_input = hadamard(s.i, s.g);
  SplitRelevance cell_split =
      lrp_sum_split(z_forget, z_input, s.c, R_cell, cfg.epsilon, cfg.bias_redistribution);

  GateSplit at_forget = lrp_gate_product(s.f, c_prev, cell_split.first);
  if (audit) audit->record(node + ".f*c_prev", at_forget.gate_relevance);
  GateSplit at_input = lrp_gate_product(s.i, s.g, cell_split.second);
  if (audit) audit->record(node + ".i*g", at_input.gate_relevance);

  // g = tanh(a_g) is relevance-transparent; a_g = W_g x + U_g h_prev + b_g.
  SplitRelevance in_split =
      lrp_linear_split(w.candidate.W, s.x, w.candidate.U, h_prev, w.candidate.b, s.a_g,
                       at_input.info_relevance, cfg.epsilon, cfg.bias_redistribution);

  return {std::move(in_split.first), std::move(in_split.second), std::move(at_forget.info_relevance)};
}

inline void validate_sequence_tape(const LstmWeights& w, const LstmSequenceTape& seq,
                                   const char* who) {
  const std::size_t H = static_cast<std::size_t>(w.hidden_dim());
  const std::size_t D = static_cast<std::size_t>(w.input_dim());
  auto fail = [&](const std::string& detail) {
    throw DataError(std::string(who) + ": incomplete tape fragment (" + detail + ")");
  };
  if (seq.steps.empty()) fail("no steps");
  if (seq.h0.size() != H || seq.c0.size() != H) fail("initial state size");
  for (std::size_t t = 0; t < seq.steps.size(); ++t) {
    const LstmStepTape& s = seq.steps[t];
    if (s.x.size() != D) fail("step " + std::to_string(t) + " input size");
    for (const Vector* v : {&s.a_i, &s.a_f, &s.a_o, &s.a_g, &s.i, &s.f, &s.o, &s.g, &s.c,
                            &s.tanh_c, &s.h}) {
      if (v->size() != H) fail("step " + std::to_string(t) + " state size");
    }
  }
}

struct LstmBackwardResult {
  std::vector<Vector> x_relevance;  // per step
  Vector h0_relevance;
  Vector c0_relevance;
};

// Walks a recorded LSTM sequence in reverse. R_hidden_by_step / R_cell_by_step
// give externally injected relevance per timestep (empty means none).
inline LstmBackwardResult lrp_lstm_backward(const LstmWeights& w, const LstmSequenceTape& seq,
                                            const std::vector<Vector>& R_hidden_by_step,
                                            const std::vector<Vector>& R_cell_by_step,
                                            const LrpConfig& cfg, ProductAudit* audit = nullptr,
                                            const std::string& node_prefix = "lstm") {
  validate_sequence_tape(w, seq, "lrp_lstm_backward");
  const std::size_t T = seq.steps.size();
  const std::size_t H = static_cast<std::size_t>(w.hidden_dim());
  if (!R_hidden_by_step.empty() && R_hidden_by_step.size() != T) {
    throw DimensionError("lrp_lstm_backward: " + std::to_string(R_hidden_by_step.size()) +
                         " hidden relevances for " + std::to_string(T) + " steps");
  }
  if (!R_cell_by_step.empty() && R_cell_by_step.size() != T) {
    throw DimensionError("lrp_lstm_backward: " + std::to_string(R_cell_by_step.size()) +
                         " cell relevances for " + std::to_string(T) + " steps");
  }
  LstmBackwardResult out;
  out.x_relevance.resize(T);
  Vector R_h_carry(H, 0.0);
  Vector R_c_carry(H, 0.0);
  for (std::size_t ti = T; ti-- > 0;) {
    Vector R_h = R_h_carry;
    if (!R_hidden_by_step.empty()) add_into(R_h, R_hidden_by_step[ti]);
    Vector R_c = R_c_carry;
    if (!R_cell_by_step.empty()) add_into(R_c, R_cell_by_step[ti]);
    LstmStepRelevance back =
        lrp_lstm_step_backward(w, seq.steps[ti], seq.h_prev(ti), seq.c_prev(ti), R_h, R_c, cfg,
                               audit, node_prefix + "[" + std::to_string(ti) + "]");
    out.x_relevance[ti] = std::move(back.x);
    R_h_carry = std::move(back.h_prev);
    R_c_carry = std::move(back.c_prev);
  }
  out.h0_relevance = std::move(R_h_carry);
  out.c0_relevance = std::move(R_c_carry);
  return out;
}

// Relevance through the attention context: context = sum_j alpha_j h_j is an
// affine combination whose contributions are alpha_j h_j; within each term
// alpha_j is the gate and h_j the information vector. Disabled, the whole
// path returns zero relevance.
inline std::vector<Vector> lrp_attention_backward(const AttentionTape& att,
                                                  const std::vector<Vector>& encoder_states,
                                                  const Vector& R_context, const LrpConfig& cfg,
                                                  ProductAudit* audit = nullptr,
                                                  const std::string& node_prefix = "att") {
  if (att.alpha.empty() || att.alpha.size() != encoder_states.size()) {
    throw DataError("lrp_attention_backward: tape step lacks attention weights (" +
                    std::to_string(att.alpha.size()) + " of " +
                    std::to_string(encoder_states.size()) + ")");
  }
  const std::size_t L = encoder_states.size();
  const std::size_t C = R_context.size();
  if (att.context.size() != C || encoder_states[0].size() != C) {
    throw DimensionError("lrp_attention_backward: context length " +
                         std::to_string(att.context.size()) + " vs relevance length " +
                         std::to_string(C));
  }
  std::vector<Vector> out(L, Vector(C, 0.0));
  const double D = static_cast<double>(L);
  for (std::size_t j = 0; j < L; ++j) {
    Vector product_rel(C, 0.0);
    if (cfg.attention_path_enabled) {
      for (std::size_t d = 0; d < C; ++d) {
        const double stab = cfg.epsilon * sign_pos(att.context[d]);
        const double denom = att.context[d] + stab;
        if (denom == 0.0) {
          throw SingularityError("lrp_attention_backward: zero denominator at component " +
                                 std::to_string(d) + " with eps = 0");
        }
        const double share = cfg.bias_redistribution ? stab / D : 0.0;
        product_rel[d] = (att.alpha[j] * encoder_states[j][d] + share) / denom * R_context[d];
      }
    }
    GateSplit split = lrp_gate_product(Vector(C, att.alpha[j]), encoder_states[j], product_rel);
    if (audit) audit->record(node_prefix + ".alpha*h[" + std::to_string(j) + "]", split.gate_relevance);
    out[j] = std::move(split.info_relevance);
  }
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end propagation
// ---------------------------------------------------------------------------

struct TokenRelevance {
  Vector values;  // signed relevance per padded input position
  int output_step = 0;
  int emitted_id = -1;
};

struct PropagationResult {
  TokenRelevance token_relevance;
  double injected = 0.0;                // relevance placed on the chosen logit
  double input_sum = 0.0;               // total over input-token relevance
  double prev_token_sum = 0.0;          // decoder-side previous-token embeddings
  double initial_state_sum = 0.0;       // encoder initial h/c, both directions
  double attention_to_encoder_sum = 0.0;
  double attention_dropped_sum = 0.0;   // mass removed by the ablation switch
  double truncated_sum = 0.0;           // mass removed by steps_back truncation
  RelevancePacket packet;
  ProductAudit audit;
};

// Backward pass for one generated token: initialize at the emitted token's
// pre-softmax logit, walk projection -> decoder (unrolled through previous
// timesteps, attention at each) -> both encoder directions -> embeddings.
inline PropagationResult propagate_token(const ActivationTape& tape, int output_step,
                                         const ModelWeights& w, const LrpConfig& cfg,
                                         std::optional<double> injected_override = std::nullopt) {
  cfg.validate();
  if (output_step < 0 || output_step >= tape.decoded_steps()) {
    throw DataError("relevance_for_token: output step " + std::to_string(output_step) +
                    " out of range (decoded " + std::to_string(tape.decoded_steps()) + ")");
  }
  const std::size_t L = static_cast<std::size_t>(tape.input_len());
  const std::size_t H = static_cast<std::size_t>(w.decoder.hidden_dim());
  const std::size_t E = w.embedding.cols;
  const std::size_t C = 2 * H;
  const int k = output_step;
  const DecodeStepTape& target = tape.dec_steps[static_cast<std::size_t>(k)];

  PropagationResult res;
  res.token_relevance.output_step = k;
  res.token_relevance.emitted_id = target.emitted;
  res.injected = injected_override.value_or(target.logits[static_cast<std::size_t>(target.emitted)]);

  Vector R_logits(target.logits.size(), 0.0);
  R_logits[static_cast<std::size_t>(target.emitted)] = res.injected;
  res.packet.deposit("logits[" + std::to_string(k) + "]", R_logits);

  Vector R_h = lrp_linear(w.projection.W, w.projection.b,
                          tape.decoder.steps[static_cast<std::size_t>(k)].h, target.logits,
                          R_logits, cfg.epsilon, cfg.bias_redistribution);
  Vector R_c(H, 0.0);

  std::vector<Vector> R_enc_positions(L, Vector(C, 0.0));
  const int t_min = cfg.steps_back <= 0 ? 0 : std::max(0, k - cfg.steps_back + 1);
  for (int t = k; t >= t_min; --t) {
    const std::size_t ts = static_cast<std::size_t>(t);
    res.packet.deposit("dec[" + std::to_string(t) + "].h", R_h);
    LstmStepRelevance back = lrp_lstm_step_backward(
        w.decoder, tape.decoder.steps[ts], tape.decoder.h_prev(ts), tape.decoder.c_prev(ts), R_h,
        R_c, cfg, &res.audit, "dec[" + std::to_string(t) + "]");

    Vector R_prev_emb = slice(back.x, 0, E);
    Vector R_ctx = slice(back.x, E, back.x.size());
    res.packet.deposit("dec[" + std::to_string(t) + "].prev_emb", R_prev_emb);
    res.packet.deposit("dec[" + std::to_string(t) + "].context", R_ctx);
    res.prev_token_sum += sum(R_prev_emb);
    if (!cfg.attention_path_enabled) res.attention_dropped_sum += sum(R_ctx);

    std::vector<Vector> att_rel =
        lrp_attention_backward(tape.dec_steps[ts].attention, tape.encoder_concat, R_ctx, cfg,
                               &res.audit, "att[" + std::to_string(t) + "]");
    for (std::size_t j = 0; j < L; ++j) add_into(R_enc_positions[j], att_rel[j]);

    R_h = std::move(back.h_prev);
    R_c = std::move(back.c_prev);
  }

  for (std::size_t j = 0; j < L; ++j) {
    res.attention_to_encoder_sum += sum(R_enc_positions[j]);
    res.packet.deposit("enc[" + std::to_string(j) + "].state", R_enc_positions[j]);
  }

  // Relevance reaching the decoder's initial state belongs to the final
  // forward-encoder step; truncated unrolls drop their carry instead.
  std::vector<Vector> R_h_fwd(L, Vector(H, 0.0));
  std::vector<Vector> R_c_fwd(L, Vector(H, 0.0));
  std::vector<Vector> R_h_bwd(L, Vector(H, 0.0));
  if (t_min == 0) {
    add_into(R_h_fwd[L - 1], R_h);
    add_into(R_c_fwd[L - 1], R_c);
  } else {
    res.truncated_sum = sum(R_h) + sum(R_c);
  }
  for (std::size_t j = 0; j < L; ++j) {
    Vector fwd_part = slice(R_enc_positions[j], 0, H);
    Vector bwd_part = slice(R_enc_positions[j], H, C);
    add_into(R_h_fwd[j], fwd_part);
    add_into(R_h_bwd[L - 1 - j], bwd_part);  // backward sequence runs reversed
  }

  LstmBackwardResult fwd = lrp_lstm_backward(w.encoder_fwd, tape.encoder_fwd, R_h_fwd, R_c_fwd,
                                             cfg, &res.audit, "encF");
  LstmBackwardResult bwd = lrp_lstm_backward(w.encoder_bwd, tape.encoder_bwd, R_h_bwd, {}, cfg,
                                             &res.audit, "encB");

  // Token relevance = embedding relevance summed over dimensions, both
  // encoder directions combined per original position.
  res.token_relevance.values.assign(L, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    Vector emb_rel = fwd.x_relevance[t];
    add_into(emb_rel, bwd.x_relevance[L - 1 - t]);
    res.packet.deposit("embedding[" + std::to_string(t) + "]", emb_rel);
    res.token_relevance.values[t] = sum(emb_rel);
  }
  res.input_sum = sum(res.token_relevance.values);
  res.initial_state_sum = sum(fwd.h0_relevance) + sum(fwd.c0_relevance) +
                          sum(bwd.h0_relevance) + sum(bwd.c0_relevance);
  res.packet.deposit("encF.h0", fwd.h0_relevance);
  res.packet.deposit("encF.c0", fwd.c0_relevance);
  res.packet.deposit("encB.h0", bwd.h0_relevance);
  res.packet.deposit("encB.c0", bwd.c0_relevance);
  return res;
}

inline TokenRelevance relevance_for_token(const ActivationTape& tape, int output_step,
                                          const ModelWeights& w, const LrpConfig& cfg) {
  return propagate_token(tape, output_step, w, cfg).token_relevance;
}

// One signed relevance map per generated token.
struct SaliencyStack {
  std::vector<TokenRelevance> maps;
  std::vector<int> input_ids;
  std::vector<int> summary_ids;
};

inline SaliencyStack relevance_stack(const ActivationTape& tape, const ModelWeights& w,
                                     const ModelConfig& model_cfg, const LrpConfig& cfg) {
  if (tape.decoded_steps() == 0) throw DataError("relevance_stack: empty tape");
  SaliencyStack stack;
  stack.input_ids = tape.input_ids;
  stack.summary_ids = tape.summary_ids;
  const int n = std::min(model_cfg.maps_per_text, tape.decoded_steps());
  stack.maps.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    stack.maps.push_back(relevance_for_token(tape, k, w, cfg));
  }
  return stack;
}

}  // namespace seqlrp
