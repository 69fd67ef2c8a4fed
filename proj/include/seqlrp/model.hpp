#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqlrp/rng.hpp"
#include "seqlrp/tensor.hpp"
#include "seqlrp/vocab.hpp"

namespace seqlrp {

struct ModelConfig {
  int vocab_size = 200;
  int embed_dim = 16;
  int hidden_dim = 32;
  int max_input_len = 64;
  int max_output_len = 24;
  int maps_per_text = 12;

  int context_dim() const { return 2 * hidden_dim; }
  int decoder_input_dim() const { return embed_dim + context_dim(); }

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0) throw DataError(std::string("ModelConfig: ") + name + " must be positive");
    };
    positive(vocab_size, "vocab_size");
    positive(embed_dim, "embed_dim");
    positive(hidden_dim, "hidden_dim");
    positive(max_input_len, "max_input_len");
    positive(max_output_len, "max_output_len");
    positive(maps_per_text, "maps_per_text");
    if (maps_per_text > max_output_len) {
      throw DataError("ModelConfig: maps_per_text exceeds max_output_len");
    }
  }
};

// Per-gate weights: input-to-hidden W, hidden-to-hidden U, bias b.
struct LstmGateWeights {
  Matrix W;
  Matrix U;
  Vector b;
};

struct LstmWeights {
  LstmGateWeights input_gate;   // i
  LstmGateWeights forget_gate;  // f
  LstmGateWeights output_gate;  // o
  LstmGateWeights candidate;    // g

  int input_dim() const { return static_cast<int>(input_gate.W.cols); }
  int hidden_dim() const { return static_cast<int>(input_gate.W.rows); }
};

struct AttentionWeights {
  Matrix W_query;  // applied to the previous decoder state
  Matrix U_keys;   // applied to each encoder state
  Vector v;        // energy vector
};

struct ProjectionWeights {
  Matrix W;
  Vector b;
};

struct ModelWeights {
  Matrix embedding;  // vocab_size x embed_dim
  LstmWeights encoder_fwd;
  LstmWeights encoder_bwd;
  LstmWeights decoder;
  AttentionWeights attention;
  ProjectionWeights projection;
};

inline LstmWeights make_lstm_weights(int input_dim, int hidden_dim) {
  LstmWeights w;
  for (LstmGateWeights* g : {&w.input_gate, &w.forget_gate, &w.output_gate, &w.candidate}) {
    g->W = Matrix(static_cast<std::size_t>(hidden_dim), static_cast<std::size_t>(input_dim));
    g->U = Matrix(static_cast<std::size_t>(hidden_dim), static_cast<std::size_t>(hidden_dim));
    g->b = Vector(static_cast<std::size_t>(hidden_dim), 0.0);
  }
  return w;
}

inline ModelWeights zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  ModelWeights w;
  w.embedding = Matrix(static_cast<std::size_t>(cfg.vocab_size), static_cast<std::size_t>(cfg.embed_dim));
  w.encoder_fwd = make_lstm_weights(cfg.embed_dim, cfg.hidden_dim);
  w.encoder_bwd = make_lstm_weights(cfg.embed_dim, cfg.hidden_dim);
  w.decoder = make_lstm_weights(cfg.decoder_input_dim(), cfg.hidden_dim);
  w.attention.W_query = Matrix(static_cast<std::size_t>(cfg.hidden_dim), static_cast<std::size_t>(cfg.hidden_dim));
  w.attention.U_keys = Matrix(static_cast<std::size_t>(cfg.hidden_dim), static_cast<std::size_t>(cfg.context_dim()));
  w.attention.v = Vector(static_cast<std::size_t>(cfg.hidden_dim), 0.0);
  w.projection.W = Matrix(static_cast<std::size_t>(cfg.vocab_size), static_cast<std::size_t>(cfg.hidden_dim));
  w.projection.b = Vector(static_cast<std::size_t>(cfg.vocab_size), 0.0);
  return w;
}

// Named views over every trainable parameter, in a fixed order. Serialization,
// the SGD update and the finite-difference check all walk this list.
struct NamedParam {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  double* data;
  std::size_t count() const { return rows * cols; }
};

inline std::vector<NamedParam> named_params(ModelWeights& w) {
  std::vector<NamedParam> out;
  auto add_matrix = [&](const std::string& name, Matrix& m) {
    out.push_back({name, m.rows, m.cols, m.data.data()});
  };
  auto add_vector = [&](const std::string& name, Vector& v) {
    out.push_back({name, v.size(), 1, v.data()});
  };
  auto add_lstm = [&](const std::string& prefix, LstmWeights& l) {
    struct GateRef { const char* tag; LstmGateWeights* g; };
    for (GateRef ref : {GateRef{"i", &l.input_gate}, GateRef{"f", &l.forget_gate},
                        GateRef{"o", &l.output_gate}, GateRef{"g", &l.candidate}}) {
      add_matrix(prefix + ".W_" + ref.tag, ref.g->W);
      add_matrix(prefix + ".U_" + ref.tag, ref.g->U);
      add_vector(prefix + ".b_" + ref.tag, ref.g->b);
    }
  };
  add_matrix("embedding", w.embedding);
  add_lstm("encoder_fwd", w.encoder_fwd);
  add_lstm("encoder_bwd", w.encoder_bwd);
  add_lstm("decoder", w.decoder);
  add_matrix("attention.W_query", w.attention.W_query);
  add_matrix("attention.U_keys", w.attention.U_keys);
  add_vector("attention.v", w.attention.v);
  add_matrix("projection.W", w.projection.W);
  add_vector("projection.b", w.projection.b);
  return out;
}

inline ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t seed, double scale = 0.1) {
  ModelWeights w = zero_weights(cfg);
  Rng rng(seed);
  for (auto& p : named_params(w)) {
    for (std::size_t k = 0; k < p.count(); ++k) p.data[k] = rng.uniform(-scale, scale);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Activation tape
// ---------------------------------------------------------------------------

// One LSTM timestep, recorded completely: inputs, affine pre-activations,
// gate values, candidate, cell and hidden. Replaying any recorded operation
// from the recorded inputs must reproduce the recorded output.
struct LstmStepTape {
  Vector x;
  Vector a_i, a_f, a_o, a_g;  // gate / candidate pre-activations
  Vector i, f, o, g;
  Vector c;
  Vector tanh_c;
  Vector h;
};

struct LstmSequenceTape {
  Vector h0, c0;
  std::vector<LstmStepTape> steps;

  const Vector& h_prev(std::size_t t) const { return t == 0 ? h0 : steps[t - 1].h; }
  const Vector& c_prev(std::size_t t) const { return t == 0 ? c0 : steps[t - 1].c; }
};

struct AttentionTape {
  std::vector<Vector> u;  // tanh(W_query s_prev + U_keys h_j), one per encoder position
  Vector energies;        // e_j = v . u_j
  Vector alpha;           // softmax(energies)
  Vector context;         // sum_j alpha_j h_j
};

struct DecodeStepTape {
  int prev_token = -1;  // token embedded as this step's input (START for step 0)
  AttentionTape attention;
  Vector logits;
  int emitted = -1;
};

// Complete transcript of one forward decode. Every elementwise product and
// affine map is either stored or exactly reconstructible from stored inputs.
struct ActivationTape {
  std::vector<int> input_ids;  // after truncation / padding
  int source_len = 0;          // token count before truncation / padding
  LstmSequenceTape encoder_fwd;         // time order = input order
  LstmSequenceTape encoder_bwd;         // time order = reversed input
  std::vector<Vector> encoder_concat;   // [fwd_h[t]; bwd_h[t]] per input position
  LstmSequenceTape decoder;
  std::vector<DecodeStepTape> dec_steps;
  std::vector<int> summary_ids;  // emitted tokens, stop marker excluded

  int input_len() const { return static_cast<int>(input_ids.size()); }
  int decoded_steps() const { return static_cast<int>(dec_steps.size()); }
};

// ---------------------------------------------------------------------------
// Forward operations
// ---------------------------------------------------------------------------

inline Vector embedding_row(const ModelWeights& w, int id, int position) {
  if (id < 0 || static_cast<std::size_t>(id) >= w.embedding.rows) {
    throw DataError("embed_sequence: id " + std::to_string(id) + " at position " +
                    std::to_string(position) + " is outside the vocabulary of size " +
                    std::to_string(w.embedding.rows));
  }
  const double* row = w.embedding.row(static_cast<std::size_t>(id));
  return Vector(row, row + w.embedding.cols);
}

inline std::vector<Vector> embed_sequence(const std::vector<int>& ids, const ModelWeights& w) {
  std::vector<Vector> out;
  out.reserve(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    out.push_back(embedding_row(w, ids[t], static_cast<int>(t)));
  }
  return out;
}

inline LstmStepTape lstm_step(const LstmWeights& w, const Vector& x, const Vector& h_prev,
                              const Vector& c_prev) {
  if (h_prev.size() != static_cast<std::size_t>(w.hidden_dim()) || h_prev.size() != c_prev.size()) {
    throw DimensionError("lstm_step: state lengths " + std::to_string(h_prev.size()) + "/" +
                         std::to_string(c_prev.size()) + " vs hidden_dim " +
                         std::to_string(w.hidden_dim()));
  }
  LstmStepTape s;
  s.x = x;
  auto pre = [&](const LstmGateWeights& g) {
    Vector a = affine(g.W, x, g.b);
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double* uj = g.U.row(j);
      double acc = a[j];
      for (std::size_t k = 0; k < g.U.cols; ++k) acc += uj[k] * h_prev[k];
      a[j] = acc;
    }
    return a;
  };
  s.a_i = pre(w.input_gate);
  s.a_f = pre(w.forget_gate);
  s.a_o = pre(w.output_gate);
  s.a_g = pre(w.candidate);
  s.i = apply_nonlinearity(Nonlinearity::Sigmoid, s.a_i);
  s.f = apply_nonlinearity(Nonlinearity::Sigmoid, s.a_f);
  s.o = apply_nonlinearity(Nonlinearity::Sigmoid, s.a_o);
  s.g = apply_nonlinearity(Nonlinearity::Tanh, s.a_g);
  const std::size_t H = s.i.size();
  s.c.resize(H);
  for (std::size_t k = 0; k < H; ++k) s.c[k] = s.f[k] * c_prev[k] + s.i[k] * s.g[k];
  s.tanh_c = apply_nonlinearity(Nonlinearity::Tanh, s.c);
  s.h.resize(H);
  for (std::size_t k = 0; k < H; ++k) s.h[k] = s.o[k] * s.tanh_c[k];
  return s;
}

struct EncodeResult {
  LstmSequenceTape fwd;
  LstmSequenceTape bwd;
  std::vector<Vector> concat;  // [fwd_h[t]; bwd_h[t]] per position
};

inline EncodeResult encode(const std::vector<int>& ids, const ModelWeights& w) {
  if (ids.empty()) throw DataError("encode: empty input");
  const std::size_t L = ids.size();
  const std::size_t H = static_cast<std::size_t>(w.encoder_fwd.hidden_dim());
  std::vector<Vector> emb = embed_sequence(ids, w);

  EncodeResult r;
  r.fwd.h0 = Vector(H, 0.0);
  r.fwd.c0 = Vector(H, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    r.fwd.steps.push_back(lstm_step(w.encoder_fwd, emb[t], r.fwd.h_prev(t), r.fwd.c_prev(t)));
  }
  r.bwd.h0 = Vector(H, 0.0);
  r.bwd.c0 = Vector(H, 0.0);
  for (std::size_t s = 0; s < L; ++s) {
    r.bwd.steps.push_back(lstm_step(w.encoder_bwd, emb[L - 1 - s], r.bwd.h_prev(s), r.bwd.c_prev(s)));
  }
  r.concat.reserve(L);
  for (std::size_t t = 0; t < L; ++t) {
    r.concat.push_back(concat(r.fwd.steps[t].h, r.bwd.steps[L - 1 - t].h));
  }
  return r;
}

// Additive attention: e_j = v . tanh(W_query s_prev + U_keys h_j).
inline AttentionTape attend(const AttentionWeights& w, const Vector& s_prev,
                            const std::vector<Vector>& encoder_states) {
  if (encoder_states.empty()) throw DimensionError("attend: no encoder states");
  AttentionTape a;
  const Vector query = affine(w.W_query, s_prev, Vector(w.W_query.rows, 0.0));
  a.u.reserve(encoder_states.size());
  a.energies.resize(encoder_states.size());
  for (std::size_t j = 0; j < encoder_states.size(); ++j) {
    Vector pre = affine(w.U_keys, encoder_states[j], Vector(w.U_keys.rows, 0.0));
    add_into(pre, query);
    a.u.push_back(apply_nonlinearity(Nonlinearity::Tanh, pre));
    a.energies[j] = dot(w.v, a.u[j]);
  }
  a.alpha = softmax(a.energies);
  a.context = Vector(encoder_states[0].size(), 0.0);
  for (std::size_t j = 0; j < encoder_states.size(); ++j) {
    axpy_into(a.context, a.alpha[j], encoder_states[j]);
  }
  return a;
}

// Truncate to max_input_len; pad short inputs with the shared PAD/UNKNOWN id.
inline std::vector<int> prepare_input(const std::vector<int>& ids, const ModelConfig& cfg) {
  std::vector<int> out(ids.begin(),
                       ids.begin() + std::min<std::size_t>(ids.size(), static_cast<std::size_t>(cfg.max_input_len)));
  out.resize(static_cast<std::size_t>(cfg.max_input_len), Vocab::kPadUnk);
  return out;
}

// Ties break toward the lowest token id.
inline int argmax_lowest(const Vector& v) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(v.size()); ++k) {
    if (v[static_cast<std::size_t>(k)] > v[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

namespace detail {

// Shared decode driver. `forced` holds the gold token sequence (stop marker
// excluded) for teacher forcing; without it decoding is greedy and stops at
// the stop marker or max_output_len.
inline ActivationTape run_decode(const std::vector<int>& ids, const ModelWeights& w,
                                 const ModelConfig& cfg,
                                 const std::optional<std::vector<int>>& forced) {
  cfg.validate();
  ActivationTape tape;
  tape.source_len = static_cast<int>(ids.size());
  tape.input_ids = prepare_input(ids, cfg);

  EncodeResult enc = encode(tape.input_ids, w);
  tape.encoder_fwd = std::move(enc.fwd);
  tape.encoder_bwd = std::move(enc.bwd);
  tape.encoder_concat = std::move(enc.concat);

  const std::size_t L = tape.input_ids.size();
  // Decoder starts from the final forward-encoder state; no bridge layer.
  tape.decoder.h0 = tape.encoder_fwd.steps[L - 1].h;
  tape.decoder.c0 = tape.encoder_fwd.steps[L - 1].c;

  const int max_steps = forced ? static_cast<int>(forced->size()) + 1 : cfg.max_output_len;
  int prev_token = Vocab::kStart;
  for (int t = 0; t < max_steps; ++t) {
    DecodeStepTape step;
    step.prev_token = prev_token;
    const Vector& s_prev = tape.decoder.h_prev(static_cast<std::size_t>(t));
    step.attention = attend(w.attention, s_prev, tape.encoder_concat);
    Vector x = concat(embedding_row(w, prev_token, t), step.attention.context);
    tape.decoder.steps.push_back(lstm_step(w.decoder, x, s_prev,
                                           tape.decoder.c_prev(static_cast<std::size_t>(t))));
    step.logits = affine(w.projection.W, tape.decoder.steps.back().h, w.projection.b);
    if (forced) {
      step.emitted = t < static_cast<int>(forced->size()) ? (*forced)[static_cast<std::size_t>(t)]
                                                          : Vocab::kStop;
      if (step.emitted < 0 || step.emitted >= cfg.vocab_size) {
        throw DataError("decode: forced token " + std::to_string(step.emitted) + " at step " +
                        std::to_string(t) + " is outside the vocabulary");
      }
    } else {
      step.emitted = argmax_lowest(step.logits);
    }
    tape.dec_steps.push_back(std::move(step));
    if (tape.dec_steps.back().emitted == Vocab::kStop) break;
    tape.summary_ids.push_back(tape.dec_steps.back().emitted);
    prev_token = tape.dec_steps.back().emitted;
  }
  return tape;
}

}  // namespace detail

struct DecodeResult {
  std::vector<int> summary_ids;
  ActivationTape tape;
};

inline DecodeResult decode_greedy(const std::vector<int>& ids, const ModelWeights& w,
                                  const ModelConfig& cfg) {
  DecodeResult r;
  r.tape = detail::run_decode(ids, w, cfg, std::nullopt);
  r.summary_ids = r.tape.summary_ids;
  return r;
}

// Teacher-forced transcript over gold targets (stop marker appended as the
// final supervised step). Used by the trainer; shares the greedy wiring.
inline ActivationTape decode_forced(const std::vector<int>& ids, const std::vector<int>& targets,
                                    const ModelWeights& w, const ModelConfig& cfg) {
  return detail::run_decode(ids, w, cfg, targets);
}

}  // namespace seqlrp
