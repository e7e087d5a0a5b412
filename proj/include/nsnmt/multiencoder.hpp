#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nsnmt/autodiff.hpp"
#include "nsnmt/corpus.hpp"
#include "nsnmt/decode.hpp"
#include "nsnmt/errors.hpp"
#include "nsnmt/nn.hpp"
#include "nsnmt/seq2seq.hpp"

// Multi-encoder translation over K source languages. Each language gets its
// own bidirectional encoder and its own attention parameters. The decoder
// starts from h = tanh(W_init [h_1; ...; h_K]) and c = c_1 + ... + c_K, and
// every step fuses all K attention contexts:
// h~_t = tanh(W_out [h_t; c_t^1; ...; c_t^K]). Missing sources arrive as the
// single-token <NULL> sentence, so every encoder always has at least one
// annotation.

namespace nsnmt {

// K surface frames for one row of source cells; a missing cell becomes the
// single-token <NULL> sentence. Framing is applied uniformly.
inline std::vector<Sentence> prepare_inputs(const std::vector<OptSentence>& cells) {
  bool any = false;
  for (const OptSentence& c : cells) any = any || c.has_value();
  if (!any) throw RejectedRowError("prepare_inputs: every source cell is missing");
  const auto& res = Vocabulary::reserved();
  std::vector<Sentence> out;
  out.reserve(cells.size());
  for (const OptSentence& c : cells) {
    Sentence framed;
    framed.push_back(res[Vocabulary::kBos]);
    if (c.has_value()) {
      framed.insert(framed.end(), c->begin(), c->end());
    } else {
      framed.push_back(res[Vocabulary::kNull]);
    }
    framed.push_back(res[Vocabulary::kEos]);
    out.push_back(std::move(framed));
  }
  return out;
}

// Framed surface tokens -> ids. Structural tokens map to their reserved ids;
// everything else goes through the vocabulary (unknowns to <UNK>).
inline std::vector<int> encode_prepared(const Vocabulary& vocab, const Sentence& framed) {
  const auto& res = Vocabulary::reserved();
  std::vector<int> out;
  out.reserve(framed.size());
  for (const std::string& tok : framed) {
    if (tok == res[Vocabulary::kBos]) {
      out.push_back(Vocabulary::kBos);
    } else if (tok == res[Vocabulary::kEos]) {
      out.push_back(Vocabulary::kEos);
    } else if (tok == res[Vocabulary::kNull]) {
      out.push_back(Vocabulary::kNull);
    } else {
      out.push_back(vocab.encode(tok));
    }
  }
  return out;
}

struct MultiEncoderModel {
  Hyper hyper;
  std::vector<std::size_t> src_vocab_sizes;  // one per encoder
  std::size_t tgt_vocab_size = 0;

  std::vector<EncoderBlock> encoders;
  std::vector<Attention> atts;  // one attention parameter set per encoder
  TensorPtr w_init;             // H x K*H over concat of encoder final h's
  TensorPtr tgt_embed;          // V_tgt x E
  LstmCell dec;                 // input E + H, hidden H
  TensorPtr w_out;              // H x (H + K*2H) over concat(h_t, contexts)
  TensorPtr w_vocab;            // V_tgt x H

  std::size_t num_encoders() const { return encoders.size(); }

  void init(const Hyper& hy, const std::vector<std::size_t>& src_vocabs, std::size_t tgt_vocab, Rng& rng,
            double init_scale = kInitScale) {
    if (src_vocabs.empty()) throw ContractError("multi-encoder model needs K >= 1 encoders");
    hyper = hy;
    src_vocab_sizes = src_vocabs;
    tgt_vocab_size = tgt_vocab;
    const std::size_t k = src_vocabs.size();
    encoders.resize(k);
    atts.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      encoders[i].init(src_vocabs[i], hy.embed_dim, hy.hidden_dim, rng, init_scale);
      atts[i].init(hy.hidden_dim, rng, init_scale);
    }
    w_init = make_param(Shape{hy.hidden_dim, k * hy.hidden_dim});
    init_uniform(*w_init, rng, init_scale);
    tgt_embed = make_param(Shape{tgt_vocab, hy.embed_dim});
    init_uniform(*tgt_embed, rng, init_scale);
    dec.init(hy.embed_dim + hy.hidden_dim, hy.hidden_dim, rng, init_scale);
    w_out = make_param(Shape{hy.hidden_dim, hy.hidden_dim + k * 2 * hy.hidden_dim});
    init_uniform(*w_out, rng, init_scale);
    w_vocab = make_param(Shape{tgt_vocab, hy.hidden_dim});
    init_uniform(*w_vocab, rng, init_scale);
  }

  std::vector<NamedParam> params() const {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < encoders.size(); ++i) {
      encoders[i].collect("encoder" + std::to_string(i), out);
      atts[i].collect("att" + std::to_string(i), out);
    }
    out.push_back({"w_init", w_init});
    out.push_back({"tgt_embed", tgt_embed});
    dec.collect("dec", out);
    out.push_back({"w_out", w_out});
    out.push_back({"w_vocab", w_vocab});
    return out;
  }

  std::vector<EncoderOut> encode_all(Tape& tape, const std::vector<std::vector<int>>& src_seqs) const {
    if (src_seqs.size() != encoders.size()) {
      throw DimensionError("encode_all: got " + std::to_string(src_seqs.size()) + " sources for " +
                           std::to_string(encoders.size()) + " encoders");
    }
    std::vector<EncoderOut> out;
    out.reserve(encoders.size());
    for (std::size_t i = 0; i < encoders.size(); ++i) out.push_back(encoders[i].encode(tape, src_seqs[i]));
    return out;
  }

  // h = tanh(W_init [h_1; ...; h_K]); c = c_1 + ... + c_K (summed left to
  // right, so the result is bit-reproducible); the attention feed starts at 0.
  DecState initial_state(Tape& tape, const std::vector<EncoderOut>& encs) const {
    if (encs.size() != encoders.size()) {
      throw DimensionError("initial_state: expected " + std::to_string(encoders.size()) + " encoder outputs");
    }
    std::vector<Var> hs;
    hs.reserve(encs.size());
    for (const EncoderOut& e : encs) hs.push_back(e.final_h);
    Var h = nsnmt::tanh(matmul(tape.leaf(w_init), encs.size() == 1 ? hs[0] : concat(hs)));
    Var c = encs[0].final_c;
    for (std::size_t i = 1; i < encs.size(); ++i) c = add(c, encs[i].final_c);
    return DecState{h, c, zeros_leaf(tape, {hyper.hidden_dim})};
  }

  // h~_t = tanh(W_out [h_t; c_t^1; ...; c_t^K])
  Var combine(Tape& tape, const Var& h_t, const std::vector<Var>& contexts) const {
    std::vector<Var> parts;
    parts.reserve(contexts.size() + 1);
    parts.push_back(h_t);
    for (const Var& c : contexts) parts.push_back(c);
    return nsnmt::tanh(matmul(tape.leaf(w_out), concat(parts)));
  }

  StepResult decoder_step(Tape& tape, const std::vector<EncoderOut>& encs, const DecState& state,
                          int y_prev) const {
    if (y_prev < 0 || static_cast<std::size_t>(y_prev) >= tgt_vocab_size) {
      throw IndexError("decoder_step: token id " + std::to_string(y_prev) + " out of vocabulary of " +
                       std::to_string(tgt_vocab_size));
    }
    Var emb = row(tape.leaf(tgt_embed), static_cast<std::size_t>(y_prev));
    Var dec_input = concat({emb, state.h_tilde});
    auto [h, c] = dec.step(tape, dec_input, state.h, state.c);
    std::vector<Var> contexts;
    contexts.reserve(encs.size());
    Var weights_first;
    for (std::size_t i = 0; i < encs.size(); ++i) {
      auto [context, weights] = atts[i].apply(tape, encs[i].annotations, h);
      contexts.push_back(context);
      if (i == 0) weights_first = weights;
    }
    Var h_tilde = combine(tape, h, contexts);
    Var dist = softmax(matmul(tape.leaf(w_vocab), h_tilde));
    return StepResult{dist, DecState{h, c, h_tilde}, dec_input, weights_first};
  }
};

// Teacher-forced loss over prepared (id-framed) source tuples.
inline SeqLoss multi_forward_loss(const MultiEncoderModel& model, Tape& tape,
                                  const std::vector<std::vector<int>>& src_seqs,
                                  const std::vector<int>& tgt_ids) {
  require_framed(tgt_ids, "multi_forward_loss");
  std::vector<EncoderOut> encs = model.encode_all(tape, src_seqs);
  DecState state = model.initial_state(tape, encs);
  Var loss;
  for (std::size_t t = 1; t < tgt_ids.size(); ++t) {
    StepResult r = model.decoder_step(tape, encs, state, tgt_ids[t - 1]);
    Var nll = cross_entropy(r.dist, static_cast<std::size_t>(tgt_ids[t]));
    loss = t == 1 ? nll : add(loss, nll);
    state = r.state;
  }
  return SeqLoss{loss, tgt_ids.size() - 1};
}

class MultiEncSession {
 public:
  using State = DecSnapshot;

  MultiEncSession(const MultiEncoderModel& model, const std::vector<std::vector<int>>& src_seqs)
      : model_(model) {
    Tape tape(false);
    std::vector<EncoderOut> encs = model.encode_all(tape, src_seqs);
    DecState init = model.initial_state(tape, encs);
    for (const EncoderOut& e : encs) annotations_.push_back(e.annotations.t());
    init_h_ = init.h.t();
    init_c_ = init.c.t();
  }

  std::size_t vocab_size() const { return model_.tgt_vocab_size; }

  State initial() const { return State{init_h_, init_c_, make_tensor(Shape{model_.hyper.hidden_dim})}; }

  std::pair<std::vector<double>, State> step(const State& s, int y_prev) const {
    Tape tape(false);
    std::vector<EncoderOut> encs(annotations_.size());
    for (std::size_t i = 0; i < annotations_.size(); ++i) {
      encs[i].annotations = tape.leaf(annotations_[i]);
      encs[i].length = annotations_[i]->shape[0];
    }
    DecState st{tape.leaf(s.h), tape.leaf(s.c), tape.leaf(s.h_tilde)};
    StepResult r = model_.decoder_step(tape, encs, st, y_prev);
    return {r.dist.v().data, State{r.state.h.t(), r.state.c.t(), r.state.h_tilde.t()}};
  }

 private:
  const MultiEncoderModel& model_;
  std::vector<TensorPtr> annotations_;
  TensorPtr init_h_;
  TensorPtr init_c_;
};

inline std::vector<int> multi_translate(const MultiEncoderModel& model,
                                        const std::vector<std::vector<int>>& src_seqs, std::size_t width,
                                        std::size_t max_len, std::size_t min_len = 0) {
  MultiEncSession session(model, src_seqs);
  if (width == 1) return greedy_decode(session, max_len, min_len);
  return beam_decode(session, width, max_len, min_len);
}

}  // namespace nsnmt
