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

// One-to-one attentional encoder-decoder: bidirectional encoder, global
// attention with input feeding (the previous attentional state is
// concatenated to the decoder input), single decoder layer.

namespace nsnmt {

struct Hyper {
  std::size_t hidden_dim = 512;
  std::size_t embed_dim = 512;
  std::size_t vocab_cap = 30000;
  static constexpr std::size_t kLayers = 1;
};

constexpr double kInitScale = 0.08;  // uniform(-s, s) parameter initialization

struct StepResult {
  Var dist;       // probability vector over the target vocabulary
  DecState state;
  Var dec_input;  // concat(embed(y_prev), fed attentional state)
  Var att_weights;
};

struct Seq2SeqModel {
  Hyper hyper;
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;

  EncoderBlock encoder;
  Attention att;
  TensorPtr tgt_embed;  // V_tgt x E
  LstmCell dec;         // input E + H (input feeding), hidden H
  TensorPtr w_comb;     // H x 3H over concat(h_t, context)
  TensorPtr w_vocab;    // V_tgt x H

  void init(const Hyper& hy, std::size_t src_vocab, std::size_t tgt_vocab, Rng& rng,
            double init_scale = kInitScale) {
    hyper = hy;
    src_vocab_size = src_vocab;
    tgt_vocab_size = tgt_vocab;
    encoder.init(src_vocab, hy.embed_dim, hy.hidden_dim, rng, init_scale);
    att.init(hy.hidden_dim, rng, init_scale);
    tgt_embed = make_param(Shape{tgt_vocab, hy.embed_dim});
    init_uniform(*tgt_embed, rng, init_scale);
    dec.init(hy.embed_dim + hy.hidden_dim, hy.hidden_dim, rng, init_scale);
    w_comb = make_param(Shape{hy.hidden_dim, 3 * hy.hidden_dim});
    init_uniform(*w_comb, rng, init_scale);
    w_vocab = make_param(Shape{tgt_vocab, hy.hidden_dim});
    init_uniform(*w_vocab, rng, init_scale);
  }

  std::vector<NamedParam> params() const {
    std::vector<NamedParam> out;
    encoder.collect("encoder", out);
    att.collect("att", out);
    out.push_back({"tgt_embed", tgt_embed});
    dec.collect("dec", out);
    out.push_back({"w_comb", w_comb});
    out.push_back({"w_vocab", w_vocab});
    return out;
  }

  EncoderOut encode(Tape& tape, const std::vector<int>& src_ids) const {
    return encoder.encode(tape, src_ids);
  }

  DecState initial_state(Tape& tape, const EncoderOut& enc) const {
    return DecState{enc.final_h, enc.final_c, zeros_leaf(tape, {hyper.hidden_dim})};
  }

  StepResult decoder_step(Tape& tape, const EncoderOut& enc, const DecState& state, int y_prev) const {
    if (y_prev < 0 || static_cast<std::size_t>(y_prev) >= tgt_vocab_size) {
      throw IndexError("decoder_step: token id " + std::to_string(y_prev) + " out of vocabulary of " +
                       std::to_string(tgt_vocab_size));
    }
    Var emb = row(tape.leaf(tgt_embed), static_cast<std::size_t>(y_prev));
    Var dec_input = concat({emb, state.h_tilde});
    auto [h, c] = dec.step(tape, dec_input, state.h, state.c);
    auto [context, weights] = att.apply(tape, enc.annotations, h);
    Var h_tilde = nsnmt::tanh(matmul(tape.leaf(w_comb), concat({h, context})));
    Var dist = softmax(matmul(tape.leaf(w_vocab), h_tilde));
    return StepResult{dist, DecState{h, c, h_tilde}, dec_input, weights};
  }
};

inline void require_framed(const std::vector<int>& tgt_ids, const char* op) {
  if (tgt_ids.size() < 2 || tgt_ids.front() != Vocabulary::kBos || tgt_ids.back() != Vocabulary::kEos) {
    throw ContractError(std::string(op) + ": target must be <BOS> ... <EOS> framed and non-empty");
  }
}

struct SeqLoss {
  Var loss;                 // summed token negative log-likelihood
  std::size_t tokens = 0;   // number of predicted positions
};

// Teacher-forced loss over every target position after <BOS>.
inline SeqLoss sequence_loss(const Seq2SeqModel& model, Tape& tape, const std::vector<int>& src_ids,
                             const std::vector<int>& tgt_ids) {
  require_framed(tgt_ids, "sequence_loss");
  EncoderOut enc = model.encode(tape, src_ids);
  DecState state = model.initial_state(tape, enc);
  Var loss;
  for (std::size_t t = 1; t < tgt_ids.size(); ++t) {
    StepResult r = model.decoder_step(tape, enc, state, tgt_ids[t - 1]);
    Var nll = cross_entropy(r.dist, static_cast<std::size_t>(tgt_ids[t]));
    loss = t == 1 ? nll : add(loss, nll);
    state = r.state;
  }
  return SeqLoss{loss, tgt_ids.size() - 1};
}

// One encoded source sentence, ready for repeated decoder stepping. Each step
// runs on a throwaway forward-only tape; state crosses steps as raw tensors.
class Seq2SeqSession {
 public:
  using State = DecSnapshot;

  Seq2SeqSession(const Seq2SeqModel& model, const std::vector<int>& src_ids) : model_(model) {
    Tape tape(false);
    EncoderOut enc = model.encode(tape, src_ids);
    annotations_ = enc.annotations.t();
    final_h_ = enc.final_h.t();
    final_c_ = enc.final_c.t();
  }

  std::size_t vocab_size() const { return model_.tgt_vocab_size; }

  State initial() const {
    return State{final_h_, final_c_, make_tensor(Shape{model_.hyper.hidden_dim})};
  }

  std::pair<std::vector<double>, State> step(const State& s, int y_prev) const {
    Tape tape(false);
    EncoderOut enc;
    enc.annotations = tape.leaf(annotations_);
    enc.length = annotations_->shape[0];
    DecState st{tape.leaf(s.h), tape.leaf(s.c), tape.leaf(s.h_tilde)};
    StepResult r = model_.decoder_step(tape, enc, st, y_prev);
    return {r.dist.v().data, State{r.state.h.t(), r.state.c.t(), r.state.h_tilde.t()}};
  }

 private:
  const Seq2SeqModel& model_;
  TensorPtr annotations_;
  TensorPtr final_h_;
  TensorPtr final_c_;
};

inline std::vector<int> translate(const Seq2SeqModel& model, const std::vector<int>& src_ids,
                                  std::size_t width, std::size_t max_len, std::size_t min_len = 0) {
  Seq2SeqSession session(model, src_ids);
  if (width == 1) return greedy_decode(session, max_len, min_len);
  return beam_decode(session, width, max_len, min_len);
}

}  // namespace nsnmt
