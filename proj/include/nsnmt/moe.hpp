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

// Mixture of translation experts: m independently trained one-to-one models
// over a shared target vocabulary, combined per step by a gating network,
// p_t = sum_j g_t^j p_t^j with
// g_t = softmax(W_gate tanh(W_hid [f_t^1; ...; f_t^m])).
// f_t^j is each expert's decoder input (embedding of y_prev concatenated
// with that expert's attention feed) by default; a toggle narrows it to the
// embedding alone. Experts stay frozen while the gate trains.

namespace nsnmt {

enum class GateInput {
  kEmbedding,     // f_t^j = embed(y_prev) from expert j
  kDecoderInput,  // f_t^j = expert j's full decoder input (default)
};

struct MoeHyper {
  std::size_t gate_hidden = 256;
  GateInput gate_input = GateInput::kDecoderInput;
};

struct GatingNetwork {
  TensorPtr w_hid;   // G x m*f_width
  TensorPtr w_gate;  // m x G

  void init(std::size_t num_experts, std::size_t f_width, std::size_t gate_hidden, Rng& rng,
            double init_scale = kInitScale) {
    w_hid = make_param(Shape{gate_hidden, num_experts * f_width});
    init_uniform(*w_hid, rng, init_scale);
    w_gate = make_param(Shape{num_experts, gate_hidden});
    init_uniform(*w_gate, rng, init_scale);
  }

  std::vector<NamedParam> params() const { return {{"gating.w_hid", w_hid}, {"gating.w_gate", w_gate}}; }

  // g_t = softmax(W_gate tanh(W_hid concat(f_t^1, ..., f_t^m)))
  Var gate_weights(Tape& tape, const std::vector<Var>& inputs) const {
    if (inputs.empty()) throw ContractError("gate_weights: no gating inputs");
    Var f = inputs.size() == 1 ? inputs[0] : concat(inputs);
    if (f.v().shape != Shape{w_hid->shape[1]}) {
      throw DimensionError("gate_weights: input width " + shape_str(f.v().shape) +
                           " incompatible with W_hid " + shape_str(w_hid->shape));
    }
    Var hidden = nsnmt::tanh(matmul(tape.leaf(w_hid), f));
    return softmax(matmul(tape.leaf(w_gate), hidden));
  }
};

// p = sum_j g_j * p_j. Convex combination of probability vectors, summed
// left to right for bit reproducibility.
inline Var mixture_distribution(const Var& g, const std::vector<Var>& expert_dists) {
  if (expert_dists.empty()) throw ContractError("mixture_distribution: no expert distributions");
  if (g.v().shape != Shape{expert_dists.size()}) {
    throw DimensionError("mixture_distribution: gate vector " + shape_str(g.v().shape) + " for " +
                         std::to_string(expert_dists.size()) + " experts");
  }
  const Shape& vshape = expert_dists[0].v().shape;
  for (const Var& d : expert_dists) {
    if (d.v().shape != vshape) {
      throw DimensionError("mixture_distribution: vocabulary mismatch " + shape_str(vshape) + " vs " +
                           shape_str(d.v().shape));
    }
  }
  Var mix;
  for (std::size_t j = 0; j < expert_dists.size(); ++j) {
    Var term = mul(slice(g, j, 1), expert_dists[j]);
    mix = j == 0 ? term : add(mix, term);
  }
  return mix;
}

struct MoeStepOut {
  Var dist;                       // mixed distribution p_t
  Var gate;                       // g_t
  std::vector<DecState> states;   // per-expert next states
};

struct MoeEnsemble {
  MoeHyper hyper;
  std::vector<Seq2SeqModel> experts;
  std::vector<std::string> expert_langs;
  GatingNetwork gating;

  std::size_t num_experts() const { return experts.size(); }
  std::size_t tgt_vocab_size() const { return experts.at(0).tgt_vocab_size; }

  std::size_t gate_input_width() const {
    const Hyper& hy = experts.at(0).hyper;
    return hyper.gate_input == GateInput::kEmbedding ? hy.embed_dim : hy.embed_dim + hy.hidden_dim;
  }

  // Experts must already exist (moved in) and share the target vocabulary.
  void init_gating(const MoeHyper& hy, Rng& rng, double init_scale = kInitScale) {
    if (experts.size() < 2) throw ContractError("mixture needs at least 2 experts");
    if (expert_langs.size() != experts.size()) {
      throw ContractError("mixture needs one language tag per expert");
    }
    for (const Seq2SeqModel& e : experts) {
      if (e.tgt_vocab_size != experts[0].tgt_vocab_size) {
        throw ContractError("experts must share one target vocabulary");
      }
      if (e.hyper.embed_dim != experts[0].hyper.embed_dim ||
          e.hyper.hidden_dim != experts[0].hyper.hidden_dim) {
        throw ContractError("experts must share embed/hidden widths for gating input");
      }
    }
    hyper = hy;
    gating.init(experts.size(), gate_input_width(), hy.gate_hidden, rng, init_scale);
  }

  // The gate trains alone; expert parameters drop out of every backward pass.
  void freeze_experts() {
    for (const Seq2SeqModel& e : experts) {
      for (const NamedParam& p : e.params()) p.tensor->requires_grad = false;
    }
  }

  Var gate_input_of(const StepResult& r, const Seq2SeqModel& expert) const {
    if (hyper.gate_input == GateInput::kEmbedding) {
      return slice(r.dec_input, 0, expert.hyper.embed_dim);
    }
    return r.dec_input;
  }

  // Every expert advances on the SAME previous symbol; outputs are mixed.
  MoeStepOut step(Tape& tape, const std::vector<EncoderOut>& encs, const std::vector<DecState>& states,
                  int y_prev) const {
    if (encs.size() != experts.size() || states.size() != experts.size()) {
      throw DimensionError("moe step: expected one encoder output and state per expert");
    }
    std::vector<Var> fs, dists;
    std::vector<DecState> next;
    fs.reserve(experts.size());
    dists.reserve(experts.size());
    next.reserve(experts.size());
    for (std::size_t j = 0; j < experts.size(); ++j) {
      StepResult r = experts[j].decoder_step(tape, encs[j], states[j], y_prev);
      fs.push_back(gate_input_of(r, experts[j]));
      dists.push_back(r.dist);
      next.push_back(r.state);
    }
    Var g = gating.gate_weights(tape, fs);
    return MoeStepOut{mixture_distribution(g, dists), g, std::move(next)};
  }
};

// Teacher-forced loss of the mixed distribution. Each expert encodes its own
// (possibly <NULL>) source sentence.
struct MoeLossOut {
  Var loss;
  std::size_t tokens = 0;
  std::vector<double> mean_gate;  // per-expert gate weight averaged over steps
};

inline MoeLossOut moe_sequence_loss(const MoeEnsemble& ensemble, Tape& tape,
                                    const std::vector<std::vector<int>>& src_seqs,
                                    const std::vector<int>& tgt_ids) {
  require_framed(tgt_ids, "moe_sequence_loss");
  if (src_seqs.size() != ensemble.num_experts()) {
    throw DimensionError("moe_sequence_loss: expected one source per expert");
  }
  std::vector<EncoderOut> encs;
  std::vector<DecState> states;
  for (std::size_t j = 0; j < ensemble.num_experts(); ++j) {
    encs.push_back(ensemble.experts[j].encode(tape, src_seqs[j]));
    states.push_back(ensemble.experts[j].initial_state(tape, encs.back()));
  }
  Var loss;
  std::vector<double> mean_gate(ensemble.num_experts(), 0.0);
  for (std::size_t t = 1; t < tgt_ids.size(); ++t) {
    MoeStepOut out = ensemble.step(tape, encs, states, tgt_ids[t - 1]);
    Var nll = cross_entropy(out.dist, static_cast<std::size_t>(tgt_ids[t]));
    loss = t == 1 ? nll : add(loss, nll);
    for (std::size_t j = 0; j < mean_gate.size(); ++j) mean_gate[j] += out.gate.v().data[j];
    states = std::move(out.states);
  }
  const double steps = static_cast<double>(tgt_ids.size() - 1);
  for (double& x : mean_gate) x /= steps;
  return MoeLossOut{loss, tgt_ids.size() - 1, std::move(mean_gate)};
}

class MoeSession {
 public:
  using State = std::vector<DecSnapshot>;

  MoeSession(const MoeEnsemble& ensemble, const std::vector<std::vector<int>>& src_seqs)
      : ensemble_(ensemble) {
    if (src_seqs.size() != ensemble.num_experts()) {
      throw DimensionError("moe session: expected one source per expert");
    }
    Tape tape(false);
    for (std::size_t j = 0; j < ensemble.num_experts(); ++j) {
      const Seq2SeqModel& e = ensemble.experts[j];
      EncoderOut enc = e.encode(tape, src_seqs[j]);
      DecState init = e.initial_state(tape, enc);
      annotations_.push_back(enc.annotations.t());
      init_.push_back(DecSnapshot{init.h.t(), init.c.t(), make_tensor(Shape{e.hyper.hidden_dim})});
    }
  }

  std::size_t vocab_size() const { return ensemble_.tgt_vocab_size(); }

  State initial() const { return init_; }

  std::pair<std::vector<double>, State> step(const State& s, int y_prev) const {
    Tape tape(false);
    std::vector<EncoderOut> encs(annotations_.size());
    std::vector<DecState> states(annotations_.size());
    for (std::size_t j = 0; j < annotations_.size(); ++j) {
      encs[j].annotations = tape.leaf(annotations_[j]);
      encs[j].length = annotations_[j]->shape[0];
      states[j] = DecState{tape.leaf(s[j].h), tape.leaf(s[j].c), tape.leaf(s[j].h_tilde)};
    }
    MoeStepOut out = ensemble_.step(tape, encs, states, y_prev);
    State next;
    next.reserve(out.states.size());
    for (const DecState& st : out.states) {
      next.push_back(DecSnapshot{st.h.t(), st.c.t(), st.h_tilde.t()});
    }
    return {out.dist.v().data, std::move(next)};
  }

 private:
  const MoeEnsemble& ensemble_;
  std::vector<TensorPtr> annotations_;
  State init_;
};

inline std::vector<int> moe_translate(const MoeEnsemble& ensemble,
                                      const std::vector<std::vector<int>>& src_seqs, std::size_t width,
                                      std::size_t max_len, std::size_t min_len = 0) {
  MoeSession session(ensemble, src_seqs);
  if (width == 1) return greedy_decode(session, max_len, min_len);
  return beam_decode(session, width, max_len, min_len);
}

}  // namespace nsnmt
