#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nsnmt/autodiff.hpp"
#include "nsnmt/errors.hpp"
#include "nsnmt/tensor.hpp"

// Shared attentional encoder-decoder building blocks: embeddings, an LSTM
// cell, a bidirectional encoder with learned final-state fusion, and global
// attention with the bilinear score.

namespace nsnmt {

struct NamedParam {
  std::string name;
  TensorPtr tensor;
};

inline Var zeros_leaf(Tape& tape, Shape shape) { return tape.leaf(make_tensor(std::move(shape))); }

// Standard single-layer LSTM. Gate maps take concat(x, h), so every weight
// matrix is hidden_dim x (input_dim + hidden_dim); biases start at zero.
struct LstmCell {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  TensorPtr w_in, w_forget, w_out, w_cand;
  TensorPtr b_in, b_forget, b_out, b_cand;

  void init(std::size_t in_dim, std::size_t hid_dim, Rng& rng, double init_scale) {
    input_dim = in_dim;
    hidden_dim = hid_dim;
    const Shape wshape{hid_dim, in_dim + hid_dim};
    for (TensorPtr* w : {&w_in, &w_forget, &w_out, &w_cand}) {
      *w = make_param(wshape);
      init_uniform(**w, rng, init_scale);
    }
    for (TensorPtr* b : {&b_in, &b_forget, &b_out, &b_cand}) *b = make_param(Shape{hid_dim});
  }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".w_in", w_in});
    out.push_back({prefix + ".w_forget", w_forget});
    out.push_back({prefix + ".w_out", w_out});
    out.push_back({prefix + ".w_cand", w_cand});
    out.push_back({prefix + ".b_in", b_in});
    out.push_back({prefix + ".b_forget", b_forget});
    out.push_back({prefix + ".b_out", b_out});
    out.push_back({prefix + ".b_cand", b_cand});
  }

  // (h, c) -> (h', c')
  std::pair<Var, Var> step(Tape& tape, const Var& x, const Var& h, const Var& c) const {
    if (x.v().shape != Shape{input_dim}) {
      throw DimensionError("lstm_step: input width " + shape_str(x.v().shape) + " does not match cell input " +
                           std::to_string(input_dim));
    }
    if (h.v().shape != Shape{hidden_dim} || c.v().shape != Shape{hidden_dim}) {
      throw DimensionError("lstm_step: state width mismatch for hidden " + std::to_string(hidden_dim));
    }
    Var xh = concat({x, h});
    Var gi = sigmoid(add(matmul(tape.leaf(w_in), xh), tape.leaf(b_in)));
    Var gf = sigmoid(add(matmul(tape.leaf(w_forget), xh), tape.leaf(b_forget)));
    Var go = sigmoid(add(matmul(tape.leaf(w_out), xh), tape.leaf(b_out)));
    Var gc = nsnmt::tanh(add(matmul(tape.leaf(w_cand), xh), tape.leaf(b_cand)));
    Var c_next = add(mul(gf, c), mul(gi, gc));
    Var h_next = mul(go, nsnmt::tanh(c_next));
    return {h_next, c_next};
  }
};

// Global attention over one encoder's annotation matrix (S x 2H).
// score_s = annotation_s . (W h_t), the bilinear score; weights = softmax;
// context = sum_s weights_s * annotation_s.
struct Attention {
  TensorPtr w;  // 2H x H

  void init(std::size_t hidden_dim, Rng& rng, double init_scale) {
    w = make_param(Shape{2 * hidden_dim, hidden_dim});
    init_uniform(*w, rng, init_scale);
  }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".w", w});
  }

  // -> (context: 2H vector, weights: probability vector over source positions)
  std::pair<Var, Var> apply(Tape& tape, const Var& annotations, const Var& h_t) const {
    const Shape& as = annotations.v().shape;
    if (as.size() != 2 || as[1] != w->shape[0]) {
      throw DimensionError("attention: annotations " + shape_str(as) + " incompatible with score matrix " +
                           shape_str(w->shape));
    }
    Var key = matmul(tape.leaf(w), h_t);                 // 2H
    Var weights = softmax(matmul(annotations, key));     // S
    Var context = matmul(transpose(annotations), weights);  // 2H
    return {context, weights};
  }
};

struct EncoderOut {
  Var annotations;  // S x 2H
  Var final_h;      // H
  Var final_c;      // H
  std::size_t length = 0;
};

// Bidirectional encoder over one source language: own embedding table, a
// forward and a backward cell, and learned fusion of the directional finals
// into decoder-width states: final_h = tanh(W_proj [fwd_h; bwd_h]),
// final_c = C_proj [fwd_c; bwd_c].
struct EncoderBlock {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
  std::size_t hidden_dim = 0;
  TensorPtr embed;  // V x E
  LstmCell fwd, bwd;
  TensorPtr w_proj;  // H x 2H
  TensorPtr c_proj;  // H x 2H

  void init(std::size_t vocab, std::size_t emb, std::size_t hid, Rng& rng, double init_scale) {
    vocab_size = vocab;
    embed_dim = emb;
    hidden_dim = hid;
    embed = make_param(Shape{vocab, emb});
    init_uniform(*embed, rng, init_scale);
    fwd.init(emb, hid, rng, init_scale);
    bwd.init(emb, hid, rng, init_scale);
    w_proj = make_param(Shape{hid, 2 * hid});
    init_uniform(*w_proj, rng, init_scale);
    c_proj = make_param(Shape{hid, 2 * hid});
    init_uniform(*c_proj, rng, init_scale);
  }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".embed", embed});
    fwd.collect(prefix + ".fwd", out);
    bwd.collect(prefix + ".bwd", out);
    out.push_back({prefix + ".w_proj", w_proj});
    out.push_back({prefix + ".c_proj", c_proj});
  }

  EncoderOut encode(Tape& tape, const std::vector<int>& ids) const {
    if (ids.empty()) throw ContractError("encode: empty token sequence");
    const std::size_t n = ids.size();
    Var emb_table = tape.leaf(embed);
    std::vector<Var> x(n);
    for (std::size_t t = 0; t < n; ++t) {
      if (ids[t] < 0) throw IndexError("encode: negative token id");
      x[t] = row(emb_table, static_cast<std::size_t>(ids[t]));
    }

    std::vector<Var> fh(n);
    Var h = zeros_leaf(tape, {hidden_dim});
    Var c = zeros_leaf(tape, {hidden_dim});
    for (std::size_t t = 0; t < n; ++t) {
      auto [h2, c2] = fwd.step(tape, x[t], h, c);
      h = h2;
      c = c2;
      fh[t] = h;
    }
    Var fwd_last_h = h, fwd_last_c = c;

    std::vector<Var> bh(n);
    h = zeros_leaf(tape, {hidden_dim});
    c = zeros_leaf(tape, {hidden_dim});
    for (std::size_t t = n; t-- > 0;) {
      auto [h2, c2] = bwd.step(tape, x[t], h, c);
      h = h2;
      c = c2;
      bh[t] = h;
    }
    Var bwd_last_h = h, bwd_last_c = c;

    std::vector<Var> rows;
    rows.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      rows.push_back(reshape(concat({fh[t], bh[t]}), Shape{1, 2 * hidden_dim}));
    }
    EncoderOut out;
    out.annotations = n == 1 ? rows[0] : concat(rows, 0);
    out.final_h = nsnmt::tanh(matmul(tape.leaf(w_proj), concat({fwd_last_h, bwd_last_h})));
    out.final_c = matmul(tape.leaf(c_proj), concat({fwd_last_c, bwd_last_c}));
    out.length = n;
    return out;
  }
};

// Decoder recurrent state plus the attention-feeding carry (zero at step 0).
struct DecState {
  Var h;
  Var c;
  Var h_tilde;
};

// Tape-free snapshot of a DecState; decoding sessions carry these across
// steps so each step can run on a fresh forward-only tape.
struct DecSnapshot {
  TensorPtr h;
  TensorPtr c;
  TensorPtr h_tilde;
};

}  // namespace nsnmt
