#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers/gradcheck.hpp"
#include "nsnmt/decode.hpp"
#include "nsnmt/seq2seq.hpp"
#include "nsnmt/trainer.hpp"

using namespace nsnmt;

namespace {

void fill(TensorPtr& t, const std::vector<double>& v) {
  REQUIRE(t->data.size() == v.size());
  t->data = v;
}

// Fixed transition table over vocab {PAD BOS EOS a NULL b}: reaching "a" then
// "b" greedily while the empty translation has the single best total score.
struct ScriptedSession {
  using State = int;  // emitted token count
  std::size_t vocab_size() const { return 6; }
  State initial() const { return 0; }
  std::pair<std::vector<double>, State> step(const State& s, int y_prev) const {
    std::vector<double> p(6, 0.0);
    if (y_prev == Vocabulary::kBos) {
      p[3] = 0.5, p[Vocabulary::kEos] = 0.4, p[5] = 0.1;
    } else if (y_prev == 3) {
      p[5] = 0.6, p[Vocabulary::kEos] = 0.3, p[3] = 0.1;
    } else {
      p[Vocabulary::kEos] = 0.9, p[3] = 0.05, p[5] = 0.05;
    }
    return {p, s + 1};
  }
};

// Exhaustive search over all complete hypotheses (every non-banned token
// sequence up to max_len, each closed by <EOS> unless it hits max_len),
// using beam_decode's tie rules. Oracle for exact decoding on toy sessions.
template <typename Session>
std::vector<int> exhaustive_best(Session& session, std::size_t max_len) {
  struct Best {
    std::vector<int> tokens;
    double logp = -1e300;
    bool set = false;
  } best;
  auto better = [](const std::vector<int>& at, double ap, const std::vector<int>& bt, double bp) {
    if (ap != bp) return ap > bp;
    if (at.size() != bt.size()) return at.size() < bt.size();
    return at < bt;
  };
  std::vector<int> prefix;
  auto dfs = [&](auto&& self, typename Session::State state, int y_prev, double logp) -> void {
    auto [dist, next] = session.step(state, y_prev);
    for (int id = 0; id < static_cast<int>(dist.size()); ++id) {
      if (emission_banned(id)) continue;
      const double p = dist[static_cast<std::size_t>(id)];
      if (p <= 0.0) continue;
      const double lp = logp + std::log(p);
      if (id == Vocabulary::kEos) {
        if (!best.set || better(prefix, lp, best.tokens, best.logp)) {
          best = {prefix, lp, true};
        }
        continue;
      }
      prefix.push_back(id);
      if (prefix.size() >= max_len) {
        if (!best.set || better(prefix, lp, best.tokens, best.logp)) {
          best = {prefix, lp, true};
        }
      } else {
        self(self, next, id, lp);
      }
      prefix.pop_back();
    }
  };
  dfs(dfs, session.initial(), Vocabulary::kBos, 0.0);
  return best.tokens;
}

}  // namespace

TEST_CASE("lstm cell with zero weights halves the carry") {
  Rng rng(1);
  LstmCell cell;
  cell.init(1, 1, rng, 0.1);
  for (TensorPtr* w : {&cell.w_in, &cell.w_forget, &cell.w_out, &cell.w_cand}) {
    std::fill((*w)->data.begin(), (*w)->data.end(), 0.0);
  }

  Tape tape;
  Var x = tape.leaf(make_tensor({1}, 0.7));
  Var h = tape.leaf(make_tensor({1}, -0.3));
  Var c = tape.leaf(make_tensor({1}, 0.8));
  auto [h2, c2] = cell.step(tape, x, h, c);
  // All gates sit at sigmoid(0) = 0.5 and the candidate at tanh(0) = 0.
  REQUIRE(c2.v().data[0] == Catch::Approx(0.4).epsilon(1e-15));
  REQUIRE(h2.v().data[0] == Catch::Approx(0.5 * std::tanh(0.4)).epsilon(1e-15));
}

TEST_CASE("lstm cell matches a hand-unrolled scalar computation") {
  Rng rng(1);
  LstmCell cell;
  cell.init(1, 1, rng, 0.1);
  fill(cell.w_in, {0.3, -0.2});
  fill(cell.w_forget, {0.1, 0.4});
  fill(cell.w_out, {-0.5, 0.2});
  fill(cell.w_cand, {0.7, -0.1});
  fill(cell.b_in, {0.05});
  fill(cell.b_forget, {-0.02});
  fill(cell.b_out, {0.1});
  fill(cell.b_cand, {0.0});

  const double x = 0.9, h0 = -0.4, c0 = 0.6;
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double i = sig(0.3 * x - 0.2 * h0 + 0.05);
  const double f = sig(0.1 * x + 0.4 * h0 - 0.02);
  const double o = sig(-0.5 * x + 0.2 * h0 + 0.1);
  const double g = std::tanh(0.7 * x - 0.1 * h0);
  const double c1 = f * c0 + i * g;
  const double h1 = o * std::tanh(c1);

  Tape tape;
  auto [vh, vc] = cell.step(tape, tape.leaf(make_tensor({1}, x)), tape.leaf(make_tensor({1}, h0)),
                            tape.leaf(make_tensor({1}, c0)));
  REQUIRE(vc.v().data[0] == Catch::Approx(c1).epsilon(1e-14));
  REQUIRE(vh.v().data[0] == Catch::Approx(h1).epsilon(1e-14));

  Var bad = tape.leaf(make_tensor({2}, 0.0));
  REQUIRE_THROWS_AS(cell.step(tape, bad, vh, vc), DimensionError);
}

TEST_CASE("attention weights and context follow the bilinear score") {
  Rng rng(1);
  Attention att;
  att.init(1, rng, 0.1);
  fill(att.w, {1.0, 1.0});

  Tape tape;
  const double l2 = std::log(2.0);
  Var ann = tape.leaf(make_tensor({2, 2}, std::vector<double>{0.0, 0.0, l2 / 2, l2 / 2}));
  Var h = tape.leaf(make_tensor({1}, 1.0));
  auto [context, weights] = att.apply(tape, ann, h);
  // Scores are 0 and log 2, so the weights are 1/3 and 2/3.
  REQUIRE(weights.v().data[0] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
  REQUIRE(weights.v().data[1] == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
  REQUIRE(context.v().shape == Shape{2});
  REQUIRE(context.v().data[0] == Catch::Approx((2.0 / 3.0) * (l2 / 2)).epsilon(1e-12));
}

TEST_CASE("encoder produces one annotation per token and a fused final state") {
  Rng rng(9);
  EncoderBlock enc;
  enc.init(11, 6, 4, rng, 0.08);
  Tape tape;
  EncoderOut out = enc.encode(tape, {1, 7, 8, 2});
  REQUIRE(out.annotations.v().shape == Shape{4, 8});
  REQUIRE(out.final_h.v().shape == Shape{4});
  REQUIRE(out.final_c.v().shape == Shape{4});
  REQUIRE(out.length == 4);
  for (double v : out.final_h.v().data) REQUIRE(std::abs(v) <= 1.0);

  REQUIRE_THROWS_AS(enc.encode(tape, {}), ContractError);
  REQUIRE_THROWS_AS(enc.encode(tape, {1, -3, 2}), IndexError);

  // Same ids on a fresh tape reproduce the annotations bitwise.
  Tape tape2;
  EncoderOut out2 = enc.encode(tape2, {1, 7, 8, 2});
  REQUIRE(out2.annotations.v().data == out.annotations.v().data);
}

TEST_CASE("teacher-forced loss counts predicted positions and needs framing") {
  Rng rng(3);
  Seq2SeqModel model;
  Hyper hy;
  hy.hidden_dim = 5;
  hy.embed_dim = 4;
  model.init(hy, 9, 9, rng);

  Tape tape;
  SeqLoss loss = sequence_loss(model, tape, {1, 6, 7, 2}, {1, 8, 5, 2});
  REQUIRE(loss.tokens == 3);  // predicts positions 1, 2, and <EOS>
  REQUIRE(std::isfinite(loss.loss.v().data[0]));
  REQUIRE(loss.loss.v().data[0] > 0.0);

  REQUIRE_THROWS_AS(sequence_loss(model, tape, {1, 6, 2}, {8, 5}), ContractError);
  REQUIRE_THROWS_AS(sequence_loss(model, tape, {1, 6, 2}, {1, 8}), ContractError);
}

TEST_CASE("full model gradients match finite differences", "[gradcheck]") {
  Rng rng(17);
  Seq2SeqModel model;
  Hyper hy;
  hy.hidden_dim = 3;
  hy.embed_dim = 2;
  model.init(hy, 7, 7, rng);
  const std::vector<int> src = {1, 5, 6, 2};
  const std::vector<int> tgt = {1, 6, 5, 2};

  auto eval = [&](bool with_grad) {
    Tape tape(with_grad);
    SeqLoss l = sequence_loss(model, tape, src, tgt);
    if (with_grad) tape.backward(l.loss);
    return l.loss.v().data[0];
  };
  auto r = nsnmt::testing::finite_diff(model.params(), eval, 1e-5);
  INFO("worst: " << r.worst << " over " << r.checked << " entries");
  REQUIRE(r.max_rel_err < 1e-4);
}

TEST_CASE("beam width 1 reproduces greedy decoding on a scripted session") {
  ScriptedSession s;
  std::vector<int> greedy = greedy_decode(s, 8);
  REQUIRE(greedy == std::vector<int>{3, 5});
  REQUIRE(beam_decode(s, 1, 8) == greedy);
}

TEST_CASE("wide beam finds the exact argmax that greedy misses") {
  ScriptedSession s;
  // Path probabilities: "" = 0.4; "a" = 0.15; "a b" = 0.5*0.6*0.9 = 0.27.
  REQUIRE(exhaustive_best(s, 8).empty());
  REQUIRE(beam_decode(s, 2, 8).empty());
  REQUIRE(beam_decode(s, 64, 8).empty());
}

TEST_CASE("min_len rules out the empty hypothesis without reranking the rest") {
  ScriptedSession s;
  // With "" excluded the best complete path is "a b" (0.27 over "a" = 0.15).
  REQUIRE(beam_decode(s, 64, 8, 1) == std::vector<int>{3, 5});
  REQUIRE(greedy_decode(s, 8, 1) == std::vector<int>{3, 5});
  // min_len 0 is the default and leaves the argmax alone.
  REQUIRE(beam_decode(s, 64, 8, 0).empty());
}

TEST_CASE("beam equals exhaustive search across many random tables") {
  // Session whose distribution is a fixed pseudo-random function of
  // (y_prev, trial); wide beams must agree with brute-force enumeration.
  struct RandomSession {
    using State = int;
    std::uint64_t salt;
    std::size_t vocab_size() const { return 7; }
    State initial() const { return 0; }
    std::pair<std::vector<double>, State> step(const State& s, int y_prev) const {
      std::vector<double> p(7, 0.0);
      double z = 0.0;
      for (int id = 0; id < 7; ++id) {
        if (emission_banned(id)) continue;
        std::uint64_t h = salt * 1000003u + static_cast<std::uint64_t>(y_prev) * 101u +
                          static_cast<std::uint64_t>(id) * 31u + static_cast<std::uint64_t>(s) * 7u;
        h ^= h >> 13;
        p[static_cast<std::size_t>(id)] = 1.0 + static_cast<double>(h % 97);
        z += p[static_cast<std::size_t>(id)];
      }
      for (double& v : p) v /= z;
      return {p, s + 1};
    }
  };
  for (std::uint64_t salt = 1; salt <= 40; ++salt) {
    RandomSession s{salt};
    // 4 allowed ids, depth 3: 64 leaf paths, so width 256 enumerates all.
    std::vector<int> exact = exhaustive_best(s, 3);
    std::vector<int> beam = beam_decode(s, 256, 3);
    INFO("salt " << salt);
    REQUIRE(beam == exact);
  }
}

TEST_CASE("a small model learns to copy and decodes its training pattern") {
  Rng rng(11);
  const std::size_t v = 13;  // 8 content tokens
  Seq2SeqModel model;
  Hyper hy;
  hy.hidden_dim = 24;
  hy.embed_dim = 12;
  model.init(hy, v, v, rng);

  std::vector<std::vector<int>> seqs;
  Rng data_rng(5);
  for (int i = 0; i < 48; ++i) {
    std::vector<int> s = {1};
    const std::size_t len = 2 + data_rng.below(3);
    for (std::size_t j = 0; j < len; ++j) s.push_back(5 + static_cast<int>(data_rng.below(8)));
    s.push_back(2);
    seqs.push_back(std::move(s));
  }

  AdamConfig acfg;
  acfg.alpha = 2e-2;
  Adam adam(model.params(), acfg);
  double per_token = 1e9;
  std::size_t steps = 0;
  for (; steps < 600 && per_token >= 0.03; ++steps) {
    Tape tape;
    Var total;
    std::size_t tokens = 0;
    for (std::size_t k = 0; k < 8; ++k) {
      const auto& s = seqs[(steps * 8 + k) % seqs.size()];
      SeqLoss l = sequence_loss(model, tape, s, s);
      total = total.valid() ? add(total, l.loss) : l.loss;
      tokens += l.tokens;
    }
    tape.backward(total);
    clip_gradients(model.params(), 5.0);
    adam.step();
    per_token = total.v().data[0] / static_cast<double>(tokens);
  }
  INFO("loss/token " << per_token << " after " << steps << " steps");
  REQUIRE(per_token < 0.03);

  for (std::size_t k = 0; k < 3; ++k) {
    const std::vector<int>& probe = seqs[k];
    const std::vector<int> content(probe.begin() + 1, probe.end() - 1);
    std::vector<int> out = translate(model, probe, 1, 10);
    INFO("probe " << k);
    REQUIRE(out == content);
    // Near-deterministic distributions: the beam agrees with greedy,
    // and decoding is reproducible across calls.
    REQUIRE(translate(model, probe, 3, 10) == out);
    REQUIRE(translate(model, probe, 1, 10) == out);
  }
}
