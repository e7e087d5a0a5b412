#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers/gradcheck.hpp"
#include "nsnmt/moe.hpp"
#include "nsnmt/trainer.hpp"

using namespace nsnmt;

namespace {

// Random probability vector over `n` entries.
std::vector<double> random_dist(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double z = 0.0;
  for (double& v : p) {
    v = 0.05 + rng.next_unit();
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

// Two-expert ensemble over a shared tiny vocabulary; expert 0 is trained to
// copy, expert 1 keeps a zero output projection (a uniform distribution).
MoeEnsemble copy_vs_uniform(std::vector<std::vector<int>>& seqs) {
  const std::size_t v = 11;
  Rng rng(77);
  Hyper hy;
  hy.hidden_dim = 20;
  hy.embed_dim = 10;

  MoeEnsemble ens;
  ens.experts.resize(2);
  ens.experts[0].init(hy, v, v, rng);
  ens.experts[1].init(hy, v, v, rng);
  std::fill(ens.experts[1].w_vocab->data.begin(), ens.experts[1].w_vocab->data.end(), 0.0);
  ens.expert_langs = {"a", "b"};

  Rng data_rng(3);
  for (int i = 0; i < 32; ++i) {
    std::vector<int> s = {1};
    const std::size_t len = 2 + data_rng.below(3);
    for (std::size_t j = 0; j < len; ++j) s.push_back(5 + static_cast<int>(data_rng.below(6)));
    s.push_back(2);
    seqs.push_back(std::move(s));
  }

  AdamConfig acfg;
  acfg.alpha = 2e-2;
  Adam adam(ens.experts[0].params(), acfg);
  double per_token = 1e9;
  for (std::size_t step = 0; step < 600 && per_token >= 0.03; ++step) {
    Tape tape;
    Var total;
    std::size_t tokens = 0;
    for (std::size_t k = 0; k < 8; ++k) {
      const auto& s = seqs[(step * 8 + k) % seqs.size()];
      SeqLoss l = sequence_loss(ens.experts[0], tape, s, s);
      total = total.valid() ? add(total, l.loss) : l.loss;
      tokens += l.tokens;
    }
    tape.backward(total);
    clip_gradients(ens.experts[0].params(), 5.0);
    adam.step();
    per_token = total.v().data[0] / static_cast<double>(tokens);
  }
  REQUIRE(per_token < 0.03);
  return ens;
}

}  // namespace

TEST_CASE("a one-hot gate reproduces the chosen expert exactly") {
  Rng rng(8);
  Tape tape;
  std::vector<Var> dists;
  for (int j = 0; j < 3; ++j) dists.push_back(tape.leaf(make_tensor({5}, random_dist(rng, 5))));

  Var g = tape.leaf(make_tensor({3}, std::vector<double>{1.0, 0.0, 0.0}));
  Var mix = mixture_distribution(g, dists);
  for (std::size_t i = 0; i < 5; ++i) REQUIRE(mix.v().data[i] == dists[0].v().data[i]);

  Var g2 = tape.leaf(make_tensor({3}, std::vector<double>{0.0, 0.0, 1.0}));
  Var mix2 = mixture_distribution(g2, dists);
  for (std::size_t i = 0; i < 5; ++i) REQUIRE(mix2.v().data[i] == dists[2].v().data[i]);
}

TEST_CASE("a uniform gate averages the experts") {
  Rng rng(9);
  Tape tape;
  std::vector<Var> dists;
  for (int j = 0; j < 4; ++j) dists.push_back(tape.leaf(make_tensor({6}, random_dist(rng, 6))));
  Var g = tape.leaf(make_tensor({4}, 0.25));
  Var mix = mixture_distribution(g, dists);
  for (std::size_t i = 0; i < 6; ++i) {
    double mean = 0.0;
    for (int j = 0; j < 4; ++j) mean += dists[static_cast<std::size_t>(j)].v().data[i];
    mean /= 4.0;
    REQUIRE(mix.v().data[i] == Catch::Approx(mean).margin(1e-12));
  }
}

TEST_CASE("mixtures are permutation-equivariant and stay distributions") {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    const std::size_t n = 4 + rng.below(5);
    std::vector<std::vector<double>> raw;
    for (int j = 0; j < 3; ++j) raw.push_back(random_dist(rng, n));
    std::vector<double> graw = random_dist(rng, 3);

    auto mix_of = [&](const std::vector<int>& perm) {
      std::vector<Var> dists;
      std::vector<double> g;
      for (int j : perm) {
        dists.push_back(tape.leaf(make_tensor({n}, raw[static_cast<std::size_t>(j)])));
        g.push_back(graw[static_cast<std::size_t>(j)]);
      }
      return mixture_distribution(tape.leaf(make_tensor({3}, g)), dists);
    };
    Var base = mix_of({0, 1, 2});
    Var swapped = mix_of({2, 0, 1});

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      REQUIRE(swapped.v().data[i] == Catch::Approx(base.v().data[i]).margin(1e-15));
      REQUIRE(base.v().data[i] >= 0.0);
      total += base.v().data[i];
    }
    REQUIRE(total == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("mixture validates gate length and expert shapes") {
  Tape tape;
  std::vector<Var> dists = {tape.leaf(make_tensor({4}, 0.25)), tape.leaf(make_tensor({5}, 0.2))};
  Var g = tape.leaf(make_tensor({2}, 0.5));
  REQUIRE_THROWS_AS(mixture_distribution(g, dists), DimensionError);
  Var g3 = tape.leaf(make_tensor({3}, 1.0 / 3));
  std::vector<Var> ok = {tape.leaf(make_tensor({4}, 0.25)), tape.leaf(make_tensor({4}, 0.25))};
  REQUIRE_THROWS_AS(mixture_distribution(g3, ok), DimensionError);
}

TEST_CASE("gating weights are a softmax over the experts") {
  Rng rng(14);
  GatingNetwork gate;
  gate.init(3, 5, 4, rng, 0.2);
  Tape tape;
  std::vector<Var> inputs;
  for (int j = 0; j < 3; ++j) {
    auto t = make_tensor({5});
    init_uniform(*t, rng, 1.0);
    inputs.push_back(tape.leaf(t));
  }
  Var g = gate.gate_weights(tape, inputs);
  REQUIRE(g.v().shape == Shape{3});
  double total = 0.0;
  for (double v : g.v().data) {
    REQUIRE(v > 0.0);
    total += v;
  }
  REQUIRE(total == Catch::Approx(1.0).margin(1e-12));

  std::vector<Var> bad = {inputs[0], inputs[1]};
  REQUIRE_THROWS_AS(gate.gate_weights(tape, bad), DimensionError);
}

TEST_CASE("ensemble initialization enforces compatible experts") {
  Rng rng(15);
  Hyper hy;
  hy.hidden_dim = 4;
  hy.embed_dim = 3;
  MoeEnsemble solo;
  solo.experts.resize(1);
  solo.experts[0].init(hy, 7, 7, rng);
  solo.expert_langs = {"a"};
  REQUIRE_THROWS_AS(solo.init_gating(MoeHyper{}, rng), ContractError);

  MoeEnsemble mismatched;
  mismatched.experts.resize(2);
  mismatched.experts[0].init(hy, 7, 7, rng);
  mismatched.experts[1].init(hy, 7, 9, rng);  // different target vocabulary
  mismatched.expert_langs = {"a", "b"};
  REQUIRE_THROWS_AS(mismatched.init_gating(MoeHyper{}, rng), ContractError);
}

TEST_CASE("gate input toggle selects embedding or full decoder input width") {
  Rng rng(16);
  Hyper hy;
  hy.hidden_dim = 4;
  hy.embed_dim = 3;
  MoeEnsemble ens;
  ens.experts.resize(2);
  ens.experts[0].init(hy, 7, 7, rng);
  ens.experts[1].init(hy, 7, 7, rng);
  ens.expert_langs = {"a", "b"};

  MoeHyper mh;
  mh.gate_hidden = 5;
  mh.gate_input = GateInput::kEmbedding;
  ens.init_gating(mh, rng);
  REQUIRE(ens.gate_input_width() == 3);
  REQUIRE(ens.gating.w_hid->shape == Shape{5, 2 * 3});

  mh.gate_input = GateInput::kDecoderInput;
  ens.init_gating(mh, rng);
  REQUIRE(ens.gate_input_width() == 3 + 4);
  REQUIRE(ens.gating.w_hid->shape == Shape{5, 2 * 7});
}

TEST_CASE("gating gradients match finite differences with experts frozen", "[gradcheck]") {
  Rng rng(21);
  Hyper hy;
  hy.hidden_dim = 3;
  hy.embed_dim = 2;
  MoeEnsemble ens;
  ens.experts.resize(2);
  ens.experts[0].init(hy, 6, 6, rng);
  ens.experts[1].init(hy, 6, 6, rng);
  ens.expert_langs = {"a", "b"};
  MoeHyper mh;
  mh.gate_hidden = 3;
  ens.init_gating(mh, rng);
  ens.freeze_experts();

  std::vector<std::vector<int>> srcs = {{1, 5, 2}, {1, Vocabulary::kNull, 2}};
  std::vector<int> tgt = {1, 5, 5, 2};
  auto eval = [&](bool with_grad) {
    Tape tape(with_grad);
    MoeLossOut l = moe_sequence_loss(ens, tape, srcs, tgt);
    if (with_grad) tape.backward(l.loss);
    return l.loss.v().data[0];
  };
  auto r = nsnmt::testing::finite_diff(ens.gating.params(), eval, 1e-5);
  INFO("worst: " << r.worst << " over " << r.checked << " entries");
  REQUIRE(r.max_rel_err < 1e-4);
}

TEST_CASE("training the gate leaves every expert parameter bitwise unchanged") {
  std::vector<std::vector<int>> seqs;
  MoeEnsemble ens = copy_vs_uniform(seqs);

  Rng rng(55);
  MoeHyper mh;
  mh.gate_hidden = 8;
  ens.init_gating(mh, rng);
  ens.freeze_experts();

  std::vector<std::vector<double>> snapshot;
  for (int e = 0; e < 2; ++e) {
    for (const NamedParam& p : ens.experts[static_cast<std::size_t>(e)].params()) {
      snapshot.push_back(p.tensor->data);
    }
  }

  AdamConfig acfg;
  acfg.alpha = 1e-2;
  Adam adam(ens.gating.params(), acfg);
  std::vector<double> last_gate;
  for (std::size_t step = 0; step < 150; ++step) {
    Tape tape;
    Var total;
    std::vector<double> gate_sum(2, 0.0);
    for (std::size_t k = 0; k < 8; ++k) {
      const auto& s = seqs[(step * 8 + k) % seqs.size()];
      MoeLossOut l = moe_sequence_loss(ens, tape, {s, s}, s);
      total = total.valid() ? add(total, l.loss) : l.loss;
      for (int e = 0; e < 2; ++e) gate_sum[static_cast<std::size_t>(e)] += l.mean_gate[static_cast<std::size_t>(e)];
    }
    tape.backward(total);
    clip_gradients(ens.gating.params(), 5.0);
    adam.step();
    last_gate = {gate_sum[0] / 8.0, gate_sum[1] / 8.0};
  }

  // The copy expert predicts the data almost perfectly, the uniform expert
  // carries no information: the trained gate locks onto the copy expert.
  INFO("mean gate on copy expert " << last_gate[0]);
  REQUIRE(last_gate[0] > 0.9);

  std::size_t idx = 0;
  for (int e = 0; e < 2; ++e) {
    for (const NamedParam& p : ens.experts[static_cast<std::size_t>(e)].params()) {
      REQUIRE(p.tensor->data == snapshot[idx]);
      ++idx;
    }
  }
}

TEST_CASE("mixture decoding is deterministic and in-vocabulary") {
  std::vector<std::vector<int>> seqs;
  MoeEnsemble ens = copy_vs_uniform(seqs);
  Rng rng(66);
  MoeHyper mh;
  mh.gate_hidden = 8;
  ens.init_gating(mh, rng);
  ens.freeze_experts();

  const std::vector<int>& probe = seqs[0];
  std::vector<int> out = moe_translate(ens, {probe, probe}, 2, 8);
  REQUIRE(out.size() <= 8);
  for (int id : out) {
    REQUIRE(id >= 0);
    REQUIRE(id < 11);
    REQUIRE_FALSE(emission_banned(id));
  }
  REQUIRE(moe_translate(ens, {probe, probe}, 2, 8) == out);
}
