#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nsnmt/errors.hpp"
#include "nsnmt/seq2seq.hpp"
#include "nsnmt/trainer.hpp"

using namespace nsnmt;

namespace {

// A training Example carrying only a row tag; the contrived loss functions
// below dispatch on the tag rather than on real token content.
Example tagged(std::size_t row) {
  Example ex;
  ex.row = row;
  return ex;
}

TensorPtr scalar_param(double value) {
  TensorPtr t = make_tensor({1}, std::vector<double>{value});
  t->requires_grad = true;
  return t;
}

}  // namespace

TEST_CASE("gradient clipping scales all parameters by the joint norm") {
  TensorPtr a = make_tensor({2}, std::vector<double>{0.0, 0.0});
  TensorPtr b = make_tensor({1}, std::vector<double>{0.0});
  a->ensure_grad();
  b->ensure_grad();
  a->grad = {3.0, 0.0};
  b->grad = {4.0};
  std::vector<NamedParam> params{{"a", a}, {"b", b}};

  SECTION("norm at or under the threshold is untouched") {
    REQUIRE(clip_gradients(params, 5.0) == 1.0);
    REQUIRE(a->grad[0] == 3.0);
    REQUIRE(b->grad[0] == 4.0);
  }

  SECTION("norm over the threshold scales every gradient") {
    double scale = clip_gradients(params, 2.5);
    REQUIRE(scale == Catch::Approx(0.5).epsilon(1e-15));
    REQUIRE(a->grad[0] == Catch::Approx(1.5).epsilon(1e-15));
    REQUIRE(a->grad[1] == 0.0);
    REQUIRE(b->grad[0] == Catch::Approx(2.0).epsilon(1e-15));
  }

  SECTION("all-zero gradients report scale 1 even under a tiny threshold") {
    a->grad = {0.0, 0.0};
    b->grad = {0.0};
    REQUIRE(clip_gradients(params, 1e-12) == 1.0);
  }

  SECTION("non-positive threshold is rejected") {
    REQUIRE_THROWS_AS(clip_gradients(params, 0.0), ContractError);
    REQUIRE_THROWS_AS(clip_gradients(params, -1.0), ContractError);
  }
}

TEST_CASE("Adam's bias-corrected first step has magnitude alpha for any gradient") {
  // With zero moment state, mhat = g and vhat = g*g, so the first update is
  // alpha * g / (|g| + eps): just under alpha in magnitude, signed like g.
  TensorPtr p = make_tensor({2}, std::vector<double>{0.0, 10.0});
  p->ensure_grad();
  p->grad = {1.0, -100.0};

  AdamConfig cfg;
  cfg.alpha = 1e-3;
  Adam adam({{"p", p}});
  adam.step();

  REQUIRE(adam.steps() == 1);
  REQUIRE(p->data[0] == Catch::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-14));
  REQUIRE(p->data[1] == Catch::Approx(10.0 + 1e-3 * 100.0 / (100.0 + 1e-8)).epsilon(1e-14));
  REQUIRE(p->grad[0] == 0.0);  // gradients consumed by the step
  REQUIRE(p->grad[1] == 0.0);
}

TEST_CASE("Adam under a constant gradient keeps stepping by alpha") {
  // Bias correction makes mhat = 1 and vhat = 1 at every step when g = 1,
  // so two steps land at -2 * alpha / (1 + eps).
  TensorPtr p = make_tensor({1}, std::vector<double>{0.0});
  Adam adam({{"p", p}});

  p->ensure_grad();
  p->grad = {1.0};
  adam.step();
  p->grad = {1.0};
  adam.step();

  REQUIRE(adam.steps() == 2);
  REQUIRE(p->data[0] == Catch::Approx(-2e-3 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("early stopping restores the best epoch's parameters") {
  // Training examples expose theta itself as the loss, so Adam drives theta
  // down; validation scores -theta, which therefore worsens every epoch
  // after the first. Only epoch 1 improves.
  TensorPtr theta = scalar_param(1.0);

  TrainTask task;
  task.params = {{"theta", theta}};
  task.loss_fn = [&](Tape& tape, const Example& ex) -> SeqLoss {
    Var th = tape.leaf(theta);
    if (ex.row < 1000) return SeqLoss{th, 1};
    return SeqLoss{scale(th, -1.0), 1};
  };

  auto epoch_batches = [](std::size_t) {
    return std::vector<std::vector<Example>>{{tagged(0)}, {tagged(1)}};
  };
  std::vector<Example> valid{tagged(1000)};

  TrainConfig cfg;
  cfg.max_epochs = 10;
  cfg.patience = 2;

  std::vector<std::pair<std::size_t, double>> improvements;
  std::vector<double> theta_at_improve;
  TrainResult r = train(task, epoch_batches, valid, cfg, [&](std::size_t epoch, double logppl) {
    improvements.emplace_back(epoch, logppl);
    theta_at_improve.push_back(theta->data[0]);
  });

  REQUIRE(r.epochs_run == 3);  // epoch 1 improves, epochs 2-3 exhaust patience
  REQUIRE(r.best_epoch == 1);
  REQUIRE(r.history.size() == 3);
  REQUIRE(r.history[0].improved);
  REQUIRE_FALSE(r.history[1].improved);
  REQUIRE_FALSE(r.history[2].improved);
  REQUIRE(r.history[0].valid_logppl == r.best_valid);
  REQUIRE(r.history[1].valid_logppl > r.best_valid);

  // Two unit-gradient Adam steps per epoch, each of magnitude ~alpha.
  double expected = 1.0 - 2.0 * (1e-3 / (1.0 + 1e-8));
  REQUIRE(theta->data[0] == Catch::Approx(expected).epsilon(1e-12));

  // on_improve fired once, while theta already held the best value, and the
  // restore at the end brought back exactly that value.
  REQUIRE(improvements.size() == 1);
  REQUIRE(improvements[0].first == 1);
  REQUIRE(improvements[0].second == r.best_valid);
  REQUIRE(theta_at_improve[0] == theta->data[0]);
}

TEST_CASE("a run that improves every epoch keeps the final parameters") {
  // Validation now scores +theta, so each epoch's lower theta is a new best.
  TensorPtr theta = scalar_param(1.0);

  TrainTask task;
  task.params = {{"theta", theta}};
  task.loss_fn = [&](Tape& tape, const Example& ex) -> SeqLoss {
    Var th = tape.leaf(theta);
    (void)ex;
    return SeqLoss{th, 1};
  };

  auto epoch_batches = [](std::size_t) {
    return std::vector<std::vector<Example>>{{tagged(0), tagged(1)}};
  };
  std::vector<Example> valid{tagged(2)};

  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.patience = 2;

  std::size_t improvements = 0;
  TrainResult r = train(task, epoch_batches, valid, cfg,
                        [&](std::size_t, double) { ++improvements; });

  REQUIRE(r.epochs_run == 4);
  REQUIRE(r.best_epoch == 4);
  REQUIRE(improvements == 4);
  for (const EpochStat& s : r.history) REQUIRE(s.improved);

  // Epoch 1's two examples both see theta = 1 before any update, and each
  // contributes one token: mean per-token loss is exactly 1.
  REQUIRE(r.history[0].train_loss == Catch::Approx(1.0).epsilon(1e-15));
  REQUIRE(r.history[1].train_loss < r.history[0].train_loss);

  std::string table = format_history(r);
  REQUIRE(table.find("epoch  train_loss  valid_logppl  best") == 0);
  REQUIRE(table.find("    1  ") != std::string::npos);
  REQUIRE(table.find("    4  ") != std::string::npos);
  // Every epoch improved, so every row carries the best marker.
  std::size_t stars = 0;
  for (char c : table) stars += c == '*';
  REQUIRE(stars == 4);
}

TEST_CASE("non-finite training loss aborts with epoch, batch, and seed") {
  TensorPtr theta = scalar_param(1.0);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  TrainTask task;
  task.params = {{"theta", theta}};
  task.loss_fn = [&](Tape& tape, const Example& ex) -> SeqLoss {
    if (ex.row == 7) return SeqLoss{tape.leaf(make_tensor({1}, std::vector<double>{nan})), 1};
    return SeqLoss{tape.leaf(theta), 1};
  };

  // Epoch 1 is clean; epoch 2's second batch holds the poisoned example.
  auto epoch_batches = [](std::size_t epoch) {
    std::vector<std::vector<Example>> batches{{tagged(0)}, {tagged(1)}};
    if (epoch == 2) batches[1][0] = tagged(7);
    return batches;
  };
  std::vector<Example> valid{tagged(0)};

  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.seed = 77;

  try {
    train(task, epoch_batches, valid, cfg);
    FAIL("expected TrainAbortError");
  } catch (const TrainAbortError& e) {
    std::string msg = e.what();
    REQUIRE(msg.find("epoch 2") != std::string::npos);
    REQUIRE(msg.find("batch 1") != std::string::npos);
    REQUIRE(msg.find("seed 77") != std::string::npos);
  }
}

TEST_CASE("non-finite validation loss aborts naming the epoch") {
  TensorPtr theta = scalar_param(1.0);
  const double inf = std::numeric_limits<double>::infinity();

  TrainTask task;
  task.params = {{"theta", theta}};
  task.loss_fn = [&](Tape& tape, const Example& ex) -> SeqLoss {
    if (ex.row >= 1000) return SeqLoss{tape.leaf(make_tensor({1}, std::vector<double>{inf})), 1};
    return SeqLoss{tape.leaf(theta), 1};
  };

  auto epoch_batches = [](std::size_t) { return std::vector<std::vector<Example>>{{tagged(0)}}; };
  std::vector<Example> valid{tagged(1000)};

  TrainConfig cfg;
  cfg.seed = 5;

  try {
    train(task, epoch_batches, valid, cfg);
    FAIL("expected TrainAbortError");
  } catch (const TrainAbortError& e) {
    std::string msg = e.what();
    REQUIRE(msg.find("validation") != std::string::npos);
    REQUIRE(msg.find("epoch 1") != std::string::npos);
    REQUIRE(msg.find("seed 5") != std::string::npos);
  }
}

TEST_CASE("degenerate training configurations are rejected up front") {
  TensorPtr theta = scalar_param(1.0);
  TrainTask task;
  task.params = {{"theta", theta}};
  task.loss_fn = [&](Tape& tape, const Example&) -> SeqLoss {
    return SeqLoss{tape.leaf(theta), 1};
  };
  auto one_batch = [](std::size_t) { return std::vector<std::vector<Example>>{{tagged(0)}}; };
  std::vector<Example> valid{tagged(1000)};

  TrainConfig bad;
  bad.patience = 0;
  REQUIRE_THROWS_AS(train(task, one_batch, valid, bad), ContractError);

  bad = TrainConfig{};
  bad.max_epochs = 0;
  REQUIRE_THROWS_AS(train(task, one_batch, valid, bad), ContractError);

  REQUIRE_THROWS_AS(train(task, one_batch, {}, TrainConfig{}), ContractError);

  auto no_batches = [](std::size_t) { return std::vector<std::vector<Example>>{}; };
  REQUIRE_THROWS_AS(train(task, no_batches, valid, TrainConfig{}), ContractError);

  REQUIRE_THROWS_AS(validation_logppl(task, {}), ContractError);
}

TEST_CASE("identical seeds reproduce a real training run bitwise") {
  // End-to-end determinism over a real model: same init seed, same batches,
  // same epochs - histories and final parameters must match exactly.
  Hyper hy;
  hy.hidden_dim = 4;
  hy.embed_dim = 3;

  std::vector<Example> data;
  for (int i = 0; i < 8; ++i) {
    Example ex;
    int a = 5 + (i % 3);
    int b = 5 + ((i * 2 + 1) % 3);
    ex.sources = {{Vocabulary::kBos, a, b, Vocabulary::kEos}};
    ex.target = {Vocabulary::kBos, b, a, Vocabulary::kEos};
    ex.row = static_cast<std::size_t>(i);
    data.push_back(ex);
  }
  std::vector<Example> valid(data.begin(), data.begin() + 2);

  auto run = [&]() {
    Rng rng(99);
    Seq2SeqModel model;
    model.init(hy, 8, 8, rng);

    TrainTask task;
    task.params = model.params();
    task.loss_fn = [&model](Tape& tape, const Example& ex) {
      return sequence_loss(model, tape, ex.sources[0], ex.target);
    };
    auto epoch_batches = [&](std::size_t) {
      return std::vector<std::vector<Example>>{{data[0], data[1], data[2], data[3]},
                                               {data[4], data[5], data[6], data[7]}};
    };
    TrainConfig cfg;
    cfg.max_epochs = 2;
    TrainResult r = train(task, epoch_batches, valid, cfg);

    std::vector<double> flat;
    for (const NamedParam& p : task.params) {
      flat.insert(flat.end(), p.tensor->data.begin(), p.tensor->data.end());
    }
    return std::make_pair(r, flat);
  };

  auto [r1, flat1] = run();
  auto [r2, flat2] = run();

  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    REQUIRE(r1.history[i].train_loss == r2.history[i].train_loss);
    REQUIRE(r1.history[i].valid_logppl == r2.history[i].valid_logppl);
  }
  REQUIRE(flat1 == flat2);
}
