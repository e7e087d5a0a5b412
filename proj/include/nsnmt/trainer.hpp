#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nsnmt/autodiff.hpp"
#include "nsnmt/corpus.hpp"
#include "nsnmt/errors.hpp"
#include "nsnmt/nn.hpp"
#include "nsnmt/seq2seq.hpp"

// Optimization loop shared by every model: Adam, global-norm gradient
// clipping, early stopping on validation log-perplexity, best-checkpoint
// restore. Single-threaded and deterministic under a fixed seed.

namespace nsnmt {

// Global L2-norm clipping over ALL parameter gradients jointly. Returns the
// applied scale (1.0 when nothing was clipped, including the all-zero case).
inline double clip_gradients(const std::vector<NamedParam>& params, double clip_norm) {
  if (clip_norm <= 0.0) throw ContractError("clip_gradients: clip_norm must be positive");
  double sq = 0.0;
  for (const NamedParam& p : params) {
    for (double g : p.tensor->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= clip_norm || norm == 0.0) return 1.0;
  const double scale = clip_norm / norm;
  for (const NamedParam& p : params) {
    for (double& g : p.tensor->grad) g *= scale;
  }
  return scale;
}

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam. Gradients are consumed (zeroed) by step().
class Adam {
 public:
  Adam(std::vector<NamedParam> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].tensor->size(), 0.0);
      v_[i].assign(params_[i].tensor->size(), 0.0);
    }
  }

  const std::vector<NamedParam>& params() const { return params_; }
  std::size_t steps() const { return t_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = *params_[i].tensor;
      p.ensure_grad();
      for (std::size_t j = 0; j < p.data.size(); ++j) {
        const double g = p.grad[j];
        m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
        v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        p.data[j] -= cfg_.alpha * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
      p.zero_grad();
    }
  }

 private:
  std::vector<NamedParam> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  double clip_norm = 5.0;
  std::size_t max_epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::size_t patience = 5;  // non-improving epochs tolerated before stopping
  AdamConfig adam;
};

// What the loop needs from a model: the parameters Adam may touch and a loss
// builder for one example. Everything else (expert vs multi-encoder vs
// gating) is the caller's wiring.
struct TrainTask {
  std::vector<NamedParam> params;
  std::function<SeqLoss(Tape&, const Example&)> loss_fn;
};

struct EpochStat {
  std::size_t epoch = 0;       // 1-based
  double train_loss = 0.0;     // mean per-token training NLL
  double valid_logppl = 0.0;   // mean per-token validation NLL
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochStat> history;
  double best_valid = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

inline double validation_logppl(const TrainTask& task, const std::vector<Example>& valid) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const Example& ex : valid) {
    Tape tape(false);
    SeqLoss l = task.loss_fn(tape, ex);
    total += l.loss.v().data[0];
    tokens += l.tokens;
  }
  if (tokens == 0) throw ContractError("validation_logppl: no target tokens");
  return total / static_cast<double>(tokens);
}

// epoch_batches(epoch) yields that epoch's training batches (the caller owns
// shuffling policy; epoch is 1-based). The best checkpoint by validation
// log-perplexity is restored into the parameters before returning, so the
// trained model IS the best epoch's model. on_improve fires while parameters
// hold the newly best values.
inline TrainResult train(const TrainTask& task,
                         const std::function<std::vector<std::vector<Example>>(std::size_t)>& epoch_batches,
                         const std::vector<Example>& valid, const TrainConfig& cfg,
                         const std::function<void(std::size_t, double)>& on_improve = nullptr) {
  if (cfg.patience < 1) throw ContractError("train: patience must be >= 1");
  if (cfg.max_epochs < 1) throw ContractError("train: max_epochs must be >= 1");
  if (valid.empty()) throw ContractError("train: empty validation set");

  Adam adam(task.params, cfg.adam);
  TrainResult result;
  std::vector<std::vector<double>> best_snapshot;
  std::size_t since_improve = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::vector<Example>> batches = epoch_batches(epoch);
    if (batches.empty()) throw ContractError("train: epoch " + std::to_string(epoch) + " has no batches");
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Tape tape;
      Var loss;
      std::size_t tokens = 0;
      for (std::size_t e = 0; e < batches[b].size(); ++e) {
        SeqLoss l = task.loss_fn(tape, batches[b][e]);
        loss = e == 0 ? l.loss : add(loss, l.loss);
        tokens += l.tokens;
      }
      const double loss_value = loss.v().data[0];
      if (!std::isfinite(loss_value)) {
        throw TrainAbortError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(b) + " (seed " + std::to_string(cfg.seed) + ")");
      }
      epoch_loss += loss_value;
      epoch_tokens += tokens;
      tape.backward(loss);
      clip_gradients(task.params, cfg.clip_norm);
      adam.step();
    }

    EpochStat stat;
    stat.epoch = epoch;
    stat.train_loss = epoch_tokens ? epoch_loss / static_cast<double>(epoch_tokens) : 0.0;
    stat.valid_logppl = validation_logppl(task, valid);
    if (!std::isfinite(stat.valid_logppl)) {
      throw TrainAbortError("non-finite validation loss at epoch " + std::to_string(epoch) + " (seed " +
                            std::to_string(cfg.seed) + ")");
    }
    stat.improved = stat.valid_logppl < result.best_valid;
    result.history.push_back(stat);
    result.epochs_run = epoch;

    if (stat.improved) {
      result.best_valid = stat.valid_logppl;
      result.best_epoch = epoch;
      since_improve = 0;
      best_snapshot.clear();
      for (const NamedParam& p : task.params) best_snapshot.push_back(p.tensor->data);
      if (on_improve) on_improve(epoch, stat.valid_logppl);
    } else {
      ++since_improve;
      if (since_improve >= cfg.patience) break;
    }
  }

  for (std::size_t i = 0; i < task.params.size(); ++i) {
    task.params[i].tensor->data = best_snapshot[i];
    task.params[i].tensor->zero_grad();
  }
  return result;
}

// Plain-text training history table.
inline std::string format_history(const TrainResult& r) {
  std::string out = "epoch  train_loss  valid_logppl  best\n";
  char buf[96];
  for (const EpochStat& s : r.history) {
    std::snprintf(buf, sizeof(buf), "%5zu  %10.6f  %12.6f  %s\n", s.epoch, s.train_loss, s.valid_logppl,
                  s.improved ? "*" : "");
    out += buf;
  }
  return out;
}

}  // namespace nsnmt
