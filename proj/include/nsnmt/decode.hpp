#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "nsnmt/corpus.hpp"
#include "nsnmt/errors.hpp"

// Decoding loops shared by every model kind. A Session wraps one source
// sentence (or tuple) after encoding and exposes:
//
//   using State = ...;                 // copyable decoder state
//   std::size_t vocab_size() const;
//   State initial() const;
//   std::pair<std::vector<double>, State> step(const State&, int y_prev);
//
// step returns the next-token probability vector. Decoders never emit <PAD>,
// <BOS>, or <NULL>; <EOS> terminates and is stripped from the returned
// sequence. max_len bounds the number of real tokens emitted; min_len keeps
// <EOS> off the table until that many real tokens are out, so callers that
// must produce output (one line per input row) can rule out the empty
// hypothesis without touching the ranking of the rest.

namespace nsnmt {

inline bool emission_banned(int id) {
  return id == Vocabulary::kPad || id == Vocabulary::kBos || id == Vocabulary::kNull;
}

template <typename Session>
std::vector<int> greedy_decode(Session& session, std::size_t max_len, std::size_t min_len = 0) {
  if (max_len < 1) throw ContractError("greedy_decode: max_len must be >= 1");
  typename Session::State state = session.initial();
  std::vector<int> out;
  int y_prev = Vocabulary::kBos;
  while (out.size() < max_len) {
    auto [dist, next] = session.step(state, y_prev);
    int best = -1;
    for (int id = 0; id < static_cast<int>(dist.size()); ++id) {
      if (emission_banned(id)) continue;
      if (id == Vocabulary::kEos && out.size() < min_len) continue;
      if (best < 0 || dist[static_cast<std::size_t>(id)] > dist[static_cast<std::size_t>(best)]) best = id;
    }
    if (best < 0 || best == Vocabulary::kEos) break;
    out.push_back(best);
    y_prev = best;
    state = std::move(next);
  }
  return out;
}

// Length-unnormalized beam search. Each step ranks every expansion of every
// live hypothesis (<EOS> completions included) by total log-probability and
// keeps the top `width`; kept completions retire to the finished set, and
// hypotheses reaching max_len real tokens retire as-is without an <EOS>
// term. The search stops once `width` hypotheses have finished or no live
// hypothesis remains; the best finished hypothesis wins, with ties broken by
// earlier completion (fewer tokens), then lexicographically lower token ids.
//
// width == 1 reproduces greedy_decode; width >= V^max_len enumerates the
// whole candidate space, giving exact argmax decoding on tiny problems.
template <typename Session>
std::vector<int> beam_decode(Session& session, std::size_t width, std::size_t max_len,
                             std::size_t min_len = 0) {
  if (width < 1) throw ContractError("beam_decode: width must be >= 1");
  if (max_len < 1) throw ContractError("beam_decode: max_len must be >= 1");

  struct Hyp {
    std::vector<int> tokens;
    double logp = 0.0;
    typename Session::State state;
    int y_prev = Vocabulary::kBos;
    bool finished = false;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.logp != b.logp) return a.logp > b.logp;
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    return a.tokens < b.tokens;
  };

  std::vector<Hyp> live;
  live.push_back(Hyp{{}, 0.0, session.initial(), Vocabulary::kBos, false});
  std::vector<Hyp> done;

  while (!live.empty() && done.size() < width) {
    std::vector<Hyp> candidates;
    for (Hyp& hyp : live) {
      auto [dist, next] = session.step(hyp.state, hyp.y_prev);
      for (int id = 0; id < static_cast<int>(dist.size()); ++id) {
        if (emission_banned(id)) continue;
        if (id == Vocabulary::kEos && hyp.tokens.size() < min_len) continue;
        const double p = dist[static_cast<std::size_t>(id)];
        if (p <= 0.0) continue;
        Hyp cand;
        cand.logp = hyp.logp + std::log(p);
        if (id == Vocabulary::kEos) {
          cand.tokens = hyp.tokens;
          cand.finished = true;
        } else {
          cand.tokens = hyp.tokens;
          cand.tokens.push_back(id);
          if (cand.tokens.size() >= max_len) {
            cand.finished = true;
          } else {
            cand.state = next;
            cand.y_prev = id;
          }
        }
        candidates.push_back(std::move(cand));
      }
    }
    std::sort(candidates.begin(), candidates.end(), better);
    if (candidates.size() > width) candidates.resize(width);
    live.clear();
    for (Hyp& c : candidates) {
      if (c.finished) {
        done.push_back(std::move(c));
      } else {
        live.push_back(std::move(c));
      }
    }
  }

  if (done.empty()) return {};
  const Hyp* best = &done[0];
  for (const Hyp& d : done) {
    if (better(d, *best)) best = &d;
  }
  return best->tokens;
}

}  // namespace nsnmt
