#pragma once

#include <algorithm>
#include <vector>

#include "topiccap/errors.hpp"

namespace topiccap::captioner {

// Stepper concept for sequence decoding:
//   struct State { ...; std::vector<double> logprobs; };
//   State start();                          // after consuming BOS
//   State advance(const State&, int token); // consume one more token
// State::logprobs holds log P(next token | prefix).

template <typename Stepper>
std::vector<int> greedy_decode_generic(Stepper& model, int eos_id,
                                       const std::vector<int>& allowed, int max_len) {
  if (max_len < 1 || allowed.empty()) throw ShapeError("greedy decode: bad arguments");
  auto state = model.start();
  std::vector<int> out;
  for (int step = 0; step < max_len; ++step) {
    int best = allowed[0];
    for (int tok : allowed) {
      if (state.logprobs[tok] > state.logprobs[best]) best = tok;
    }
    if (best == eos_id) break;
    out.push_back(best);
    if (step + 1 < max_len) state = model.advance(state, best);
  }
  return out;
}

// Beam search ranked by length-normalized sum of log-probabilities
// (score / emitted length, EOS counted when a hypothesis completes).
// Returns the best completed hypothesis, or the best partial one if nothing
// completed within max_len.
template <typename Stepper>
std::vector<int> beam_search_generic(Stepper& model, int eos_id,
                                     const std::vector<int>& allowed, int beam,
                                     int max_len) {
  if (beam < 1 || max_len < 1 || allowed.empty()) {
    throw ShapeError("beam search: bad arguments");
  }

  struct Hyp {
    typename Stepper::State state;
    std::vector<int> tokens;
    double score = 0.0;
  };
  struct Done {
    std::vector<int> tokens;
    double normalized = 0.0;
  };

  std::vector<Hyp> live;
  live.push_back({model.start(), {}, 0.0});
  std::vector<Done> done;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    struct Cand {
      std::size_t hyp;
      int token;
      double score;
    };
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      for (int tok : allowed) {
        cands.push_back({h, tok, live[h].score + live[h].state.logprobs[tok]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.score > b.score; });
    if (static_cast<int>(cands.size()) > beam) cands.resize(beam);

    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      const Hyp& src = live[c.hyp];
      if (c.token == eos_id) {
        const double len = static_cast<double>(src.tokens.size()) + 1.0;
        done.push_back({src.tokens, c.score / len});
      } else {
        Hyp h;
        h.tokens = src.tokens;
        h.tokens.push_back(c.token);
        h.score = c.score;
        if (step + 1 < max_len) h.state = model.advance(src.state, c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  const Done* best = nullptr;
  for (const Done& d : done) {
    if (best == nullptr || d.normalized > best->normalized) best = &d;
  }
  if (best != nullptr) return best->tokens;

  const Hyp* partial = nullptr;
  double partial_norm = 0.0;
  for (const Hyp& h : live) {
    const double norm = h.score / static_cast<double>(h.tokens.size());
    if (partial == nullptr || norm > partial_norm) {
      partial = &h;
      partial_norm = norm;
    }
  }
  return partial != nullptr ? partial->tokens : std::vector<int>{};
}

}  // namespace topiccap::captioner
