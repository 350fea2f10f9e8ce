#pragma once

#include <string>
#include <utility>

#include "topiccap/tape.hpp"

namespace topiccap::nn {

// Fused 4-gate LSTM. Weight layout: w is [4n x (in+n)] over concat(x, h_prev),
// bias is [4n]; gate row blocks are [i | f | g | o].
struct LstmRefs {
  Param* w = nullptr;
  Param* b = nullptr;
  int input_dim = 0;
  int hidden_dim = 0;
};

LstmRefs add_lstm(ParameterSet& ps, const std::string& prefix, int input_dim,
                  int hidden_dim, Rng& rng);
LstmRefs lstm_refs(ParameterSet& ps, const std::string& prefix, int input_dim,
                   int hidden_dim);

// (h', c') from one step. Inputs are rank-1 vars of dims input_dim / hidden_dim.
std::pair<Var, Var> lstm_cell(Tape& t, const LstmRefs& p, Var x, Var h_prev,
                              Var c_prev, bool frozen = false);

// Single-layer GRU. wg is [2n x (in+n)] for the z and r gates (row blocks
// [z | r]), wc is [n x (in+n)] for the candidate. Update convention:
// h' = z (.) h_prev + (1-z) (.) tanh(wc . concat(x, r (.) h_prev) + bc).
struct GruRefs {
  Param* wg = nullptr;
  Param* bg = nullptr;
  Param* wc = nullptr;
  Param* bc = nullptr;
  int input_dim = 0;
  int hidden_dim = 0;
};

GruRefs add_gru(ParameterSet& ps, const std::string& prefix, int input_dim,
                int hidden_dim, Rng& rng);
GruRefs gru_refs(ParameterSet& ps, const std::string& prefix, int input_dim,
                 int hidden_dim);

Var gru_cell(Tape& t, const GruRefs& p, Var x, Var h_prev, bool frozen = false);

}  // namespace topiccap::nn
