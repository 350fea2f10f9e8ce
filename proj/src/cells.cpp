#include "topiccap/cells.hpp"

#include <cmath>

namespace topiccap::nn {

namespace {

double fan_in_bound(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Var bind(Tape& t, Param& p, bool frozen) {
  return frozen ? t.leaf_frozen(p) : t.leaf(p);
}

}  // namespace

LstmRefs add_lstm(ParameterSet& ps, const std::string& prefix, int input_dim,
                  int hidden_dim, Rng& rng) {
  const int in = input_dim + hidden_dim;
  const double bound = fan_in_bound(in);
  LstmRefs r;
  r.w = &ps.add(prefix + ".w", Tensor::uniform({4 * hidden_dim, in}, bound, rng));
  r.b = &ps.add(prefix + ".b", Tensor::zeros({4 * hidden_dim}));
  r.input_dim = input_dim;
  r.hidden_dim = hidden_dim;
  return r;
}

LstmRefs lstm_refs(ParameterSet& ps, const std::string& prefix, int input_dim,
                   int hidden_dim) {
  return LstmRefs{&ps.at(prefix + ".w"), &ps.at(prefix + ".b"), input_dim, hidden_dim};
}

std::pair<Var, Var> lstm_cell(Tape& t, const LstmRefs& p, Var x, Var h_prev,
                              Var c_prev, bool frozen) {
  const int n = p.hidden_dim;
  if (t.val(x).rows() != p.input_dim || t.val(h_prev).rows() != n ||
      t.val(c_prev).rows() != n) {
    throw ShapeError("lstm_cell input dims do not match parameters");
  }
  Var xh = t.concat({x, h_prev});
  Var gates = t.add(t.matvec(bind(t, *p.w, frozen), xh), bind(t, *p.b, frozen));
  Var i = t.sigmoid(t.slice(gates, 0, n));
  Var f = t.sigmoid(t.slice(gates, n, n));
  Var g = t.tanh(t.slice(gates, 2 * n, n));
  Var o = t.sigmoid(t.slice(gates, 3 * n, n));
  Var c = t.add(t.mul(f, c_prev), t.mul(i, g));
  Var h = t.mul(o, t.tanh(c));
  return {h, c};
}

GruRefs add_gru(ParameterSet& ps, const std::string& prefix, int input_dim,
                int hidden_dim, Rng& rng) {
  const int in = input_dim + hidden_dim;
  const double bound = fan_in_bound(in);
  GruRefs r;
  r.wg = &ps.add(prefix + ".wg", Tensor::uniform({2 * hidden_dim, in}, bound, rng));
  r.bg = &ps.add(prefix + ".bg", Tensor::zeros({2 * hidden_dim}));
  r.wc = &ps.add(prefix + ".wc", Tensor::uniform({hidden_dim, in}, bound, rng));
  r.bc = &ps.add(prefix + ".bc", Tensor::zeros({hidden_dim}));
  r.input_dim = input_dim;
  r.hidden_dim = hidden_dim;
  return r;
}

GruRefs gru_refs(ParameterSet& ps, const std::string& prefix, int input_dim,
                 int hidden_dim) {
  return GruRefs{&ps.at(prefix + ".wg"), &ps.at(prefix + ".bg"),
                 &ps.at(prefix + ".wc"), &ps.at(prefix + ".bc"), input_dim,
                 hidden_dim};
}

Var gru_cell(Tape& t, const GruRefs& p, Var x, Var h_prev, bool frozen) {
  const int n = p.hidden_dim;
  if (t.val(x).rows() != p.input_dim || t.val(h_prev).rows() != n) {
    throw ShapeError("gru_cell input dims do not match parameters");
  }
  Var xh = t.concat({x, h_prev});
  Var gates = t.add(t.matvec(bind(t, *p.wg, frozen), xh), bind(t, *p.bg, frozen));
  Var z = t.sigmoid(t.slice(gates, 0, n));
  Var r = t.sigmoid(t.slice(gates, n, n));
  Var xrh = t.concat({x, t.mul(r, h_prev)});
  Var cand = t.tanh(t.add(t.matvec(bind(t, *p.wc, frozen), xrh), bind(t, *p.bc, frozen)));
  Var keep = t.mul(z, h_prev);
  Var mix = t.mul(t.affine(z, -1.0, 1.0), cand);
  return t.add(keep, mix);
}

}  // namespace topiccap::nn
