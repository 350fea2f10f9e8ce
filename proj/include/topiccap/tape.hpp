#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "topiccap/tensor.hpp"

namespace topiccap::nn {

// One named trainable tensor. `grad` persists across tapes and accumulates
// on every backward() until zero_grad().
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Ordered collection of parameters with unique names. Addresses of contained
// Params are stable for the lifetime of the set.
class ParameterSet {
 public:
  Param& add(const std::string& name, Tensor init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return slots_.size(); }
  Param& operator[](std::size_t i) { return slots_[i]; }
  const Param& operator[](std::size_t i) const { return slots_[i]; }

  void zero_grad();
  std::size_t total_elements() const;

  auto begin() { return slots_.begin(); }
  auto end() { return slots_.end(); }
  auto begin() const { return slots_.begin(); }
  auto end() const { return slots_.end(); }

 private:
  std::deque<Param> slots_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape. Single-threaded; one tape per forward pass.
// Every op validates shapes on entry and finiteness of its output.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var constant(Tensor v);               // no gradient flows out
  Var leaf(Param& p);                   // gradient accumulates into p.grad
  Var leaf_frozen(const Param& p);      // parameter value, gradient discarded

  // Linear algebra.
  Var matmul(Var a, Var b);             // [r,k]x[k,c] -> [r,c]
  Var matmul_nt(Var a, Var b);          // A * B^T: [r,k]x[c,k] -> [r,c]
  Var matvec(Var m, Var x);             // [r,k]x[k] -> [r]
  Var vecmat(Var x, Var m);             // x^T M: [r],[r,c] -> [c]

  // Elementwise / structural.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var affine(Var a, double k, double c);  // k*a + c
  Var scale(Var a, double k) { return affine(a, k, 0.0); }
  Var add_rowvec(Var m, Var v);         // [r,c] + broadcast [c]
  Var concat(const std::vector<Var>& parts);  // rank-1 only
  Var slice(Var a, int offset, int len);      // rank-1 only
  Var embedding_col(Var e, int col);    // column of [m,K]
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var log(Var a);

  // Softmax family (max-subtracted).
  Var softmax(Var a);                   // rank-1
  Var log_softmax(Var a);               // rank-1
  Var softmax_rows(Var a);              // per-row simplex of [r,c]
  Var softmax_cols(Var a);              // per-column simplex of [r,c]

  // Reductions.
  Var row_sums(Var a);                  // [r,c] -> [r]
  Var sum(Var a);                       // -> scalar
  Var mean(Var a);                      // -> scalar
  Var pick(Var a, int i);               // rank-1 element -> scalar
  Var div_by_scalar(Var a, Var s);      // elementwise a / s, s scalar

  // KL(p || q) with constant target q: q is floored at 1e-8 and renormalized;
  // terms with p_c <= 0 contribute zero. Returns a scalar.
  Var kl_const_q(Var p, const Tensor& q);

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad_of(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse pass from a scalar loss. Node gradients are reset first, then
  // parameter gradients receive one accumulation per call.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Param* param = nullptr;
    std::function<void(Tape&, int)> back;  // reads nodes_[id].grad, adds to parents
  };

  int push(Tensor value, std::function<void(Tape&, int)> back, const char* op);
  Tensor& g(int id) { return nodes_[id].grad; }

  // Deque keeps val()/grad_of() references stable while the tape grows.
  std::deque<Node> nodes_;
  // Each parameter is materialized once per tape; repeated binds share the
  // node (and its gradient accumulator).
  std::unordered_map<const Param*, int> leaf_cache_;
  std::unordered_map<const Param*, int> frozen_cache_;
};

// Teacher-forced sequence cross-entropy: mean over non-ignored positions of
// -log softmax(logits[t])[target[t]]. Throws if every position is ignored.
Var cross_entropy(Tape& t, const std::vector<Var>& logits,
                  const std::vector<int>& targets, int ignore_id = -1);

// Plain-value KL with the same floor/renormalize/zero-term conventions as
// Tape::kl_const_q.
double kl_divergence(const Tensor& p, const Tensor& q);

}  // namespace topiccap::nn
