#pragma once

#include <cstdint>
#include <vector>

#include "topiccap/tape.hpp"

namespace topiccap::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by parameter index, so
// the ParameterSet must not grow after construction.
class Adam {
 public:
  explicit Adam(ParameterSet& params, AdamConfig cfg = {});

  // Applies one update from the accumulated gradients, then zeroes them.
  void step();

  std::int64_t steps_taken() const { return t_; }

 private:
  ParameterSet& params_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(ParameterSet& params, double max_norm);

}  // namespace topiccap::nn
