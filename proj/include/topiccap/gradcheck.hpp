#pragma once

#include <functional>
#include <string>

#include "topiccap/tape.hpp"

namespace topiccap::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int coords_checked = 0;
  int coords_below_floor = 0;  // excluded as FD-noise-dominated
};

// Central-difference check of analytic gradients. build_loss must construct
// the same deterministic scalar graph on any fresh tape, reading parameter
// values through Tape::leaf. Tensors larger than max_coords_per_tensor are
// subsampled with a seeded pick. Relative error per coordinate is
// |a - n| / max(1e-8, |a| + |n|).
//
// Coordinates with |a| + |n| < min_signal are excluded from max_rel_err:
// the central difference carries rounding noise of roughly ulp(f)/(2*eps)
// (~1e-11 for unit-scale losses at eps = 1e-5), so below ~1e-7 the relative
// comparison measures noise, not gradient correctness. The default floor of
// 1e-5 sits two orders above that noise and far below any trainable signal.
GradCheckReport grad_check(ParameterSet& params,
                           const std::function<Var(Tape&)>& build_loss,
                           double eps = 1e-5, int max_coords_per_tensor = 24,
                           std::uint64_t seed = 7, double min_signal = 1e-5);

}  // namespace topiccap::nn
