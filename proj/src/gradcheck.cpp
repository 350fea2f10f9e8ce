#include "topiccap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "topiccap/rng.hpp"

namespace topiccap::nn {

GradCheckReport grad_check(ParameterSet& params,
                           const std::function<Var(Tape&)>& build_loss,
                           double eps, int max_coords_per_tensor,
                           std::uint64_t seed, double min_signal) {
  params.zero_grad();
  {
    Tape t;
    Var loss = build_loss(t);
    t.backward(loss);
  }

  auto eval = [&]() {
    Tape t;
    return t.val(build_loss(t)).item();
  };

  Rng rng(seed);
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Param& slot = params[p];
    const std::size_t n = slot.value.numel();
    std::vector<std::size_t> coords;
    if (n <= static_cast<std::size_t>(max_coords_per_tensor)) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords_per_tensor; ++i) {
        coords.push_back(rng.uniform_int(n));
      }
    }
    for (std::size_t i : coords) {
      const double saved = slot.value[i];
      slot.value[i] = saved + eps;
      const double fp = eval();
      slot.value[i] = saved - eps;
      const double fm = eval();
      slot.value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = slot.grad[i];
      const double signal = std::abs(analytic) + std::abs(numeric);
      if (signal < min_signal) {
        ++report.coords_below_floor;
        continue;
      }
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, signal);
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = slot.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace topiccap::nn
