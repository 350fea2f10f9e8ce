#include "topiccap/optim.hpp"

#include <cmath>

namespace topiccap::nn {

Adam::Adam(ParameterSet& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(Tensor::zeros(params[i].value.shape()));
    v_.push_back(Tensor::zeros(params[i].value.shape()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& w = params_[p].value;
    Tensor& g = params_[p].grad;
    Tensor& m = m_[p];
    Tensor& v = v_[p];
    for (std::size_t i = 0; i < w.numel(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    g.fill(0.0);
  }
}

double clip_global_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.grad.numel(); ++i) sq += p.grad[i] * p.grad[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad[i] *= s;
    }
  }
  return norm;
}

}  // namespace topiccap::nn
