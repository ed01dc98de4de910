#include "svlab/optim.hpp"

#include <cmath>

namespace svlab {

double global_grad_norm(const std::vector<Param*>& params) {
  double sq = 0.0;
  for (const Param* p : params) {
    for (double g : p->grad.data) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_global_norm(std::vector<Param*>& params, double max_norm) {
  check(max_norm > 0.0, "clip_global_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (Param* p : params) {
      for (double& g : p->grad.data) g *= scale;
    }
  }
  return norm;
}

Adam::Adam(double lr, double beta1, double beta2, double eps, double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  check(lr > 0.0, "Adam: learning rate must be positive");
  check(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
        "Adam: betas must lie in [0, 1)");
}

void Adam::step(std::vector<Param*>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      double g = p->grad.data[i];
      if (weight_decay_ != 0.0) g += weight_decay_ * p->value.data[i];
      p->m.data[i] = beta1_ * p->m.data[i] + (1.0 - beta1_) * g;
      p->v.data[i] = beta2_ * p->v.data[i] + (1.0 - beta2_) * g * g;
      const double mhat = p->m.data[i] / bc1;
      const double vhat = p->v.data[i] / bc2;
      p->value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace svlab
