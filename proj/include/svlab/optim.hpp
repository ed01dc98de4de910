#pragma once

#include <string>
#include <vector>

#include "svlab/tensor.hpp"

namespace svlab {

// A trainable tensor together with its Adam moment buffers. Models own their
// parameters and hand out pointers for the optimizer; the tape sees them as
// leaves re-created per minibatch.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;  // first moment
  Tensor v;  // second moment

  Param() = default;
  Param(std::string n, Tensor val)
      : name(std::move(n)),
        value(std::move(val)),
        grad(value.rows(), value.cols()),
        m(value.rows(), value.cols()),
        v(value.rows(), value.cols()) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

double global_grad_norm(const std::vector<Param*>& params);

// If the global L2 norm exceeds max_norm, rescales all gradients so the norm
// equals max_norm. Returns the pre-clip norm.
double clip_global_norm(std::vector<Param*>& params, double max_norm);

class Adam {
 public:
  Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
       double weight_decay = 0.0);

  // Standard bias-corrected Adam update from the gradients stored in each
  // Param. Weight decay is applied as an L2 term folded into the gradient.
  void step(std::vector<Param*>& params);

  long long step_count() const { return t_; }
  double lr() const { return lr_; }
  void set_weight_decay(double wd) { weight_decay_ = wd; }
  double weight_decay() const { return weight_decay_; }

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  long long t_ = 0;
};

}  // namespace svlab
