#pragma once

#include <functional>
#include <vector>

#include "svlab/common.hpp"
#include "svlab/tensor.hpp"

namespace svlab {

inline constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

// Diagonal Gaussian: loc u, scale s, both length D_z, s > 0 elementwise.
struct DiagGaussian {
  std::vector<double> loc;
  std::vector<double> scale;

  DiagGaussian() = default;
  DiagGaussian(std::vector<double> u, std::vector<double> s);

  static DiagGaussian standard(int dim) {
    return DiagGaussian(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
  }
  int dim() const { return static_cast<int>(loc.size()); }
};

// Uniform mixture of diagonal Gaussians; weights are implicit 1/C.
struct MixtureOfGaussians {
  std::vector<DiagGaussian> components;
  int dim() const { return components.empty() ? 0 : components.front().dim(); }
  int size() const { return static_cast<int>(components.size()); }
};

struct KernelConfig {
  enum class Kind { GaussianRbf } kind = Kind::GaussianRbf;
  double bandwidth = 1.0;  // > 0
};

// z = loc + scale .* noise
std::vector<double> reparam_sample(const DiagGaussian& q, const std::vector<double>& noise);

// Closed-form KL(q || p) in nats, summed over dimensions.
double kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p);

double log_prob(const DiagGaussian& d, const std::vector<double>& z);
// log-sum-exp over component log-densities minus log C.
double log_prob(const MixtureOfGaussians& m, const std::vector<double>& z);

// Monte-Carlo rate estimate (1/n) sum_i [log q(z_i) - log p(z_i)] with
// reparameterized z_i.
double mc_rate(const DiagGaussian& q,
               const std::function<double(const std::vector<double>&)>& prior_log_prob,
               int n_samples, Rng& rng);

// Uniform component choice, then a reparameterized component draw.
std::vector<double> sample_mixture(const MixtureOfGaussians& m, Rng& rng);

// Unbiased U-statistic MMD estimator; may be slightly negative.
double mmd(const std::vector<std::vector<double>>& xs,
           const std::vector<std::vector<double>>& ys, const KernelConfig& kernel);

// Median heuristic over the pooled sample: bandwidth such that
// 2*bw^2 = median of squared pairwise distances. Falls back to 1.0 when the
// median vanishes.
double median_heuristic_bandwidth(const std::vector<std::vector<double>>& xs,
                                  const std::vector<std::vector<double>>& ys);

// ----- Tape-recorded counterparts used inside training graphs. -----
// Row convention: z is (B, D_z); loc/scale are (B, D_z) or broadcastable
// (1, D_z); all return (B, 1) per-sentence columns unless noted.

Var reparam_sample_rows(Tape& t, Var loc, Var scale, const Tensor& noise);
Var gaussian_log_prob_rows(Tape& t, Var z, Var loc, Var scale);
// KL(N(loc, scale) || N(0, I)) per row, closed form.
Var kl_standard_rows(Tape& t, Var loc, Var scale);
// comp_loc/comp_scale are (C, D_z); uniform mixture density per row of z.
Var mixture_log_prob_rows(Tape& t, Var z, Var comp_loc, Var comp_scale);
// Monte-Carlo rate per row against an arbitrary prior log-density builder.
Var mc_rate_rows(Tape& t, Var loc, Var scale,
                 const std::function<Var(Tape&, Var)>& prior_log_prob_rows, int n_samples,
                 Rng& rng);

}  // namespace svlab
