#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svlab/common.hpp"

namespace svlab {

// ---------------------------------------------------------------------------
// Search space
// ---------------------------------------------------------------------------

enum class ParamScale { Linear, Log10 };

struct ParamSpec {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  ParamScale scale = ParamScale::Linear;
  bool integral = false;
};

// Box of tunable parameters. All surrogate math happens in the unit cube;
// points are mapped to native values only when the objective is called, so
// tuning behaves identically under affine rescaling of the box.
struct SearchSpace {
  std::vector<ParamSpec> params;

  int dim() const { return static_cast<int>(params.size()); }
  void validate() const;
  // unit in [0,1]^d -> native values (log10 interpolation on log-scale axes,
  // rounding + clamping on integral axes).
  std::vector<double> to_native(const std::vector<double>& unit) const;
  // Inverse map (integral axes round-trip to the cell center of their value).
  std::vector<double> to_unit(const std::vector<double>& native) const;
};

// ---------------------------------------------------------------------------
// Gaussian-process surrogate
// ---------------------------------------------------------------------------

// Matern-5/2 hyperparameters with per-dimension (ARD) lengthscales. signal
// and noise are variances.
struct KernelParams {
  double signal = 1.0;
  std::vector<double> lengthscales;
  double noise = 1e-4;
};

// k(a, b) = signal * (1 + sqrt(5) d + 5 d^2 / 3) exp(-sqrt(5) d) where d is
// the lengthscale-scaled Euclidean distance.
double matern52(const std::vector<double>& a, const std::vector<double>& b,
                const KernelParams& k);

struct GpSurrogate {
  int dim = 0;
  std::vector<std::vector<double>> X;  // observed points, unit cube
  std::vector<double> y;               // raw objective values (minimized)
  KernelParams kernel;
  // Nonempty after an MCMC fit; the acquisition then averages over these.
  std::vector<KernelParams> kernel_samples;

  explicit GpSurrogate(int dimension);
  int size() const { return static_cast<int>(y.size()); }
  void add(const std::vector<double>& point, double value);
  // Standardization constants applied to y before any kernel math.
  double y_mean() const;
  double y_std() const;  // population std; 1 when degenerate
  double best_y() const;
};

struct GpPosterior {
  double mean = 0.0;      // original y units
  double variance = 0.0;  // original y^2 units, noise-free latent prediction
};

// Exact GP conditional under s.kernel. Throws NumericalError with a condition
// report if the Cholesky factorization fails even after jitter escalation.
GpPosterior gp_posterior(const GpSurrogate& s, const std::vector<double>& x);

// Expected improvement for minimization: E[max(0, best - Y)] with
// Y ~ N(mean, variance). Zero variance degenerates to max(0, best - mean).
double expected_improvement(double mean, double variance, double best_y);

// Acquisition used by the suggestion loop: expected improvement under the
// fitted kernel, or the average over retained MCMC kernel samples.
double acquisition(const GpSurrogate& s, const std::vector<double>& x);

enum class FitMethod { MarginalLikelihood, SliceMcmc };

// Fits kernel hyperparameters on standardized y. The default maximizes the
// log marginal likelihood with multi-start projected gradient ascent and
// backtracking line search; SliceMcmc retains 10 posterior samples after 100
// burn-in sweeps of coordinate-wise slice sampling. `lml_trace`, when given,
// receives the accepted-step likelihood values of the winning start.
GpSurrogate fit_kernel(const GpSurrogate& s,
                       FitMethod method = FitMethod::MarginalLikelihood,
                       std::uint64_t seed = 0,
                       std::vector<double>* lml_trace = nullptr);

// Next point to evaluate, in the unit cube. The first five calls (by history
// size) walk a seeded Latin hypercube; afterwards the acquisition is
// maximized over 4096 Halton candidates plus a local polish of the best 8.
std::vector<double> suggest_next(const GpSurrogate& s, const SearchSpace& space,
                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Tuning loop
// ---------------------------------------------------------------------------

struct TuneObservation {
  std::vector<double> unit;
  std::vector<double> native;
  double value = 0.0;  // raw objective value; meaningless when failed
  double wall_seconds = 0.0;
  bool failed = false;
};

struct TuneResult {
  std::vector<double> best_unit;
  std::vector<double> best_native;
  double best_value = 0.0;
  std::vector<TuneObservation> history;
};

using TuneObjective = std::function<double(const std::vector<double>& native)>;

// Serial suggest -> evaluate -> record loop until `iterations` total
// observations exist (resumed history counts toward the budget). Failed
// evaluations (throw or non-finite return) enter the surrogate as the worst
// observed value plus one standard deviation. Throws NumericalError when
// every evaluation failed. `on_observation`, when given, sees the full
// history after each new evaluation (for mid-run persistence).
using TuneProgress = std::function<void(const std::vector<TuneObservation>&)>;
TuneResult tune(const TuneObjective& objective, const SearchSpace& space,
                int iterations, std::uint64_t seed,
                FitMethod method = FitMethod::MarginalLikelihood,
                const std::vector<TuneObservation>& resume = {},
                const TuneProgress& on_observation = {});

// History persistence: one JSON object per line (point, value, wall time).
void save_tune_history(const std::string& path,
                       const std::vector<TuneObservation>& history);
std::vector<TuneObservation> load_tune_history(const std::string& path);

}  // namespace svlab
