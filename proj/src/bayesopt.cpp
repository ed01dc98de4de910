#include "svlab/bayesopt.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace svlab {
namespace {

using EMat = Eigen::MatrixXd;
using EVec = Eigen::VectorXd;

constexpr double kSqrt5 = 2.23606797749978969;
constexpr double kLog2Pi_ = 1.83787706640934548;
constexpr int kColdStartPoints = 5;
constexpr int kHaltonCandidates = 4096;
constexpr int kPolishTop = 8;
constexpr int kMcmcBurnIn = 100;
constexpr int kMcmcRetained = 10;

// Hyperparameter box in log space: theta = [log signal, log l_1..d, log noise].
constexpr double kLogSignalLo = -13.815510557964274;  // 1e-6
constexpr double kLogSignalHi = 6.907755278982137;    // 1e3
constexpr double kLogLenLo = -4.605170185988091;      // 1e-2
constexpr double kLogLenHi = 4.605170185988092;       // 1e2
constexpr double kLogNoiseLo = -18.420680743952367;   // 1e-8
constexpr double kLogNoiseHi = 2.302585092994046;     // 1e1

double norm_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }
double norm_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

std::vector<double> pack_theta(const KernelParams& k) {
  std::vector<double> th;
  th.push_back(std::log(k.signal));
  for (double l : k.lengthscales) th.push_back(std::log(l));
  th.push_back(std::log(k.noise));
  return th;
}

KernelParams unpack_theta(const std::vector<double>& th) {
  KernelParams k;
  k.signal = std::exp(th.front());
  for (std::size_t i = 1; i + 1 < th.size(); ++i) k.lengthscales.push_back(std::exp(th[i]));
  k.noise = std::exp(th.back());
  return k;
}

void clamp_theta(std::vector<double>& th) {
  th.front() = std::clamp(th.front(), kLogSignalLo, kLogSignalHi);
  for (std::size_t i = 1; i + 1 < th.size(); ++i) th[i] = std::clamp(th[i], kLogLenLo, kLogLenHi);
  th.back() = std::clamp(th.back(), kLogNoiseLo, kLogNoiseHi);
}

EMat kernel_matrix(const std::vector<std::vector<double>>& X, const KernelParams& k) {
  const int n = static_cast<int>(X.size());
  EMat K(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = matern52(X[i], X[j], k);
      K(i, j) = v;
      K(j, i) = v;
    }
    K(i, i) += k.noise;
  }
  return K;
}

// Cholesky with escalating diagonal jitter; reports conditioning on failure.
Eigen::LLT<EMat> robust_chol(const EMat& K) {
  const int n = static_cast<int>(K.rows());
  double base = K.diagonal().mean();
  if (!(base > 0.0)) base = 1.0;
  static const double kJitters[] = {0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2};
  for (double j : kJitters) {
    EMat Kj = K;
    Kj.diagonal().array() += j * base;
    Eigen::LLT<EMat> llt(Kj);
    if (llt.info() == Eigen::Success) return llt;
  }
  Eigen::SelfAdjointEigenSolver<EMat> es(K);
  std::ostringstream msg;
  msg << "gp: Cholesky factorization failed for " << n << "x" << n
      << " kernel matrix after jitter up to " << 1e-2 * base;
  if (es.info() == Eigen::Success) {
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    msg << "; eigenvalue range [" << lo << ", " << hi << "], condition estimate "
        << (lo != 0.0 ? hi / std::abs(lo) : std::numeric_limits<double>::infinity());
  }
  throw NumericalError(msg.str());
}

EVec standardized_y(const GpSurrogate& s) {
  const double m = s.y_mean();
  const double sd = s.y_std();
  EVec yt(s.size());
  for (int i = 0; i < s.size(); ++i) yt(i) = (s.y[i] - m) / sd;
  return yt;
}

// Factored GP ready for repeated posterior queries.
struct GpModel {
  const GpSurrogate* s = nullptr;
  KernelParams k;
  Eigen::LLT<EMat> llt;
  EVec alpha;
  double ym = 0.0, ysd = 1.0;

  GpModel(const GpSurrogate& surrogate, const KernelParams& kernel)
      : s(&surrogate), k(kernel) {
    llt = robust_chol(kernel_matrix(surrogate.X, kernel));
    ym = surrogate.y_mean();
    ysd = surrogate.y_std();
    alpha = llt.solve(standardized_y(surrogate));
  }

  GpPosterior at(const std::vector<double>& x) const {
    const int n = s->size();
    EVec kv(n);
    for (int i = 0; i < n; ++i) kv(i) = matern52(x, s->X[i], k);
    const double mu = kv.dot(alpha);
    const EVec v = llt.matrixL().solve(kv);
    const double var = std::max(0.0, k.signal - v.squaredNorm());
    return {ym + ysd * mu, ysd * ysd * var};
  }
};

// Log marginal likelihood of standardized y; -1e300 when not factorable.
double lml_value(const std::vector<std::vector<double>>& X, const EVec& yt,
                 const KernelParams& k) {
  const EMat K = kernel_matrix(X, k);
  Eigen::LLT<EMat> llt(K);
  if (llt.info() != Eigen::Success) return -1e300;
  const EVec alpha = llt.solve(yt);
  double logdet = 0.0;
  const auto& L = llt.matrixLLT();
  for (int i = 0; i < K.rows(); ++i) logdet += std::log(L(i, i));
  return -0.5 * yt.dot(alpha) - logdet - 0.5 * K.rows() * kLog2Pi_;
}

// Value and gradient with respect to theta (log-space parameters).
double lml_with_grad(const std::vector<std::vector<double>>& X, const EVec& yt,
                     const std::vector<double>& theta, std::vector<double>& grad) {
  const KernelParams k = unpack_theta(theta);
  const int n = static_cast<int>(X.size());
  const int d = static_cast<int>(k.lengthscales.size());
  grad.assign(theta.size(), 0.0);

  EMat Kf(n, n), dist(n, n);
  std::vector<EMat> u(d, EMat(n, n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double d2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const double diff = (X[i][a] - X[j][a]) / k.lengthscales[a];
        const double val = diff * diff;
        u[a](i, j) = val;
        u[a](j, i) = val;
        d2 += val;
      }
      const double dd = std::sqrt(d2);
      dist(i, j) = dd;
      dist(j, i) = dd;
      const double kf = k.signal * (1.0 + kSqrt5 * dd + 5.0 * d2 / 3.0) * std::exp(-kSqrt5 * dd);
      Kf(i, j) = kf;
      Kf(j, i) = kf;
    }
  }
  EMat K = Kf;
  K.diagonal().array() += k.noise;
  Eigen::LLT<EMat> llt(K);
  if (llt.info() != Eigen::Success) return -1e300;
  const EVec alpha = llt.solve(yt);
  const EMat Kinv = llt.solve(EMat::Identity(n, n));
  const EMat A = alpha * alpha.transpose() - Kinv;

  double logdet = 0.0;
  const auto& L = llt.matrixLLT();
  for (int i = 0; i < n; ++i) logdet += std::log(L(i, i));
  const double lml = -0.5 * yt.dot(alpha) - logdet - 0.5 * n * kLog2Pi_;

  grad.front() = 0.5 * (A.array() * Kf.array()).sum();
  grad.back() = 0.5 * k.noise * A.trace();
  for (int a = 0; a < d; ++a) {
    EMat dK =
        (k.signal * (5.0 / 3.0) * (1.0 + kSqrt5 * dist.array()) * (-kSqrt5 * dist.array()).exp() *
         u[a].array())
            .matrix();
    grad[1 + a] = 0.5 * (A.array() * dK.array()).sum();
  }
  return lml;
}

// Projected gradient ascent with backtracking; trace receives accepted values.
double ascend(const std::vector<std::vector<double>>& X, const EVec& yt,
              std::vector<double>& theta, std::vector<double>* trace) {
  clamp_theta(theta);
  std::vector<double> grad, g2;
  double lml = lml_with_grad(X, yt, theta, grad);
  if (trace) trace->push_back(lml);
  for (int iter = 0; iter < 120; ++iter) {
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    if (gmax < 1e-8) break;
    double step = 1.0 / std::max(1.0, gmax);
    bool improved = false;
    for (int bt = 0; bt < 30; ++bt) {
      std::vector<double> th2 = theta;
      for (std::size_t i = 0; i < th2.size(); ++i) th2[i] += step * grad[i];
      clamp_theta(th2);
      if (th2 == theta) {
        step *= 0.5;
        continue;
      }
      const double l2 = lml_with_grad(X, yt, th2, g2);
      if (l2 > lml + 1e-12) {
        theta = th2;
        lml = l2;
        grad = g2;
        if (trace) trace->push_back(lml);
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  return lml;
}

double log_prior(const std::vector<double>& theta) {
  // Weakly informative log-normal priors on signal, lengthscales, noise.
  double lp = -0.5 * theta.front() * theta.front();
  for (std::size_t i = 1; i + 1 < theta.size(); ++i) {
    const double c = theta[i] - std::log(0.5);
    lp += -0.5 * c * c;
  }
  const double cn = (theta.back() - std::log(1e-3)) / 2.0;
  lp += -0.5 * cn * cn;
  return lp;
}

bool theta_in_box(const std::vector<double>& th) {
  std::vector<double> c = th;
  clamp_theta(c);
  return c == th;
}

// One coordinate-wise slice-sampling update (step-out then shrink).
void slice_update(std::vector<double>& theta, std::size_t j,
                  const std::function<double(const std::vector<double>&)>& logf, Rng& rng) {
  const double w = 0.5;
  const int max_stepout = 8;
  const double f0 = logf(theta);
  const double level = f0 + std::log(std::max(rng.uniform(), 1e-300));
  double lo = theta[j] - w * rng.uniform();
  double hi = lo + w;
  auto at = [&](double v) {
    std::vector<double> t = theta;
    t[j] = v;
    return logf(t);
  };
  int budget_lo = static_cast<int>(max_stepout * rng.uniform());
  int budget_hi = max_stepout - 1 - budget_lo;
  while (budget_lo-- > 0 && at(lo) > level) lo -= w;
  while (budget_hi-- > 0 && at(hi) > level) hi += w;
  for (int tries = 0; tries < 100; ++tries) {
    const double x = rng.uniform(lo, hi);
    if (at(x) > level) {
      theta[j] = x;
      return;
    }
    if (x < theta[j]) {
      lo = x;
    } else {
      hi = x;
    }
  }
}

double radical_inverse(int base, unsigned long long i) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

std::vector<double> halton_point(int dim, unsigned long long index) {
  static const int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  check(dim <= 12, "suggest_next: at most 12 dimensions supported");
  std::vector<double> x(dim);
  for (int j = 0; j < dim; ++j) x[j] = radical_inverse(kPrimes[j], index);
  return x;
}

// Seeded 5-point Latin hypercube; one jittered cell per dimension per point.
std::vector<std::vector<double>> lhs_table(int dim, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x10A5ULL));
  std::vector<std::vector<double>> pts(kColdStartPoints, std::vector<double>(dim));
  for (int j = 0; j < dim; ++j) {
    std::vector<int> perm(kColdStartPoints);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    for (int p = 0; p < kColdStartPoints; ++p) {
      pts[p][j] = (perm[p] + rng.uniform()) / kColdStartPoints;
    }
  }
  return pts;
}

}  // namespace

// ---------------------------------------------------------------------------
// SearchSpace
// ---------------------------------------------------------------------------

void SearchSpace::validate() const {
  check(!params.empty(), "search space: at least one parameter required");
  for (const ParamSpec& p : params) {
    check(std::isfinite(p.lower) && std::isfinite(p.upper),
          "search space: bounds must be finite for " + p.name);
    check(p.lower < p.upper, "search space: lower must be below upper for " + p.name);
    if (p.scale == ParamScale::Log10) {
      check(p.lower > 0.0, "search space: log scale requires positive bounds for " + p.name);
    }
  }
}

std::vector<double> SearchSpace::to_native(const std::vector<double>& unit) const {
  check(unit.size() == params.size(), "to_native: dimension mismatch");
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSpec& p = params[i];
    const double u = std::clamp(unit[i], 0.0, 1.0);
    double v;
    if (p.scale == ParamScale::Log10) {
      const double lo = std::log10(p.lower), hi = std::log10(p.upper);
      v = std::pow(10.0, lo + u * (hi - lo));
    } else {
      v = p.lower + u * (p.upper - p.lower);
    }
    if (p.integral) v = std::clamp(static_cast<double>(std::llround(v)), p.lower, p.upper);
    out[i] = v;
  }
  return out;
}

std::vector<double> SearchSpace::to_unit(const std::vector<double>& native) const {
  check(native.size() == params.size(), "to_unit: dimension mismatch");
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSpec& p = params[i];
    double u;
    if (p.scale == ParamScale::Log10) {
      const double lo = std::log10(p.lower), hi = std::log10(p.upper);
      u = (std::log10(native[i]) - lo) / (hi - lo);
    } else {
      u = (native[i] - p.lower) / (p.upper - p.lower);
    }
    out[i] = std::clamp(u, 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Surrogate
// ---------------------------------------------------------------------------

double matern52(const std::vector<double>& a, const std::vector<double>& b,
                const KernelParams& k) {
  check(a.size() == b.size() && a.size() == k.lengthscales.size(),
        "matern52: dimension mismatch");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    check(k.lengthscales[i] > 0.0, "matern52: lengthscales must be positive");
    const double diff = (a[i] - b[i]) / k.lengthscales[i];
    d2 += diff * diff;
  }
  const double d = std::sqrt(d2);
  return k.signal * (1.0 + kSqrt5 * d + 5.0 * d2 / 3.0) * std::exp(-kSqrt5 * d);
}

GpSurrogate::GpSurrogate(int dimension) : dim(dimension) {
  check(dimension >= 1, "gp: dimension must be >= 1");
  kernel.lengthscales.assign(dimension, 0.5);
}

void GpSurrogate::add(const std::vector<double>& point, double value) {
  check(static_cast<int>(point.size()) == dim, "gp: point dimension mismatch");
  check(std::isfinite(value), "gp: observation must be finite");
  X.push_back(point);
  y.push_back(value);
}

double GpSurrogate::y_mean() const {
  if (y.empty()) return 0.0;
  double m = 0.0;
  for (double v : y) m += v;
  return m / static_cast<double>(y.size());
}

double GpSurrogate::y_std() const {
  if (y.size() < 2) return 1.0;
  const double m = y_mean();
  double var = 0.0;
  for (double v : y) var += (v - m) * (v - m);
  var /= static_cast<double>(y.size());
  const double sd = std::sqrt(var);
  return sd > 1e-12 ? sd : 1.0;
}

double GpSurrogate::best_y() const {
  check(!y.empty(), "gp: no observations");
  return *std::min_element(y.begin(), y.end());
}

GpPosterior gp_posterior(const GpSurrogate& s, const std::vector<double>& x) {
  check(s.size() >= 1, "gp_posterior: at least one observation required");
  check(static_cast<int>(x.size()) == s.dim, "gp_posterior: dimension mismatch");
  return GpModel(s, s.kernel).at(x);
}

double expected_improvement(double mean, double variance, double best_y) {
  check(variance >= 0.0, "expected_improvement: variance must be >= 0");
  const double sigma = std::sqrt(variance);
  const double gap = best_y - mean;
  if (sigma <= 0.0) return std::max(0.0, gap);
  const double gamma = gap / sigma;
  return gap * norm_cdf(gamma) + sigma * norm_pdf(gamma);
}

double acquisition(const GpSurrogate& s, const std::vector<double>& x) {
  const double best = s.best_y();
  if (s.kernel_samples.empty()) {
    const GpPosterior p = gp_posterior(s, x);
    return expected_improvement(p.mean, p.variance, best);
  }
  double total = 0.0;
  for (const KernelParams& k : s.kernel_samples) {
    const GpPosterior p = GpModel(s, k).at(x);
    total += expected_improvement(p.mean, p.variance, best);
  }
  return total / static_cast<double>(s.kernel_samples.size());
}

// ---------------------------------------------------------------------------
// Kernel fitting
// ---------------------------------------------------------------------------

GpSurrogate fit_kernel(const GpSurrogate& s, FitMethod method, std::uint64_t seed,
                       std::vector<double>* lml_trace) {
  check(s.size() >= 2, "fit_kernel: at least two observations required");
  const int d = s.dim;
  const EVec yt = standardized_y(s);
  GpSurrogate out = s;
  out.kernel_samples.clear();
  if (lml_trace) lml_trace->clear();

  if (method == FitMethod::MarginalLikelihood) {
    std::vector<std::vector<double>> starts;
    auto make_start = [&](double len, double signal, double noise) {
      KernelParams k;
      k.signal = signal;
      k.lengthscales.assign(d, len);
      k.noise = noise;
      starts.push_back(pack_theta(k));
    };
    make_start(0.3, 1.0, 1e-4);
    make_start(1.0, 1.0, 1e-2);
    make_start(0.1, 1.0, 1e-6);
    Rng rng(mix_seed(seed, 0xF17ULL));
    for (int r = 0; r < 3; ++r) {
      KernelParams k;
      k.signal = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
      k.lengthscales.resize(d);
      for (int a = 0; a < d; ++a) {
        k.lengthscales[a] = std::exp(rng.uniform(std::log(0.05), std::log(2.0)));
      }
      k.noise = std::exp(rng.uniform(std::log(1e-6), std::log(0.1)));
      starts.push_back(pack_theta(k));
    }

    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> best_theta = starts.front();
    std::vector<double> best_trace;
    for (std::vector<double>& theta : starts) {
      std::vector<double> trace;
      const double lml = ascend(s.X, yt, theta, &trace);
      if (lml > best) {
        best = lml;
        best_theta = theta;
        best_trace = std::move(trace);
      }
    }
    out.kernel = unpack_theta(best_theta);
    if (lml_trace) *lml_trace = best_trace;
    return out;
  }

  // Slice-sampling MCMC over the same log-space box.
  auto logpost = [&](const std::vector<double>& th) {
    if (!theta_in_box(th)) return -1e300;
    return lml_value(s.X, yt, unpack_theta(th)) + log_prior(th);
  };
  KernelParams init;
  init.signal = 1.0;
  init.lengthscales.assign(d, 0.5);
  init.noise = 1e-3;
  std::vector<double> theta = pack_theta(init);
  Rng rng(mix_seed(seed, 0x51DDULL));
  for (int sweep = 0; sweep < kMcmcBurnIn + kMcmcRetained; ++sweep) {
    for (std::size_t j = 0; j < theta.size(); ++j) slice_update(theta, j, logpost, rng);
    if (sweep >= kMcmcBurnIn) {
      out.kernel_samples.push_back(unpack_theta(theta));
      if (lml_trace) lml_trace->push_back(lml_value(s.X, yt, unpack_theta(theta)));
    }
  }
  // Representative single kernel: mean of the retained samples in log space.
  std::vector<double> mean_theta(theta.size(), 0.0);
  for (const KernelParams& k : out.kernel_samples) {
    const std::vector<double> th = pack_theta(k);
    for (std::size_t i = 0; i < th.size(); ++i) mean_theta[i] += th[i];
  }
  for (double& v : mean_theta) v /= static_cast<double>(out.kernel_samples.size());
  out.kernel = unpack_theta(mean_theta);
  return out;
}

// ---------------------------------------------------------------------------
// Suggestion
// ---------------------------------------------------------------------------

std::vector<double> suggest_next(const GpSurrogate& s, const SearchSpace& space,
                                 std::uint64_t seed) {
  space.validate();
  check(space.dim() == s.dim, "suggest_next: space dimension mismatch");
  const int d = s.dim;
  if (s.size() < kColdStartPoints) return lhs_table(d, seed)[s.size()];

  std::vector<GpModel> models;
  if (s.kernel_samples.empty()) {
    models.emplace_back(s, s.kernel);
  } else {
    for (const KernelParams& k : s.kernel_samples) models.emplace_back(s, k);
  }
  const double best = s.best_y();
  auto ei = [&](const std::vector<double>& x) {
    double total = 0.0;
    for (const GpModel& m : models) {
      const GpPosterior p = m.at(x);
      total += expected_improvement(p.mean, p.variance, best);
    }
    return total / static_cast<double>(models.size());
  };

  std::vector<std::vector<double>> cand(kHaltonCandidates);
  std::vector<double> score(kHaltonCandidates);
  for (int i = 0; i < kHaltonCandidates; ++i) {
    cand[i] = halton_point(d, static_cast<unsigned long long>(i) + 1);
    score[i] = ei(cand[i]);
  }
  std::vector<int> order(kHaltonCandidates);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });

  std::vector<double> best_x = cand[order.front()];
  double best_score = score[order.front()];
  for (int slot = 0; slot < kPolishTop && slot < kHaltonCandidates; ++slot) {
    std::vector<double> x = cand[order[slot]];
    double f = score[order[slot]];
    Rng rng(mix_seed(seed, 0xB000ULL + static_cast<std::uint64_t>(slot)));
    double radius = 0.1;
    for (int step = 0; step < 40; ++step) {
      if (step > 0 && step % 10 == 0) radius *= 0.5;
      std::vector<double> x2 = x;
      for (int a = 0; a < d; ++a) x2[a] = std::clamp(x2[a] + radius * rng.normal(), 0.0, 1.0);
      const double f2 = ei(x2);
      if (f2 > f) {
        x = std::move(x2);
        f = f2;
      }
    }
    if (f > best_score) {
      best_score = f;
      best_x = x;
    }
  }
  return best_x;
}

// ---------------------------------------------------------------------------
// Tuning loop
// ---------------------------------------------------------------------------

namespace {

// Surrogate over history: failures get the worst observed success value plus
// one standard deviation of the successes (zero when no success exists yet).
GpSurrogate surrogate_from_history(int dim, const std::vector<TuneObservation>& history) {
  GpSurrogate s(dim);
  std::vector<double> ok;
  for (const TuneObservation& h : history) {
    if (!h.failed) ok.push_back(h.value);
  }
  double pseudo = 1e6;  // sentinel when nothing has succeeded yet
  if (!ok.empty()) {
    const double worst = *std::max_element(ok.begin(), ok.end());
    double mean = 0.0;
    for (double v : ok) mean += v;
    mean /= static_cast<double>(ok.size());
    double var = 0.0;
    for (double v : ok) var += (v - mean) * (v - mean);
    var /= static_cast<double>(ok.size());
    pseudo = worst + std::sqrt(var);
  }
  for (const TuneObservation& h : history) s.add(h.unit, h.failed ? pseudo : h.value);
  return s;
}

}  // namespace

TuneResult tune(const TuneObjective& objective, const SearchSpace& space, int iterations,
                std::uint64_t seed, FitMethod method,
                const std::vector<TuneObservation>& resume, const TuneProgress& on_observation) {
  space.validate();
  check(iterations >= 1, "tune: iterations must be >= 1");
  check(static_cast<bool>(objective), "tune: objective required");

  std::vector<TuneObservation> history = resume;
  while (static_cast<int>(history.size()) < iterations) {
    GpSurrogate s = surrogate_from_history(space.dim(), history);
    if (s.size() >= kColdStartPoints) s = fit_kernel(s, method, seed);
    const std::vector<double> unit = suggest_next(s, space, seed);

    TuneObservation obs;
    obs.unit = unit;
    obs.native = space.to_native(unit);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      obs.value = objective(obs.native);
      obs.failed = !std::isfinite(obs.value);
    } catch (const std::exception&) {
      obs.failed = true;
    }
    if (obs.failed) obs.value = 0.0;
    obs.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.push_back(std::move(obs));
    if (on_observation) on_observation(history);
  }

  TuneResult result;
  result.history = history;
  bool any = false;
  for (const TuneObservation& h : history) {
    if (h.failed) continue;
    if (!any || h.value < result.best_value) {
      any = true;
      result.best_value = h.value;
      result.best_unit = h.unit;
      result.best_native = h.native;
    }
  }
  if (!any) throw NumericalError("tune: all objective evaluations failed");
  return result;
}

void save_tune_history(const std::string& path, const std::vector<TuneObservation>& history) {
  std::ofstream out(path);
  check(out.good(), "tune history: cannot write " + path);
  for (const TuneObservation& h : history) {
    nlohmann::json row;
    row["unit"] = h.unit;
    row["native"] = h.native;
    if (h.failed) {
      row["value"] = nullptr;
    } else {
      row["value"] = h.value;
    }
    row["wall_seconds"] = h.wall_seconds;
    row["failed"] = h.failed;
    out << row.dump() << "\n";
  }
}

std::vector<TuneObservation> load_tune_history(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "tune history: cannot read " + path);
  std::vector<TuneObservation> history;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json row = nlohmann::json::parse(line);
    TuneObservation h;
    h.unit = row.at("unit").get<std::vector<double>>();
    h.native = row.at("native").get<std::vector<double>>();
    h.failed = row.at("failed").get<bool>();
    h.value = h.failed ? 0.0 : row.at("value").get<double>();
    h.wall_seconds = row.at("wall_seconds").get<double>();
    history.push_back(std::move(h));
  }
  return history;
}

}  // namespace svlab
