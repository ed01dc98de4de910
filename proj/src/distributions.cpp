#include "svlab/distributions.hpp"

#include <algorithm>
#include <cmath>

namespace svlab {

DiagGaussian::DiagGaussian(std::vector<double> u, std::vector<double> s)
    : loc(std::move(u)), scale(std::move(s)) {
  check(loc.size() == scale.size(), "DiagGaussian: loc and scale lengths differ");
  for (double v : scale) check(v > 0.0, "DiagGaussian: scale must be strictly positive");
}

std::vector<double> reparam_sample(const DiagGaussian& q, const std::vector<double>& noise) {
  check(noise.size() == q.loc.size(), "reparam_sample: noise dimensionality mismatch");
  std::vector<double> z(q.loc.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.loc[i] + q.scale[i] * noise[i];
  return z;
}

double kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p) {
  check(q.dim() == p.dim(), "kl_diag_gaussian: dimensionality mismatch");
  double kl = 0.0;
  for (int i = 0; i < q.dim(); ++i) {
    const double vq = q.scale[i] * q.scale[i];
    const double vp = p.scale[i] * p.scale[i];
    const double dm = q.loc[i] - p.loc[i];
    kl += 0.5 * (vq / vp + dm * dm / vp - 1.0 + std::log(vp) - std::log(vq));
  }
  return kl;
}

double log_prob(const DiagGaussian& d, const std::vector<double>& z) {
  check(static_cast<int>(z.size()) == d.dim(), "log_prob: dimensionality mismatch");
  double lp = 0.0;
  for (int i = 0; i < d.dim(); ++i) {
    const double n = (z[i] - d.loc[i]) / d.scale[i];
    lp += -0.5 * kLog2Pi - std::log(d.scale[i]) - 0.5 * n * n;
  }
  return lp;
}

double log_prob(const MixtureOfGaussians& m, const std::vector<double>& z) {
  check(m.size() >= 1, "mixture log_prob: empty mixture");
  std::vector<double> lps(m.components.size());
  for (std::size_t c = 0; c < m.components.size(); ++c) lps[c] = log_prob(m.components[c], z);
  const double mx = *std::max_element(lps.begin(), lps.end());
  double s = 0.0;
  for (double lp : lps) s += std::exp(lp - mx);
  return mx + std::log(s) - std::log(static_cast<double>(m.size()));
}

double mc_rate(const DiagGaussian& q,
               const std::function<double(const std::vector<double>&)>& prior_log_prob,
               int n_samples, Rng& rng) {
  check(n_samples >= 1, "mc_rate: need at least one sample");
  double acc = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const std::vector<double> z = reparam_sample(q, rng.normals(q.loc.size()));
    acc += log_prob(q, z) - prior_log_prob(z);
  }
  return acc / n_samples;
}

std::vector<double> sample_mixture(const MixtureOfGaussians& m, Rng& rng) {
  check(m.size() >= 1, "sample_mixture: empty mixture");
  const DiagGaussian& c = m.components[static_cast<std::size_t>(rng.uniform_int(m.size()))];
  return reparam_sample(c, rng.normals(c.loc.size()));
}

namespace {

Tensor stack_rows(const std::vector<std::vector<double>>& rows) {
  check(!rows.empty(), "mmd: empty sample set");
  Tensor t(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    check(rows[r].size() == rows.front().size(), "mmd: ragged sample set");
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      t.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  }
  return t;
}

}  // namespace

double mmd(const std::vector<std::vector<double>>& xs,
           const std::vector<std::vector<double>>& ys, const KernelConfig& kernel) {
  // Delegates to the tape op so training and evaluation share one estimator.
  Tape t;
  return t.value(t.mmd_rbf(t.leaf(stack_rows(xs)), t.leaf(stack_rows(ys)), kernel.bandwidth))
      .item();
}

double median_heuristic_bandwidth(const std::vector<std::vector<double>>& xs,
                                  const std::vector<std::vector<double>>& ys) {
  std::vector<std::vector<double>> pool = xs;
  pool.insert(pool.end(), ys.begin(), ys.end());
  std::vector<double> d2;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < pool[i].size(); ++k) {
        const double d = pool[i][k] - pool[j][k];
        s += d * d;
      }
      d2.push_back(s);
    }
  }
  check(!d2.empty(), "median_heuristic_bandwidth: need at least two pooled samples");
  const std::size_t mid = d2.size() / 2;
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
  const double med = d2[mid];
  if (med <= 0.0) return 1.0;
  return std::sqrt(med / 2.0);
}

Var reparam_sample_rows(Tape& t, Var loc, Var scale, const Tensor& noise) {
  check(t.value(loc).shape == noise.shape, "reparam_sample_rows: noise shape mismatch");
  return t.add(loc, t.mul(scale, t.leaf(noise)));
}

Var gaussian_log_prob_rows(Tape& t, Var z, Var loc, Var scale) {
  Var nrm = t.div(t.sub(z, loc), scale);
  Var e = t.add_const(t.scale(t.mul(nrm, nrm), -0.5), -0.5 * kLog2Pi);
  return t.sum_cols(t.sub(e, t.log(scale)));
}

Var kl_standard_rows(Tape& t, Var loc, Var scale) {
  Var half_sq = t.scale(t.add(t.mul(scale, scale), t.mul(loc, loc)), 0.5);
  Var per_dim = t.add_const(t.sub(half_sq, t.log(scale)), -0.5);
  return t.sum_cols(per_dim);
}

Var mixture_log_prob_rows(Tape& t, Var z, Var comp_loc, Var comp_scale) {
  const int c_count = t.value(comp_loc).rows();
  check(c_count >= 1 && t.value(comp_scale).rows() == c_count,
        "mixture_log_prob_rows: component shapes disagree");
  Var all{};
  for (int c = 0; c < c_count; ++c) {
    Var lp = gaussian_log_prob_rows(t, z, t.gather_rows(comp_loc, {c}),
                                    t.gather_rows(comp_scale, {c}));
    all = (c == 0) ? lp : t.concat_cols(all, lp);
  }
  return t.add_const(t.logsumexp_cols(all), -std::log(static_cast<double>(c_count)));
}

Var mc_rate_rows(Tape& t, Var loc, Var scale,
                 const std::function<Var(Tape&, Var)>& prior_log_prob_rows, int n_samples,
                 Rng& rng) {
  check(n_samples >= 1, "mc_rate_rows: need at least one sample");
  const Tensor& l = t.value(loc);
  Var acc{};
  for (int s = 0; s < n_samples; ++s) {
    Tensor noise(l.rows(), l.cols());
    for (double& v : noise.data) v = rng.normal();
    Var z = reparam_sample_rows(t, loc, scale, noise);
    Var diff = t.sub(gaussian_log_prob_rows(t, z, loc, scale), prior_log_prob_rows(t, z));
    acc = (s == 0) ? diff : t.add(acc, diff);
  }
  return t.scale(acc, 1.0 / n_samples);
}

}  // namespace svlab
