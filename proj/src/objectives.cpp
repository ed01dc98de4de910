#include "svlab/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "svlab/distributions.hpp"

namespace svlab {

std::string technique_to_string(Technique t) {
  switch (t) {
    case Technique::Vanilla: return "vanilla";
    case Technique::Anneal: return "anneal";
    case Technique::WordDrop: return "word_dropout";
    case Technique::BetaVae: return "beta_vae";
    case Technique::FreeBits: return "fb";
    case Technique::Sfb: return "sfb";
    case Technique::Mdr: return "mdr";
    case Technique::InfoVae: return "infovae";
    case Technique::LagVae: return "lagvae";
  }
  throw std::logic_error("technique_to_string: bad enum");
}

Technique technique_from_string(const std::string& name) {
  if (name == "vanilla") return Technique::Vanilla;
  if (name == "anneal") return Technique::Anneal;
  if (name == "word_dropout") return Technique::WordDrop;
  if (name == "beta_vae") return Technique::BetaVae;
  if (name == "fb") return Technique::FreeBits;
  if (name == "sfb") return Technique::Sfb;
  if (name == "mdr") return Technique::Mdr;
  if (name == "infovae") return Technique::InfoVae;
  if (name == "lagvae") return Technique::LagVae;
  throw ConfigError("unknown objective technique: " + name);
}

void ObjectiveConfig::validate() const {
  check(target_rate >= 0.0, "objective: target rate must be >= 0");
  check(rho > 0.0, "objective: dual learning rate must be > 0");
  check(beta >= 0.0, "objective: beta must be >= 0");
  check(anneal_increment > 0.0, "objective: anneal increment must be > 0");
  check(wd_decrement > 0.0, "objective: word-dropout decrement must be > 0");
  check(sfb_omega > 0.0, "objective: SFB omega must be > 0");
  check(sfb_gamma >= sfb_epsilon, "objective: SFB gamma must be >= epsilon");
  check(sfb_beta_max > sfb_beta_min, "objective: SFB beta bounds out of order");
  check(info_beta >= 0.0 && info_lambda >= 0.0,
        "objective: InfoVAE weights must be >= 0");
  check(std::isfinite(lag_target_elbo) && std::isfinite(lag_target_mmd),
        "objective: LagVAE targets must be finite");
}

double loss_vanilla(double d, double r) { return d + r; }

double loss_beta(double d, double r, double beta) {
  check(beta >= 0.0, "loss_beta: beta must be >= 0");
  return d + beta * r;
}

double loss_fb(double d, double r, double target) {
  check(target >= 0.0, "loss_fb: target must be >= 0");
  return d + std::max(target, r);
}

double anneal_beta(long long step, double increment) {
  check(increment > 0.0, "anneal_beta: increment must be > 0");
  return std::min(1.0, static_cast<double>(step) * increment);
}

double word_dropout_rate(long long step, double decrement) {
  check(decrement > 0.0, "word_dropout_rate: decrement must be > 0");
  return std::max(0.0, 1.0 - static_cast<double>(step) * decrement);
}

double sfb_update(double beta, double rate, double target, double omega, double gamma,
                  double epsilon, double beta_min, double beta_max) {
  double next = beta;
  if (rate > gamma * target) {
    next += omega;
  } else if (rate < epsilon * target) {
    next -= omega;
  }
  return std::clamp(next, beta_min, beta_max);
}

double mdr_loss(double d, double r, double u, double target) {
  return d + r + u * (target - r);
}

double mdr_dual_update(double u, double rate, double target, double rho) {
  check(u >= 0.0, "mdr_dual_update: multiplier must be >= 0");
  check(rho > 0.0, "mdr_dual_update: rho must be > 0");
  return std::max(0.0, u + rho * (target - rate));
}

double infovae_loss(double d, double r, double mmd_value, double beta,
                    double lambda_mmd) {
  check(beta >= 0.0 && lambda_mmd >= 0.0, "infovae_loss: weights must be >= 0");
  return d + beta * r + lambda_mmd * mmd_value;
}

LagVaeStep lagvae_step(double d, double r, double mmd_value, double alpha,
                       double t_elbo, double t_mmd, double u1, double u2, double rho) {
  check(u1 >= 0.0 && u2 >= 0.0, "lagvae_step: multipliers must be >= 0");
  check(rho > 0.0, "lagvae_step: rho must be > 0");
  LagVaeStep out;
  out.loss = -alpha * d + u1 * ((d + r) - t_elbo) + u2 * (mmd_value - t_mmd);
  out.u1 = std::max(0.0, u1 + rho * ((d + r) - t_elbo));
  out.u2 = std::max(0.0, u2 + rho * (mmd_value - t_mmd));
  return out;
}

ElboTerms elbo_terms(Graph& g, SentenceVae& m, const Batch& batch, const Tensor& noise,
                     const DropoutPlan& dropout, const std::vector<int>* input_override) {
  Tape& t = g.tape;
  check(noise.rows() == batch.batch && noise.cols() == m.dims.latent,
        "elbo_terms: noise must be one row of standard normals per sentence");
  ElboTerms out;
  auto [loc, scale] = m.encode_rows(g, batch);
  out.loc = loc;
  out.scale = scale;
  out.z = reparam_sample_rows(t, loc, scale, noise);
  out.distortion = t.mean(m.decode_nll_rows(g, batch, out.z, dropout, input_override));
  if (m.prior.kind == Prior::Kind::Standard) {
    out.rate = t.mean(kl_standard_rows(t, loc, scale));
  } else {
    Var log_q = gaussian_log_prob_rows(t, out.z, loc, scale);
    Var log_p = m.prior_log_prob_rows(g, out.z);
    out.rate = t.mean(t.sub(log_q, log_p));
  }
  return out;
}

Var mmd_to_prior(Graph& g, SentenceVae& m, Var z, Rng& rng) {
  Tape& t = g.tape;
  const Tensor& zv = t.value(z);
  const int B = zv.rows();
  check(B >= 2, "mmd_to_prior: need at least two samples");
  Tensor prior(B, m.dims.latent);
  std::vector<std::vector<double>> xs, ys;
  for (int r = 0; r < B; ++r) {
    const std::vector<double> p = m.sample_prior(rng);
    for (int c = 0; c < m.dims.latent; ++c) prior.at(r, c) = p[static_cast<std::size_t>(c)];
    ys.push_back(p);
    xs.emplace_back(zv.data.begin() + static_cast<std::ptrdiff_t>(r) * zv.cols(),
                    zv.data.begin() + static_cast<std::ptrdiff_t>(r + 1) * zv.cols());
  }
  const double bw = median_heuristic_bandwidth(xs, ys);
  return t.mmd_rbf(z, t.leaf(std::move(prior)), bw);
}

Var combine_vanilla(Tape& t, Var d, Var r) { return t.add(d, r); }

Var combine_beta(Tape& t, Var d, Var r, double beta) {
  return t.add(d, t.scale(r, beta));
}

Var combine_fb(Tape& t, Var d, Var r, double target) {
  return t.add(d, t.clamp_min(r, target));
}

Var combine_mdr(Tape& t, Var d, Var r, double u, double target) {
  return t.add_const(t.add(d, t.scale(r, 1.0 - u)), u * target);
}

Var combine_infovae(Tape& t, Var d, Var r, Var mmd, double beta, double lambda_mmd) {
  return t.add(t.add(d, t.scale(r, beta)), t.scale(mmd, lambda_mmd));
}

Var combine_lagvae(Tape& t, Var d, Var r, Var mmd, double alpha, double t_elbo,
                   double t_mmd, double u1, double u2) {
  Var primal = t.add(t.scale(d, u1 - alpha), t.scale(r, u1));
  primal = t.add(primal, t.scale(mmd, u2));
  return t.add_const(primal, -u1 * t_elbo - u2 * t_mmd);
}

bool technique_needs_mmd(Technique t) {
  return t == Technique::InfoVae || t == Technique::LagVae;
}

Var technique_loss(Graph& g, SentenceVae& m, const ObjectiveConfig& cfg,
                   const ControllerState& st, const ElboTerms& terms, Rng& rng,
                   LossBreakdown& out) {
  Tape& t = g.tape;
  out.distortion = t.value(terms.distortion).item();
  out.rate = t.value(terms.rate).item();
  out.beta = 1.0;
  out.u = st.u;
  out.u1 = st.u1;
  out.u2 = st.u2;
  out.word_dropout = st.word_dropout;
  Var total{};
  switch (cfg.technique) {
    case Technique::Vanilla:
    case Technique::WordDrop:
      total = combine_vanilla(t, terms.distortion, terms.rate);
      break;
    case Technique::Anneal:
      out.beta = st.beta;
      total = combine_beta(t, terms.distortion, terms.rate, st.beta);
      break;
    case Technique::BetaVae:
      out.beta = cfg.beta;
      total = combine_beta(t, terms.distortion, terms.rate, cfg.beta);
      break;
    case Technique::FreeBits:
      total = combine_fb(t, terms.distortion, terms.rate, cfg.target_rate);
      break;
    case Technique::Sfb:
      out.beta = st.beta;
      total = combine_beta(t, terms.distortion, terms.rate, st.beta);
      break;
    case Technique::Mdr:
      out.beta = 1.0 - st.u;
      total = combine_mdr(t, terms.distortion, terms.rate, st.u, cfg.target_rate);
      break;
    case Technique::InfoVae: {
      Var mmd = mmd_to_prior(g, m, terms.z, rng);
      out.mmd = t.value(mmd).item();
      out.beta = cfg.info_beta;
      total = combine_infovae(t, terms.distortion, terms.rate, mmd, cfg.info_beta,
                              cfg.info_lambda);
      break;
    }
    case Technique::LagVae: {
      Var mmd = mmd_to_prior(g, m, terms.z, rng);
      out.mmd = t.value(mmd).item();
      total = combine_lagvae(t, terms.distortion, terms.rate, mmd, cfg.lag_alpha,
                             cfg.lag_target_elbo, cfg.lag_target_mmd, st.u1, st.u2);
      break;
    }
  }
  out.total = t.value(total).item();
  return total;
}

ControllerState controller_init(const ObjectiveConfig& cfg) {
  ControllerState st;
  switch (cfg.technique) {
    case Technique::Anneal: st.beta = 0.0; break;
    case Technique::BetaVae: st.beta = cfg.beta; break;
    case Technique::Sfb: st.beta = 1.0; break;  // neutral start, adjusted online
    case Technique::InfoVae: st.beta = cfg.info_beta; break;
    case Technique::WordDrop: st.word_dropout = 1.0; break;
    default: break;
  }
  return st;
}

void controller_post_step(const ObjectiveConfig& cfg, ControllerState& st,
                          const LossBreakdown& batch_stats) {
  ++st.step;
  switch (cfg.technique) {
    case Technique::Anneal:
      st.beta = anneal_beta(st.step, cfg.anneal_increment);
      break;
    case Technique::WordDrop:
      st.word_dropout = word_dropout_rate(st.step, cfg.wd_decrement);
      break;
    case Technique::Sfb:
      st.beta = sfb_update(st.beta, batch_stats.rate, cfg.target_rate, cfg.sfb_omega,
                           cfg.sfb_gamma, cfg.sfb_epsilon, cfg.sfb_beta_min,
                           cfg.sfb_beta_max);
      break;
    case Technique::Mdr:
      st.u = mdr_dual_update(st.u, batch_stats.rate, cfg.target_rate, cfg.rho);
      break;
    case Technique::LagVae: {
      LagVaeStep up =
          lagvae_step(batch_stats.distortion, batch_stats.rate, batch_stats.mmd,
                      cfg.lag_alpha, cfg.lag_target_elbo, cfg.lag_target_mmd, st.u1,
                      st.u2, cfg.rho);
      st.u1 = up.u1;
      st.u2 = up.u2;
      break;
    }
    default:
      break;
  }
}

std::vector<int> word_dropout_inputs(const Batch& batch, double rate, Rng& rng) {
  check(rate >= 0.0 && rate <= 1.0, "word_dropout_inputs: rate must lie in [0, 1]");
  const int steps = batch.time - 1;
  std::vector<int> inputs(static_cast<std::size_t>(batch.batch) * steps);
  for (int b = 0; b < batch.batch; ++b) {
    for (int s = 0; s < steps; ++s) {
      int id = batch.id(b, s);
      if (id != Vocabulary::kBos && id != Vocabulary::kPad && rate > 0.0 &&
          rng.bernoulli(rate)) {
        id = Vocabulary::kUnk;
      }
      inputs[static_cast<std::size_t>(b) * steps + s] = id;
    }
  }
  return inputs;
}

}  // namespace svlab
