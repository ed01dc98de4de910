#pragma once

#include <optional>
#include <string>
#include <vector>

#include "svlab/models.hpp"

namespace svlab {

enum class Technique {
  Vanilla,
  Anneal,
  WordDrop,
  BetaVae,
  FreeBits,
  Sfb,
  Mdr,
  InfoVae,
  LagVae,
};

std::string technique_to_string(Technique t);
Technique technique_from_string(const std::string& name);  // ConfigError on unknown

struct ObjectiveConfig {
  Technique technique = Technique::Vanilla;

  double target_rate = 5.0;        // r, shared by FB / SFB / MDR
  double beta = 0.66;              // fixed KL weight for the beta-VAE
  double anneal_increment = 2e-5;  // per-step beta increment for annealing
  double wd_decrement = 2e-5;      // per-step word-dropout decrement

  double sfb_omega = 0.01;
  double sfb_gamma = 1.05;
  double sfb_epsilon = 1.0;
  double sfb_beta_min = 1e-4;  // lower clamp; keep beta strictly positive
  double sfb_beta_max = 1.0;

  double info_beta = 0.7;
  double info_lambda = 31.62;

  double lag_alpha = -21.7;        // negative: mutual-information maximization
  double lag_target_elbo = 100.8;  // bound on -ELBO = D + R
  double lag_target_mmd = 0.0017;

  double rho = 0.5;  // dual-ascent learning rate (MDR, LagVAE)

  void validate() const;  // throws std::invalid_argument on bad fields
};

// Per-run mutable controller variables, advanced once per minibatch after the
// primal optimizer step.
struct ControllerState {
  double beta = 1.0;          // current KL weight (annealing, SFB)
  double u = 0.0;             // rate-constraint multiplier, >= 0
  double u1 = 0.0, u2 = 0.0;  // -ELBO / MMD constraint multipliers, >= 0
  double word_dropout = 0.0;  // UNK-replacement probability in [0, 1]
  long long step = 0;
};

// Per-step scalars destined for the metrics stream.
struct LossBreakdown {
  double distortion = 0.0;
  double rate = 0.0;
  double mmd = 0.0;
  double total = 0.0;
  double beta = 1.0;
  double u = 0.0, u1 = 0.0, u2 = 0.0;
  double word_dropout = 0.0;
};

// ----- scalar arithmetic forms (controllers and logging) -----
double loss_vanilla(double d, double r);
double loss_beta(double d, double r, double beta);
double loss_fb(double d, double r, double target);
double anneal_beta(long long step, double increment);           // min(1, step*inc)
double word_dropout_rate(long long step, double decrement);     // max(0, 1 - step*dec)
double sfb_update(double beta, double rate, double target, double omega, double gamma,
                  double epsilon, double beta_min, double beta_max);
double mdr_loss(double d, double r, double u, double target);
// Projected dual ascent on the minimum-rate constraint: the multiplier grows
// while the rate sits below target and decays to zero once above it.
double mdr_dual_update(double u, double rate, double target, double rho);
double infovae_loss(double d, double r, double mmd_value, double beta, double lambda_mmd);

struct LagVaeStep {
  double loss = 0.0;
  double u1 = 0.0, u2 = 0.0;
};
LagVaeStep lagvae_step(double d, double r, double mmd_value, double alpha,
                       double t_elbo, double t_mmd, double u1, double u2, double rho);

// ----- tape-recorded loss assembly -----
struct ElboTerms {
  Var distortion;  // batch mean of token-summed NLL, scalar
  Var rate;        // batch mean KL (closed form) or single-sample MC rate
  Var z;           // (B, D_z) reparameterized samples
  Var loc, scale;  // encoder outputs
};

// One reparameterized sample per sentence; noise must be (B, D_z) standard
// normals. The MC rate for expressive priors reuses the decoder's sample.
ElboTerms elbo_terms(Graph& g, SentenceVae& m, const Batch& batch, const Tensor& noise,
                     const DropoutPlan& dropout,
                     const std::vector<int>* input_override = nullptr);

// MMD between the batch posterior samples z and fresh prior draws, with the
// kernel bandwidth set by the median heuristic over the pooled sample.
Var mmd_to_prior(Graph& g, SentenceVae& m, Var z, Rng& rng);

// Scalar-Var combiners mirroring the arithmetic forms.
Var combine_vanilla(Tape& t, Var d, Var r);
Var combine_beta(Tape& t, Var d, Var r, double beta);
Var combine_fb(Tape& t, Var d, Var r, double target);
Var combine_mdr(Tape& t, Var d, Var r, double u, double target);
Var combine_infovae(Tape& t, Var d, Var r, Var mmd, double beta, double lambda_mmd);
Var combine_lagvae(Tape& t, Var d, Var r, Var mmd, double alpha, double t_elbo,
                   double t_mmd, double u1, double u2);

bool technique_needs_mmd(Technique t);

// Builds the full technique loss on the tape and fills the breakdown scalars.
Var technique_loss(Graph& g, SentenceVae& m, const ObjectiveConfig& cfg,
                   const ControllerState& st, const ElboTerms& terms, Rng& rng,
                   LossBreakdown& out);

ControllerState controller_init(const ObjectiveConfig& cfg);
// Advances step count, schedules (annealing, word dropout), and dual/SFB
// updates from the just-observed batch statistics.
void controller_post_step(const ObjectiveConfig& cfg, ControllerState& st,
                          const LossBreakdown& batch_stats);

// Decoder input ids with each real history token independently replaced by
// UNK with probability rate; BOS and padding are never replaced.
std::vector<int> word_dropout_inputs(const Batch& batch, double rate, Rng& rng);

}  // namespace svlab
