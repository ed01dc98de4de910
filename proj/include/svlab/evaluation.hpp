#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svlab/models.hpp"

namespace svlab {

// One evaluation pass over a corpus split, serialized as a single JSON row.
struct EvalReport {
  double nll_mean = 0.0;   // importance-sampled NLL per sentence
  double nll_total = 0.0;  // summed over the split
  double ppl_with_eos = 0.0;
  double ppl_without_eos = 0.0;
  double distortion = 0.0;  // mean per sentence
  double rate = 0.0;        // mean per sentence
  int active_units = 0;
  double acc_gap = 0.0;
  double acc_posterior = 0.0;
  double acc_prior = 0.0;
  std::vector<double> js_curve;
  int samples = 0;  // importance samples per sentence
  int sentences = 0;
  long long tokens_with_eos = 0;
  long long tokens_without_eos = 0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

struct SentenceEval {
  double is_nll = 0.0;
  double distortion = 0.0;  // mean of -log p(x|z_s) over the S draws
  double rate = 0.0;        // mean of log q - log p over the same draws
  std::vector<double> loc;  // posterior mean, for active-unit bookkeeping
  int tokens = 0;           // raw tokens after truncation, excluding markers
};

// Importance-sampled per-sentence evaluation with S posterior draws; all
// randomness comes from the seed, so repeated calls agree bit-exactly.
SentenceEval evaluate_sentence(SentenceVae& m, const MixtureOfGaussians& prior,
                               const std::vector<int>& wrapped, int samples,
                               std::uint64_t seed);

double is_nll(SentenceVae& m, const MixtureOfGaussians& prior,
              const std::vector<int>& wrapped, int samples, std::uint64_t seed);

// Dimensions whose across-dataset variance of the posterior mean exceeds the
// threshold (strictly).
int active_units(const std::vector<std::vector<double>>& locs, double threshold = 0.01);

struct AccGapResult {
  double posterior = 0.0;
  double prior = 0.0;
  double gap = 0.0;
};

// Token-pooled next-word argmax accuracy with teacher-forced gold prefixes:
// posterior-sample decoding minus prior-sample decoding.
AccGapResult acc_gap(SentenceVae& m, const MixtureOfGaussians& prior,
                     const std::vector<std::vector<int>>& wrapped, int repeats,
                     std::uint64_t seed);

// Jensen-Shannon divergence in nats between two categorical distributions.
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Per-step mean of JS(posterior output || prior output) minus
// JS(posterior output || second posterior sample output). All sentences must
// share one wrapped length.
std::vector<double> js_sensitivity(SentenceVae& m, const MixtureOfGaussians& prior,
                                   const std::vector<std::vector<int>>& wrapped,
                                   int repeats, std::uint64_t seed);

struct HomotopyResult {
  std::vector<int> endpoint_a, endpoint_b;       // wrapped input ids
  std::vector<std::vector<double>> zs;           // interpolated latents
  std::vector<std::vector<int>> decoded;         // greedy decode per step
};

// Linear interpolation between one posterior sample per endpoint, greedily
// decoded at each of `steps` points.
HomotopyResult homotopy(SentenceVae& m, const std::vector<int>& xa,
                        const std::vector<int>& xb, int steps, int max_len,
                        std::uint64_t seed);

// Word-level Levenshtein distance normalized by reference length, in [0, 1].
double ter_distance(const Sentence& candidate, const Sentence& reference);

struct NearestNeighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

// Closest corpus sentence under ter_distance; first index wins ties.
NearestNeighbor ter_nearest_neighbor(const Sentence& candidate, const Corpus& corpus);

struct EvalOptions {
  int samples = 1000;
  int acc_repeats = 10;
  int js_repeats = 10;
  bool with_acc_gap = true;
  bool with_js = true;
  std::uint64_t seed = 0;
  int max_sentences = 0;  // 0 = whole split
};

EvalReport evaluate_corpus(SentenceVae& m, const Corpus& corpus, const Vocabulary& vocab,
                           int cap, const EvalOptions& options);

// Exact total NLL of the corpus under the latent-free baseline, in nats.
double rnnlm_corpus_nll(RnnLm& m, const Corpus& corpus, const Vocabulary& vocab, int cap,
                        int batch_size = 64);

}  // namespace svlab
