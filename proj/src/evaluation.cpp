#include "svlab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "json.hpp"
#include "svlab/distributions.hpp"

namespace svlab {

namespace {

constexpr int kNllChunk = 128;  // rows per decoder pass when batching samples

double lse(const std::vector<double>& xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

double kl_categorical(const std::vector<double>& p, const std::vector<double>& m) {
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) out += p[i] * std::log(p[i] / m[i]);
  }
  return out;
}

std::vector<double> probs_row(const Tensor& t, int row) {
  return std::vector<double>(t.data.begin() + static_cast<std::ptrdiff_t>(row) * t.cols(),
                             t.data.begin() + static_cast<std::ptrdiff_t>(row + 1) * t.cols());
}

int argmax_row(const Tensor& t, int row) {
  int best = 0;
  for (int c = 1; c < t.cols(); ++c) {
    if (t.at(row, c) > t.at(row, best)) best = c;
  }
  return best;
}

}  // namespace

SentenceEval evaluate_sentence(SentenceVae& m, const MixtureOfGaussians& prior,
                               const std::vector<int>& wrapped, int samples,
                               std::uint64_t seed) {
  check(samples >= 1, "evaluate_sentence: need at least one sample");
  check(wrapped.size() >= 2, "evaluate_sentence: sentence must be wrapped");
  const int Dz = m.dims.latent;
  const DiagGaussian q = m.encode_sentence(wrapped);

  Rng rng(seed);
  Tensor zs(samples, Dz);
  std::vector<double> log_q(static_cast<std::size_t>(samples));
  std::vector<double> log_p(static_cast<std::size_t>(samples));
  std::vector<double> z(static_cast<std::size_t>(Dz));
  for (int s = 0; s < samples; ++s) {
    for (int d = 0; d < Dz; ++d) {
      z[static_cast<std::size_t>(d)] = q.loc[static_cast<std::size_t>(d)] +
                                       q.scale[static_cast<std::size_t>(d)] * rng.normal();
      zs.at(s, d) = z[static_cast<std::size_t>(d)];
    }
    log_q[static_cast<std::size_t>(s)] = log_prob(q, z);
    log_p[static_cast<std::size_t>(s)] = log_prob(prior, z);
  }

  std::vector<double> nll(static_cast<std::size_t>(samples));
  for (int from = 0; from < samples; from += kNllChunk) {
    const int n = std::min(kNllChunk, samples - from);
    Tensor chunk(n, Dz);
    std::copy(zs.data.begin() + static_cast<std::ptrdiff_t>(from) * Dz,
              zs.data.begin() + static_cast<std::ptrdiff_t>(from + n) * Dz,
              chunk.data.begin());
    const Tensor out = m.nll_for_samples(wrapped, chunk);
    for (int r = 0; r < n; ++r) nll[static_cast<std::size_t>(from + r)] = out.at(r, 0);
  }

  std::vector<double> log_w(static_cast<std::size_t>(samples));
  SentenceEval result;
  for (int s = 0; s < samples; ++s) {
    log_w[static_cast<std::size_t>(s)] = -nll[static_cast<std::size_t>(s)] +
                                         log_p[static_cast<std::size_t>(s)] -
                                         log_q[static_cast<std::size_t>(s)];
    result.distortion += nll[static_cast<std::size_t>(s)];
    result.rate += log_q[static_cast<std::size_t>(s)] - log_p[static_cast<std::size_t>(s)];
  }
  result.is_nll = -(lse(log_w) - std::log(static_cast<double>(samples)));
  result.distortion /= samples;
  result.rate /= samples;
  result.loc = q.loc;
  result.tokens = static_cast<int>(wrapped.size()) - 2;
  return result;
}

double is_nll(SentenceVae& m, const MixtureOfGaussians& prior,
              const std::vector<int>& wrapped, int samples, std::uint64_t seed) {
  return evaluate_sentence(m, prior, wrapped, samples, seed).is_nll;
}

int active_units(const std::vector<std::vector<double>>& locs, double threshold) {
  check(locs.size() >= 2, "active_units: need at least two data points");
  const std::size_t dims = locs.front().size();
  for (const auto& l : locs) {
    check(l.size() == dims, "active_units: inconsistent latent dimensionality");
  }
  int count = 0;
  const double n = static_cast<double>(locs.size());
  for (std::size_t d = 0; d < dims; ++d) {
    double mean = 0.0;
    for (const auto& l : locs) mean += l[d];
    mean /= n;
    double var = 0.0;
    for (const auto& l : locs) var += (l[d] - mean) * (l[d] - mean);
    var /= n;
    if (var > threshold) ++count;
  }
  return count;
}

AccGapResult acc_gap(SentenceVae& m, const MixtureOfGaussians& prior,
                     const std::vector<std::vector<int>>& wrapped, int repeats,
                     std::uint64_t seed) {
  check(!wrapped.empty(), "acc_gap: dataset must be non-empty");
  check(repeats >= 1, "acc_gap: repeats must be >= 1");
  const int Dz = m.dims.latent;
  struct Slot {
    long long correct_post = 0, correct_prior = 0, total = 0;
  };
  std::vector<Slot> slots(wrapped.size());
  parallel_for(static_cast<int>(wrapped.size()), worker_count(), [&](int i) {
    const std::vector<int>& w = wrapped[i];
    const DiagGaussian q = m.encode_sentence(w);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    std::vector<double> z_post(static_cast<std::size_t>(Dz));
    for (int rep = 0; rep < repeats; ++rep) {
      for (int d = 0; d < Dz; ++d) {
        z_post[static_cast<std::size_t>(d)] =
            q.loc[static_cast<std::size_t>(d)] +
            q.scale[static_cast<std::size_t>(d)] * rng.normal();
      }
      const std::vector<double> z_prior = sample_mixture(prior, rng);
      const Tensor probs_post = m.forced_probs(w, z_post);
      const Tensor probs_prior = m.forced_probs(w, z_prior);
      for (int step = 0; step + 1 < static_cast<int>(w.size()); ++step) {
        const int target = w[static_cast<std::size_t>(step) + 1];
        slots[i].correct_post += argmax_row(probs_post, step) == target ? 1 : 0;
        slots[i].correct_prior += argmax_row(probs_prior, step) == target ? 1 : 0;
        ++slots[i].total;
      }
    }
  });
  long long post = 0, pri = 0, total = 0;
  for (const Slot& s : slots) {
    post += s.correct_post;
    pri += s.correct_prior;
    total += s.total;
  }
  AccGapResult out;
  out.posterior = static_cast<double>(post) / static_cast<double>(total);
  out.prior = static_cast<double>(pri) / static_cast<double>(total);
  out.gap = out.posterior - out.prior;
  return out;
}

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  check(p.size() == q.size(), "js_divergence: length mismatch");
  std::vector<double> mid(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) mid[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl_categorical(p, mid) + 0.5 * kl_categorical(q, mid);
}

std::vector<double> js_sensitivity(SentenceVae& m, const MixtureOfGaussians& prior,
                                   const std::vector<std::vector<int>>& wrapped,
                                   int repeats, std::uint64_t seed) {
  check(!wrapped.empty(), "js_sensitivity: dataset must be non-empty");
  check(repeats >= 1, "js_sensitivity: repeats must be >= 1");
  const std::size_t len = wrapped.front().size();
  for (const auto& w : wrapped) {
    check(w.size() == len, "js_sensitivity: sentences must share one length");
  }
  const int steps = static_cast<int>(len) - 1;
  const int Dz = m.dims.latent;
  std::vector<std::vector<double>> slots(wrapped.size(),
                                         std::vector<double>(static_cast<std::size_t>(steps)));
  parallel_for(static_cast<int>(wrapped.size()), worker_count(), [&](int i) {
    const std::vector<int>& w = wrapped[i];
    const DiagGaussian q = m.encode_sentence(w);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    std::vector<double> z1(static_cast<std::size_t>(Dz)), z2(static_cast<std::size_t>(Dz));
    for (int rep = 0; rep < repeats; ++rep) {
      for (int d = 0; d < Dz; ++d) {
        z1[static_cast<std::size_t>(d)] = q.loc[static_cast<std::size_t>(d)] +
                                          q.scale[static_cast<std::size_t>(d)] * rng.normal();
      }
      for (int d = 0; d < Dz; ++d) {
        z2[static_cast<std::size_t>(d)] = q.loc[static_cast<std::size_t>(d)] +
                                          q.scale[static_cast<std::size_t>(d)] * rng.normal();
      }
      const std::vector<double> zp = sample_mixture(prior, rng);
      const Tensor pi = m.forced_probs(w, z1);
      const Tensor pi2 = m.forced_probs(w, z2);
      const Tensor eta = m.forced_probs(w, zp);
      for (int s = 0; s < steps; ++s) {
        const std::vector<double> a = probs_row(pi, s);
        slots[i][static_cast<std::size_t>(s)] +=
            js_divergence(a, probs_row(eta, s)) - js_divergence(a, probs_row(pi2, s));
      }
    }
  });
  std::vector<double> curve(static_cast<std::size_t>(steps), 0.0);
  for (const auto& s : slots) {
    for (int t = 0; t < steps; ++t) curve[static_cast<std::size_t>(t)] += s[static_cast<std::size_t>(t)];
  }
  const double denom = static_cast<double>(wrapped.size()) * repeats;
  for (double& v : curve) v /= denom;
  return curve;
}

HomotopyResult homotopy(SentenceVae& m, const std::vector<int>& xa,
                        const std::vector<int>& xb, int steps, int max_len,
                        std::uint64_t seed) {
  check(steps >= 2, "homotopy: need at least the two endpoints");
  const int Dz = m.dims.latent;
  const DiagGaussian qa = m.encode_sentence(xa);
  const DiagGaussian qb = m.encode_sentence(xb);
  Rng rng(seed);
  const std::vector<double> za = reparam_sample(qa, rng.normals(static_cast<std::size_t>(Dz)));
  const std::vector<double> zb = reparam_sample(qb, rng.normals(static_cast<std::size_t>(Dz)));

  HomotopyResult out;
  out.endpoint_a = xa;
  out.endpoint_b = xb;
  for (int t = 0; t < steps; ++t) {
    const double alpha = static_cast<double>(t) / (steps - 1);
    std::vector<double> z(static_cast<std::size_t>(Dz));
    for (int d = 0; d < Dz; ++d) {
      z[static_cast<std::size_t>(d)] = (1.0 - alpha) * za[static_cast<std::size_t>(d)] +
                                       alpha * zb[static_cast<std::size_t>(d)];
    }
    out.decoded.push_back(m.greedy_decode(z, max_len));
    out.zs.push_back(std::move(z));
  }
  return out;
}

double ter_distance(const Sentence& candidate, const Sentence& reference) {
  const std::size_t n = candidate.size(), r = reference.size();
  std::vector<std::size_t> prev(r + 1), cur(r + 1);
  for (std::size_t j = 0; j <= r; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= r; ++j) {
      const std::size_t sub = prev[j - 1] + (candidate[i - 1] == reference[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  const double denom = static_cast<double>(std::max<std::size_t>(1, r));
  return std::min(1.0, static_cast<double>(prev[r]) / denom);
}

NearestNeighbor ter_nearest_neighbor(const Sentence& candidate, const Corpus& corpus) {
  check(!corpus.empty(), "ter_nearest_neighbor: corpus must be non-empty");
  NearestNeighbor best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const double d = ter_distance(candidate, corpus.sentences[i]);
    if (d < best.distance) {
      best.distance = d;
      best.index = i;
    }
  }
  return best;
}

EvalReport evaluate_corpus(SentenceVae& m, const Corpus& corpus, const Vocabulary& vocab,
                           int cap, const EvalOptions& options) {
  check(!corpus.empty(), "evaluate_corpus: corpus must be non-empty");
  check(options.samples >= 1, "evaluate_corpus: samples must be >= 1");
  std::size_t n = corpus.size();
  if (options.max_sentences > 0) {
    n = std::min<std::size_t>(n, static_cast<std::size_t>(options.max_sentences));
  }
  std::vector<std::vector<int>> wrapped;
  wrapped.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    wrapped.push_back(wrap_ids(corpus.sentences[i], vocab, cap));
  }
  const MixtureOfGaussians prior = m.materialized_prior();

  std::vector<SentenceEval> evals(n);
  parallel_for(static_cast<int>(n), worker_count(), [&](int i) {
    evals[i] = evaluate_sentence(m, prior, wrapped[i], options.samples,
                                 mix_seed(options.seed, static_cast<std::uint64_t>(i)));
  });

  EvalReport rep;
  rep.samples = options.samples;
  rep.sentences = static_cast<int>(n);
  std::vector<std::vector<double>> locs;
  locs.reserve(n);
  for (const SentenceEval& e : evals) {
    rep.nll_total += e.is_nll;
    rep.distortion += e.distortion;
    rep.rate += e.rate;
    rep.tokens_with_eos += e.tokens + 1;
    rep.tokens_without_eos += e.tokens;
    locs.push_back(e.loc);
  }
  rep.nll_mean = rep.nll_total / static_cast<double>(n);
  rep.distortion /= static_cast<double>(n);
  rep.rate /= static_cast<double>(n);
  rep.ppl_with_eos = std::exp(rep.nll_total / static_cast<double>(rep.tokens_with_eos));
  rep.ppl_without_eos =
      std::exp(rep.nll_total / static_cast<double>(rep.tokens_without_eos));
  rep.active_units = n >= 2 ? active_units(locs) : 0;

  if (options.with_acc_gap) {
    const AccGapResult acc =
        acc_gap(m, prior, wrapped, options.acc_repeats, mix_seed(options.seed, 0xACCULL));
    rep.acc_gap = acc.gap;
    rep.acc_posterior = acc.posterior;
    rep.acc_prior = acc.prior;
  }
  if (options.with_js) {
    // Probe sentences at the modal wrapped length (smallest length on ties).
    std::map<std::size_t, int> counts;
    for (const auto& w : wrapped) ++counts[w.size()];
    std::size_t modal = wrapped.front().size();
    int best = 0;
    for (const auto& [len, c] : counts) {
      if (c > best) {
        best = c;
        modal = len;
      }
    }
    std::vector<std::vector<int>> subset;
    for (const auto& w : wrapped) {
      if (w.size() == modal) subset.push_back(w);
    }
    rep.js_curve = js_sensitivity(m, prior, subset, options.js_repeats,
                                  mix_seed(options.seed, 0x15ULL));
  }
  return rep;
}

double rnnlm_corpus_nll(RnnLm& m, const Corpus& corpus, const Vocabulary& vocab, int cap,
                        int batch_size) {
  check(!corpus.empty(), "rnnlm_corpus_nll: corpus must be non-empty");
  double total = 0.0;
  const auto batches = make_batches(corpus, vocab, batch_size, cap, 0, false);
  for (const Batch& b : batches) {
    Tape t;
    Graph g(t);
    const Tensor& nll = t.value(m.nll_rows(g, b, DropoutPlan::off()));
    for (int r = 0; r < b.batch; ++r) total += nll.at(r, 0);
  }
  return total;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["nll_mean"] = nll_mean;
  j["nll_total"] = nll_total;
  j["ppl_with_eos"] = ppl_with_eos;
  j["ppl_without_eos"] = ppl_without_eos;
  j["distortion"] = distortion;
  j["rate"] = rate;
  j["active_units"] = active_units;
  j["acc_gap"] = acc_gap;
  j["acc_posterior"] = acc_posterior;
  j["acc_prior"] = acc_prior;
  j["js_curve"] = js_curve;
  j["samples"] = samples;
  j["sentences"] = sentences;
  j["tokens_with_eos"] = tokens_with_eos;
  j["tokens_without_eos"] = tokens_without_eos;
  return j.dump();
}

EvalReport EvalReport::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  EvalReport r;
  r.nll_mean = j.at("nll_mean").get<double>();
  r.nll_total = j.at("nll_total").get<double>();
  r.ppl_with_eos = j.at("ppl_with_eos").get<double>();
  r.ppl_without_eos = j.at("ppl_without_eos").get<double>();
  r.distortion = j.at("distortion").get<double>();
  r.rate = j.at("rate").get<double>();
  r.active_units = j.at("active_units").get<int>();
  r.acc_gap = j.at("acc_gap").get<double>();
  r.acc_posterior = j.at("acc_posterior").get<double>();
  r.acc_prior = j.at("acc_prior").get<double>();
  r.js_curve = j.at("js_curve").get<std::vector<double>>();
  r.samples = j.at("samples").get<int>();
  r.sentences = j.at("sentences").get<int>();
  r.tokens_with_eos = j.at("tokens_with_eos").get<long long>();
  r.tokens_without_eos = j.at("tokens_without_eos").get<long long>();
  return r;
}

}  // namespace svlab
