#include "svlab/models.hpp"

#include <algorithm>
#include <cmath>

namespace svlab {

namespace {

Tensor uniform_init(int rows, int cols, double bound, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

// Broadcast a (1, D) row into (B, D) through an add with zeros, so gradients
// still flow back to the row.
Var expand_rows(Graph& g, Var row, int batch) {
  if (g.tape.value(row).rows() == batch) return row;
  return g.tape.add(g.tape.leaf(Tensor(batch, g.tape.value(row).cols())), row);
}

std::vector<int> column_ids(const Batch& b, int t) {
  std::vector<int> out(static_cast<std::size_t>(b.batch));
  for (int r = 0; r < b.batch; ++r) out[static_cast<std::size_t>(r)] = b.id(r, t);
  return out;
}

// Teacher-forced decoder unroll shared by RnnLm and SenVAE. input_ids is
// row-major batch x steps; returns one (B, V) logits Var per step.
std::vector<Var> unroll_decoder(Graph& g, std::vector<GruLayer>& layers,
                                std::vector<Var> states, Param& embedding,
                                Param& out_bias, const std::vector<int>& input_ids,
                                int batch, int steps, const DropoutPlan& dropout) {
  Tape& t = g.tape;
  Var in_mask{}, out_mask{};
  if (dropout.active) {
    in_mask = t.leaf(dropout.input_mask);
    out_mask = t.leaf(dropout.output_mask);
  }
  std::vector<Var> logits;
  logits.reserve(static_cast<std::size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    std::vector<int> col(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      col[static_cast<std::size_t>(b)] = input_ids[static_cast<std::size_t>(b) * steps + step];
    }
    Var x = t.gather_rows(g.use(embedding), col);
    if (dropout.active) x = t.mul(x, in_mask);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      states[l] = layers[l].step(g, x, states[l]);
      x = states[l];
    }
    Var out = dropout.active ? t.mul(x, out_mask) : x;
    logits.push_back(t.add(t.matmul_nt(out, g.use(embedding)), g.use(out_bias)));
  }
  return logits;
}

// Sums masked per-step cross-entropy into a (B, 1) column. Targets/masks come
// from batch columns 1..time-1.
Var nll_from_logits(Graph& g, const Batch& batch, const std::vector<Var>& logits) {
  Tape& t = g.tape;
  Var acc{};
  for (int step = 0; step < static_cast<int>(logits.size()); ++step) {
    std::vector<int> targets(static_cast<std::size_t>(batch.batch));
    std::vector<double> mask(static_cast<std::size_t>(batch.batch));
    for (int b = 0; b < batch.batch; ++b) {
      targets[static_cast<std::size_t>(b)] = batch.id(b, step + 1);
      mask[static_cast<std::size_t>(b)] = batch.mask.at(b, step + 1);
    }
    Var col = t.softmax_xent(logits[static_cast<std::size_t>(step)], std::move(targets),
                             std::move(mask));
    acc = (step == 0) ? col : t.add(acc, col);
  }
  return acc;
}

std::vector<int> default_inputs(const Batch& b) {
  const int steps = b.time - 1;
  std::vector<int> ids(static_cast<std::size_t>(b.batch) * steps);
  for (int r = 0; r < b.batch; ++r) {
    for (int t = 0; t < steps; ++t) {
      ids[static_cast<std::size_t>(r) * steps + t] = b.id(r, t);
    }
  }
  return ids;
}

int argmax_row(const Tensor& t, int row) {
  int best = 0;
  for (int c = 1; c < t.cols(); ++c) {
    if (t.at(row, c) > t.at(row, best)) best = c;
  }
  return best;
}

std::vector<double> softmax_row(const Tensor& logits, int row) {
  double mx = logits.at(row, 0);
  for (int c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits.at(row, c));
  std::vector<double> p(static_cast<std::size_t>(logits.cols()));
  double s = 0.0;
  for (int c = 0; c < logits.cols(); ++c) {
    p[static_cast<std::size_t>(c)] = std::exp(logits.at(row, c) - mx);
    s += p[static_cast<std::size_t>(c)];
  }
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

GruLayer::GruLayer(const std::string& prefix, int in, int hidden, Rng& rng)
    : in_dim(in),
      hidden_dim(hidden),
      wx(prefix + ".wx", uniform_init(in, 3 * hidden, 1.0 / std::sqrt(double(in)), rng)),
      wh(prefix + ".wh",
         uniform_init(hidden, 3 * hidden, 1.0 / std::sqrt(double(hidden)), rng)),
      bx(prefix + ".bx", Tensor(1, 3 * hidden)),
      bh(prefix + ".bh", Tensor(1, 3 * hidden)) {
  check(in >= 1 && hidden >= 1, "GruLayer: dimensions must be positive");
}

Var GruLayer::step(Graph& g, Var x, Var h) {
  Tape& t = g.tape;
  const int H = hidden_dim;
  Var gx = t.add(t.matmul(x, g.use(wx)), g.use(bx));
  Var gh = t.add(t.matmul(h, g.use(wh)), g.use(bh));
  Var r = t.sigmoid(t.add(t.slice_cols(gx, 0, H), t.slice_cols(gh, 0, H)));
  Var zg = t.sigmoid(t.add(t.slice_cols(gx, H, H), t.slice_cols(gh, H, H)));
  Var n = t.tanh(t.add(t.slice_cols(gx, 2 * H, H), t.mul(r, t.slice_cols(gh, 2 * H, H))));
  return t.add(n, t.mul(zg, t.sub(h, n)));
}

void GruLayer::collect(std::vector<Param*>& out) {
  out.push_back(&wx);
  out.push_back(&wh);
  out.push_back(&bx);
  out.push_back(&bh);
}

DropoutPlan DropoutPlan::sample(int batch, int emb, int hidden, double rate, Rng& rng) {
  check(rate >= 0.0 && rate < 1.0, "DropoutPlan: rate must lie in [0, 1)");
  if (rate == 0.0) return off();
  DropoutPlan p;
  p.active = true;
  p.input_mask = Tensor(batch, emb);
  p.output_mask = Tensor(batch, hidden);
  const double scale = 1.0 / (1.0 - rate);
  for (double& v : p.input_mask.data) v = rng.bernoulli(rate) ? 0.0 : scale;
  for (double& v : p.output_mask.data) v = rng.bernoulli(rate) ? 0.0 : scale;
  return p;
}

void Prior::collect(std::vector<Param*>& out) {
  if (kind == Kind::Mog) {
    out.push_back(&mog_loc);
    out.push_back(&mog_raw_scale);
  } else if (kind == Kind::Vamp) {
    for (Param& p : vamp_embeddings) out.push_back(&p);
  }
}

Prior make_standard_prior() { return {}; }

Prior make_mog_prior(int components, int latent, Rng& rng) {
  check(components >= 1, "make_mog_prior: need at least one component");
  Prior p;
  p.kind = Prior::Kind::Mog;
  p.components = components;
  p.mog_loc = Param("prior.mog_loc", uniform_init(components, latent, 1.0, rng));
  // softplus(0.5413) ~= 1: components start near unit scale.
  p.mog_raw_scale =
      Param("prior.mog_raw_scale", Tensor(components, latent, 0.541324854612918));
  return p;
}

Prior init_vamp_pseudo_inputs(int components, double mean_len, double std_len,
                              int emb_dim, std::uint64_t seed) {
  check(components >= 1, "init_vamp_pseudo_inputs: need at least one component");
  check(emb_dim >= 1, "init_vamp_pseudo_inputs: bad embedding dim");
  Prior p;
  p.kind = Prior::Kind::Vamp;
  p.components = components;
  Rng rng = Rng::derived(seed, 0x9A3Full);
  const double bound = 1.0 / std::sqrt(double(emb_dim));
  for (int c = 0; c < components; ++c) {
    const long long l = std::llround(mean_len + std_len * rng.normal());
    const int len = static_cast<int>(std::max(1LL, l));
    p.vamp_lengths.push_back(len);
    p.vamp_embeddings.emplace_back("prior.vamp." + std::to_string(c),
                                   uniform_init(len, emb_dim, bound, rng));
  }
  return p;
}

RnnLm::RnnLm(const ModelDims& d, Rng& rng) : dims(d) {
  check(d.vocab > 0 && d.emb > 0 && d.hidden > 0, "RnnLm: dimensions must be positive");
  check(d.emb == d.hidden, "RnnLm: tied output layer requires emb == hidden");
  check(d.dec_layers >= 1, "RnnLm: need at least one layer");
  embedding = Param("embedding", uniform_init(d.vocab, d.emb,
                                              1.0 / std::sqrt(double(d.emb)), rng));
  for (int l = 0; l < d.dec_layers; ++l) {
    layers.emplace_back("rnnlm.gru" + std::to_string(l), l == 0 ? d.emb : d.hidden,
                        d.hidden, rng);
  }
  h0 = Param("rnnlm.h0", Tensor(d.dec_layers, d.hidden));
  out_bias = Param("out_bias", Tensor(1, d.vocab));
}

Var RnnLm::nll_rows(Graph& g, const Batch& batch, const DropoutPlan& dropout,
                    const std::vector<int>* input_override) {
  check(batch.batch >= 1 && batch.time >= 2, "RnnLm: batch must contain wrapped tokens");
  const int steps = batch.time - 1;
  std::vector<Var> states;
  for (int l = 0; l < dims.dec_layers; ++l) {
    states.push_back(expand_rows(g, g.tape.gather_rows(g.use(h0), {l}), batch.batch));
  }
  const std::vector<int> inputs = input_override ? *input_override : default_inputs(batch);
  check(static_cast<int>(inputs.size()) == batch.batch * steps,
        "RnnLm: input override has wrong shape");
  auto logits = unroll_decoder(g, layers, std::move(states), embedding, out_bias, inputs,
                               batch.batch, steps, dropout);
  return nll_from_logits(g, batch, logits);
}

std::vector<Param*> RnnLm::parameters() {
  std::vector<Param*> out{&embedding};
  for (GruLayer& l : layers) l.collect(out);
  out.push_back(&h0);
  out.push_back(&out_bias);
  return out;
}

long long RnnLm::parameter_count() {
  long long n = 0;
  for (Param* p : parameters()) n += static_cast<long long>(p->value.size());
  return n;
}

SentenceVae::SentenceVae(const ModelDims& d, Prior p, Rng& rng)
    : dims(d), prior(std::move(p)) {
  check(d.vocab > 0 && d.emb > 0 && d.hidden > 0 && d.latent > 0,
        "SentenceVae: dimensions must be positive");
  check(d.emb == d.hidden, "SentenceVae: tied output layer requires emb == hidden");
  check(d.dec_layers >= 1 && d.enc_layers >= 1, "SentenceVae: need at least one layer");
  const double b_emb = 1.0 / std::sqrt(double(d.emb));
  const double b_2h = 1.0 / std::sqrt(double(2 * d.hidden));
  embedding = Param("embedding", uniform_init(d.vocab, d.emb, b_emb, rng));
  for (int l = 0; l < d.enc_layers; ++l) {
    const int in = l == 0 ? d.emb : 2 * d.hidden;
    enc_fwd.emplace_back("enc.fwd" + std::to_string(l), in, d.hidden, rng);
    enc_bwd.emplace_back("enc.bwd" + std::to_string(l), in, d.hidden, rng);
  }
  loc_w = Param("enc.loc_w", uniform_init(2 * d.hidden, d.latent, b_2h, rng));
  loc_b = Param("enc.loc_b", Tensor(1, d.latent));
  scale_w = Param("enc.scale_w", uniform_init(2 * d.hidden, d.latent, b_2h, rng));
  scale_b = Param("enc.scale_b", Tensor(1, d.latent));
  for (int l = 0; l < d.dec_layers; ++l) {
    dec.emplace_back("dec.gru" + std::to_string(l), l == 0 ? d.emb : d.hidden, d.hidden,
                     rng);
  }
  init_w = Param("dec.init_w",
                 uniform_init(d.latent, d.hidden, 1.0 / std::sqrt(double(d.latent)), rng));
  init_b = Param("dec.init_b", Tensor(1, d.hidden));
  out_bias = Param("out_bias", Tensor(1, d.vocab));
  if (prior.kind != Prior::Kind::Standard) {
    check(prior.components >= 1, "SentenceVae: prior needs components");
  }
  if (prior.kind == Prior::Kind::Mog) {
    check(prior.mog_loc.value.cols() == d.latent, "SentenceVae: MoG latent dim mismatch");
  }
  if (prior.kind == Prior::Kind::Vamp) {
    for (const Param& v : prior.vamp_embeddings) {
      check(v.value.cols() == d.emb, "SentenceVae: vamp embedding dim mismatch");
    }
  }
}

std::pair<Var, Var> SentenceVae::encode_steps(Graph& g, std::vector<Var> xs,
                                              const std::vector<Var>& step_masks) {
  Tape& t = g.tape;
  check(!xs.empty(), "encode_steps: empty sequence");
  const int batch = t.value(xs[0]).rows();
  const int T = static_cast<int>(xs.size());
  Var one = t.constant(1.0);
  Var zero = t.leaf(Tensor(batch, dims.hidden));

  std::vector<Var> fwd_out(static_cast<std::size_t>(T)), bwd_out(static_cast<std::size_t>(T));
  for (int l = 0; l < dims.enc_layers; ++l) {
    Var h = zero;
    for (int s = 0; s < T; ++s) {
      Var hn = enc_fwd[static_cast<std::size_t>(l)].step(g, xs[static_cast<std::size_t>(s)], h);
      Var m = step_masks[static_cast<std::size_t>(s)];
      h = t.add(t.mul(m, hn), t.mul(t.sub(one, m), h));
      fwd_out[static_cast<std::size_t>(s)] = h;
    }
    h = zero;
    for (int s = T - 1; s >= 0; --s) {
      Var hn = enc_bwd[static_cast<std::size_t>(l)].step(g, xs[static_cast<std::size_t>(s)], h);
      Var m = step_masks[static_cast<std::size_t>(s)];
      h = t.add(t.mul(m, hn), t.mul(t.sub(one, m), h));
      bwd_out[static_cast<std::size_t>(s)] = h;
    }
    if (l + 1 < dims.enc_layers) {
      for (int s = 0; s < T; ++s) {
        xs[static_cast<std::size_t>(s)] = t.concat_cols(fwd_out[static_cast<std::size_t>(s)],
                                                        bwd_out[static_cast<std::size_t>(s)]);
      }
    }
  }
  Var hcat = t.concat_cols(fwd_out[static_cast<std::size_t>(T - 1)], bwd_out[0]);
  Var loc = t.add(t.matmul(hcat, g.use(loc_w)), g.use(loc_b));
  Var scale = t.softplus(t.add(t.matmul(hcat, g.use(scale_w)), g.use(scale_b)));
  return {loc, scale};
}

std::pair<Var, Var> SentenceVae::encode_rows(Graph& g, const Batch& batch) {
  Tape& t = g.tape;
  check(batch.batch >= 1 && batch.time >= 1, "encode_rows: empty batch");
  std::vector<Var> xs, masks;
  for (int s = 0; s < batch.time; ++s) {
    xs.push_back(t.gather_rows(g.use(embedding), column_ids(batch, s)));
    Tensor m(batch.batch, 1);
    for (int r = 0; r < batch.batch; ++r) m.at(r, 0) = batch.mask.at(r, s);
    masks.push_back(t.leaf(m));
  }
  return encode_steps(g, std::move(xs), masks);
}

Var SentenceVae::decode_nll_rows(Graph& g, const Batch& batch, Var z,
                                 const DropoutPlan& dropout,
                                 const std::vector<int>* input_override) {
  Tape& t = g.tape;
  check(batch.batch >= 1 && batch.time >= 2, "decode_nll_rows: batch must be wrapped");
  check(t.value(z).rows() == batch.batch && t.value(z).cols() == dims.latent,
        "decode_nll_rows: z shape mismatch");
  const int steps = batch.time - 1;
  std::vector<Var> states;
  states.push_back(t.tanh(t.add(t.matmul(z, g.use(init_w)), g.use(init_b))));
  for (int l = 1; l < dims.dec_layers; ++l) {
    states.push_back(t.leaf(Tensor(batch.batch, dims.hidden)));
  }
  const std::vector<int> inputs = input_override ? *input_override : default_inputs(batch);
  check(static_cast<int>(inputs.size()) == batch.batch * steps,
        "decode_nll_rows: input override has wrong shape");
  auto logits = unroll_decoder(g, dec, std::move(states), embedding, out_bias, inputs,
                               batch.batch, steps, dropout);
  return nll_from_logits(g, batch, logits);
}

Var SentenceVae::prior_log_prob_rows(Graph& g, Var z) {
  Tape& t = g.tape;
  switch (prior.kind) {
    case Prior::Kind::Standard: {
      Var loc = t.leaf(Tensor(1, dims.latent, 0.0));
      Var scale = t.leaf(Tensor(1, dims.latent, 1.0));
      return gaussian_log_prob_rows(t, z, loc, scale);
    }
    case Prior::Kind::Mog:
      return mixture_log_prob_rows(t, z, g.use(prior.mog_loc),
                                   t.softplus(g.use(prior.mog_raw_scale)));
    case Prior::Kind::Vamp: {
      Var all{};
      for (int c = 0; c < prior.components; ++c) {
        Param& pseudo = prior.vamp_embeddings[static_cast<std::size_t>(c)];
        const int len = prior.vamp_lengths[static_cast<std::size_t>(c)];
        std::vector<Var> xs, masks;
        Var ones = t.leaf(Tensor(1, 1, 1.0));
        for (int s = 0; s < len; ++s) {
          xs.push_back(t.gather_rows(g.use(pseudo), {s}));
          masks.push_back(ones);
        }
        auto [cl, cs] = encode_steps(g, std::move(xs), masks);
        Var lp = gaussian_log_prob_rows(t, z, cl, cs);
        all = (c == 0) ? lp : t.concat_cols(all, lp);
      }
      return t.add_const(t.logsumexp_cols(all),
                         -std::log(static_cast<double>(prior.components)));
    }
  }
  throw std::logic_error("prior_log_prob_rows: bad prior kind");
}

std::vector<Param*> SentenceVae::parameters() {
  std::vector<Param*> out{&embedding};
  for (GruLayer& l : enc_fwd) l.collect(out);
  for (GruLayer& l : enc_bwd) l.collect(out);
  out.push_back(&loc_w);
  out.push_back(&loc_b);
  out.push_back(&scale_w);
  out.push_back(&scale_b);
  for (GruLayer& l : dec) l.collect(out);
  out.push_back(&init_w);
  out.push_back(&init_b);
  out.push_back(&out_bias);
  prior.collect(out);
  return out;
}

long long SentenceVae::parameter_count() {
  long long n = 0;
  for (Param* p : parameters()) n += static_cast<long long>(p->value.size());
  return n;
}

DiagGaussian SentenceVae::encode_sentence(const std::vector<int>& wrapped_ids) {
  Tape t;
  Graph g(t);
  Batch b = batch_from_wrapped({wrapped_ids});
  auto [loc, scale] = encode_rows(g, b);
  const Tensor& lv = t.value(loc);
  const Tensor& sv = t.value(scale);
  return DiagGaussian(std::vector<double>(lv.data.begin(), lv.data.end()),
                      std::vector<double>(sv.data.begin(), sv.data.end()));
}

Tensor SentenceVae::nll_for_samples(const std::vector<int>& wrapped_ids, const Tensor& zs) {
  check(wrapped_ids.size() >= 2, "nll_for_samples: sentence must be wrapped");
  check(zs.cols() == dims.latent, "nll_for_samples: z dim mismatch");
  Tape t;
  Graph g(t);
  const int S = zs.rows();
  const int steps = static_cast<int>(wrapped_ids.size()) - 1;
  Batch b;
  b.batch = S;
  b.time = static_cast<int>(wrapped_ids.size());
  b.ids.resize(static_cast<std::size_t>(S) * b.time);
  b.mask = Tensor(S, b.time, 1.0);
  for (int r = 0; r < S; ++r) {
    for (int s = 0; s < b.time; ++s) {
      b.ids[static_cast<std::size_t>(r) * b.time + s] = wrapped_ids[static_cast<std::size_t>(s)];
    }
    b.lengths.push_back(b.time);
  }
  Var z = t.leaf(zs);
  Var nll = decode_nll_rows(g, b, z, DropoutPlan::off());
  (void)steps;
  return t.value(nll);
}

Tensor SentenceVae::forced_probs(const std::vector<int>& wrapped_ids,
                                 const std::vector<double>& z) {
  check(wrapped_ids.size() >= 2, "forced_probs: sentence must be wrapped");
  check(static_cast<int>(z.size()) == dims.latent, "forced_probs: z dim mismatch");
  Tape t;
  Graph g(t);
  const int steps = static_cast<int>(wrapped_ids.size()) - 1;
  Var zv = t.leaf(Tensor::from(z, 1, dims.latent));
  std::vector<Var> states;
  states.push_back(t.tanh(t.add(t.matmul(zv, g.use(init_w)), g.use(init_b))));
  for (int l = 1; l < dims.dec_layers; ++l) states.push_back(t.leaf(Tensor(1, dims.hidden)));
  std::vector<int> inputs(wrapped_ids.begin(), wrapped_ids.end() - 1);
  auto logits = unroll_decoder(g, dec, std::move(states), embedding, out_bias, inputs, 1,
                               steps, DropoutPlan::off());
  Tensor out(steps, dims.vocab);
  for (int s = 0; s < steps; ++s) {
    const auto p = softmax_row(t.value(logits[static_cast<std::size_t>(s)]), 0);
    for (int c = 0; c < dims.vocab; ++c) out.at(s, c) = p[static_cast<std::size_t>(c)];
  }
  return out;
}

std::vector<int> SentenceVae::greedy_decode(const std::vector<double>& z, int max_len) {
  check(max_len >= 1, "greedy_decode: max_len must be positive");
  Tape t;
  Graph g(t);
  Var zv = t.leaf(Tensor::from(z, 1, dims.latent));
  std::vector<Var> states;
  states.push_back(t.tanh(t.add(t.matmul(zv, g.use(init_w)), g.use(init_b))));
  for (int l = 1; l < dims.dec_layers; ++l) states.push_back(t.leaf(Tensor(1, dims.hidden)));
  std::vector<int> out;
  int tok = Vocabulary::kBos;
  for (int s = 0; s < max_len; ++s) {
    Var x = t.gather_rows(g.use(embedding), {tok});
    for (std::size_t l = 0; l < dec.size(); ++l) {
      states[l] = dec[l].step(g, x, states[l]);
      x = states[l];
    }
    Var logits = t.add(t.matmul_nt(x, g.use(embedding)), g.use(out_bias));
    tok = argmax_row(t.value(logits), 0);
    if (tok == Vocabulary::kEos) break;
    out.push_back(tok);
  }
  return out;
}

std::vector<int> SentenceVae::ancestral_sample(const std::vector<double>& z, int max_len,
                                               Rng& rng) {
  check(max_len >= 1, "ancestral_sample: max_len must be positive");
  Tape t;
  Graph g(t);
  Var zv = t.leaf(Tensor::from(z, 1, dims.latent));
  std::vector<Var> states;
  states.push_back(t.tanh(t.add(t.matmul(zv, g.use(init_w)), g.use(init_b))));
  for (int l = 1; l < dims.dec_layers; ++l) states.push_back(t.leaf(Tensor(1, dims.hidden)));
  std::vector<int> out;
  int tok = Vocabulary::kBos;
  for (int s = 0; s < max_len; ++s) {
    Var x = t.gather_rows(g.use(embedding), {tok});
    for (std::size_t l = 0; l < dec.size(); ++l) {
      states[l] = dec[l].step(g, x, states[l]);
      x = states[l];
    }
    Var logits = t.add(t.matmul_nt(x, g.use(embedding)), g.use(out_bias));
    const auto p = softmax_row(t.value(logits), 0);
    const double u = rng.uniform();
    double cum = 0.0;
    tok = dims.vocab - 1;
    for (int c = 0; c < dims.vocab; ++c) {
      cum += p[static_cast<std::size_t>(c)];
      if (u < cum) {
        tok = c;
        break;
      }
    }
    if (tok == Vocabulary::kEos) break;
    out.push_back(tok);
  }
  return out;
}

DiagGaussian SentenceVae::encode_pseudo_value(int c) {
  Tape t;
  Graph g(t);
  Param& pseudo = prior.vamp_embeddings[static_cast<std::size_t>(c)];
  const int len = prior.vamp_lengths[static_cast<std::size_t>(c)];
  std::vector<Var> xs, masks;
  Var ones = t.leaf(Tensor(1, 1, 1.0));
  for (int s = 0; s < len; ++s) {
    xs.push_back(t.gather_rows(g.use(pseudo), {s}));
    masks.push_back(ones);
  }
  auto [loc, scale] = encode_steps(g, std::move(xs), masks);
  const Tensor& lv = t.value(loc);
  const Tensor& sv = t.value(scale);
  return DiagGaussian(std::vector<double>(lv.data.begin(), lv.data.end()),
                      std::vector<double>(sv.data.begin(), sv.data.end()));
}

MixtureOfGaussians SentenceVae::materialized_prior() {
  MixtureOfGaussians m;
  switch (prior.kind) {
    case Prior::Kind::Standard:
      m.components.push_back(DiagGaussian::standard(dims.latent));
      break;
    case Prior::Kind::Mog:
      for (int c = 0; c < prior.components; ++c) {
        std::vector<double> loc(static_cast<std::size_t>(dims.latent));
        std::vector<double> scale(static_cast<std::size_t>(dims.latent));
        for (int d = 0; d < dims.latent; ++d) {
          loc[static_cast<std::size_t>(d)] = prior.mog_loc.value.at(c, d);
          const double raw = prior.mog_raw_scale.value.at(c, d);
          scale[static_cast<std::size_t>(d)] =
              std::max(raw, 0.0) + std::log1p(std::exp(-std::abs(raw)));
        }
        m.components.emplace_back(std::move(loc), std::move(scale));
      }
      break;
    case Prior::Kind::Vamp:
      for (int c = 0; c < prior.components; ++c) m.components.push_back(encode_pseudo_value(c));
      break;
  }
  return m;
}

std::vector<double> SentenceVae::sample_prior(Rng& rng) {
  if (prior.kind == Prior::Kind::Standard) return rng.normals(static_cast<std::size_t>(dims.latent));
  MixtureOfGaussians m = materialized_prior();
  return sample_mixture(m, rng);
}

Batch batch_from_wrapped(const std::vector<std::vector<int>>& rows) {
  check(!rows.empty(), "batch_from_wrapped: no rows");
  Batch b;
  b.batch = static_cast<int>(rows.size());
  for (const auto& r : rows) b.time = std::max(b.time, static_cast<int>(r.size()));
  b.ids.assign(static_cast<std::size_t>(b.batch) * b.time, Vocabulary::kPad);
  b.mask = Tensor(b.batch, b.time);
  for (int r = 0; r < b.batch; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    check(!row.empty(), "batch_from_wrapped: empty row");
    b.lengths.push_back(static_cast<int>(row.size()));
    for (std::size_t s = 0; s < row.size(); ++s) {
      b.ids[static_cast<std::size_t>(r) * b.time + s] = row[s];
      b.mask.at(r, static_cast<int>(s)) = 1.0;
    }
  }
  return b;
}

std::vector<int> wrap_ids(const Sentence& s, const Vocabulary& vocab, int cap) {
  std::vector<int> ids{Vocabulary::kBos};
  const std::size_t keep = std::min(s.size(), static_cast<std::size_t>(cap));
  for (std::size_t i = 0; i < keep; ++i) ids.push_back(vocab.lookup(s[i]));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

}  // namespace svlab
