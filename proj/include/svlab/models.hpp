#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "svlab/distributions.hpp"
#include "svlab/optim.hpp"
#include "svlab/pipeline.hpp"
#include "svlab/tensor.hpp"

namespace svlab {

// Binds host Params to tape leaves for one forward/backward pass and routes
// tape gradients back into Param::grad.
class Graph {
 public:
  explicit Graph(Tape& t) : tape(t) {}

  Var use(Param& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    Var v = tape.leaf(p.value, true);
    bound_.emplace(&p, v);
    return v;
  }

  // Adds the tape gradients of all bound parameters into Param::grad.
  void accumulate_grads() {
    for (auto& [p, v] : bound_) {
      const Tensor& g = tape.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) p->grad.data[i] += g.data[i];
    }
  }

  Tape& tape;

 private:
  std::unordered_map<Param*, Var> bound_;
};

struct ModelDims {
  int vocab = 0;
  int emb = 0;     // D_e; must equal hidden for output tying
  int hidden = 0;  // D_h
  int latent = 0;  // D_z
  int dec_layers = 1;
  int enc_layers = 1;
};

// Packed-gate GRU layer ([r|z|n] along columns). The reset gate multiplies
// the hidden-side candidate pre-activation.
struct GruLayer {
  int in_dim = 0, hidden_dim = 0;
  Param wx, wh, bx, bh;

  GruLayer() = default;
  GruLayer(const std::string& prefix, int in, int hidden, Rng& rng);

  Var step(Graph& g, Var x, Var h);
  void collect(std::vector<Param*>& out);
};

// Shared-mask-across-time dropout for the decoder input/output layers.
// Masks are pre-scaled by 1/keep; inference networks never get one.
struct DropoutPlan {
  bool active = false;
  Tensor input_mask;   // (B, D_e)
  Tensor output_mask;  // (B, D_h)

  static DropoutPlan off() { return {}; }
  static DropoutPlan sample(int batch, int emb, int hidden, double rate, Rng& rng);
};

struct Prior {
  enum class Kind { Standard, Mog, Vamp };
  Kind kind = Kind::Standard;
  int components = 0;

  Param mog_loc;        // (C, D_z)
  Param mog_raw_scale;  // (C, D_z), softplus applied at use

  std::vector<Param> vamp_embeddings;  // one (l_c, D_e) sequence per component
  std::vector<int> vamp_lengths;

  void collect(std::vector<Param*>& out);
};

Prior make_standard_prior();
Prior make_mog_prior(int components, int latent, Rng& rng);
// Pseudo-input lengths drawn once from round(N(mean_len, std_len)), clamped
// to >= 1; embeddings are trainable and bypass the embedding layer.
Prior init_vamp_pseudo_inputs(int components, double mean_len, double std_len,
                              int emb_dim, std::uint64_t seed);

class RnnLm {
 public:
  RnnLm(const ModelDims& d, Rng& rng);

  ModelDims dims;
  Param embedding;  // (V, D_e); also the (transposed) output layer
  Param h0;         // (L, D_h) learned initial states
  Param out_bias;   // (1, V)
  std::vector<GruLayer> layers;

  // Token-summed cross-entropy per sentence, (B, 1). input_override, when
  // given, replaces the decoder input ids (word dropout), row-major
  // B x (time-1).
  Var nll_rows(Graph& g, const Batch& batch, const DropoutPlan& dropout,
               const std::vector<int>* input_override = nullptr);

  std::vector<Param*> parameters();
  long long parameter_count();
};

class SentenceVae {
 public:
  SentenceVae(const ModelDims& d, Prior p, Rng& rng);

  ModelDims dims;
  Param embedding;
  std::vector<GruLayer> enc_fwd, enc_bwd;  // BiGRU stacks
  Param loc_w, loc_b;                      // (2H, D_z), (1, D_z)
  Param scale_w, scale_b;                  // (2H, D_z), (1, D_z)
  std::vector<GruLayer> dec;
  Param init_w, init_b;  // (D_z, H), (1, H): h_0 = tanh(affine(z))
  Param out_bias;        // (1, V)
  Prior prior;

  // ----- tape paths (training) -----
  std::pair<Var, Var> encode_rows(Graph& g, const Batch& batch);  // loc, scale
  Var decode_nll_rows(Graph& g, const Batch& batch, Var z, const DropoutPlan& dropout,
                      const std::vector<int>* input_override = nullptr);
  // log p(z) per row under the configured prior; vamp runs the encoder on
  // its pseudo-inputs inside the same graph.
  Var prior_log_prob_rows(Graph& g, Var z);

  std::vector<Param*> parameters();
  long long parameter_count();

  // ----- value-only paths (evaluation / generation) -----
  DiagGaussian encode_sentence(const std::vector<int>& wrapped_ids);
  // NLL of one sentence for each latent sample (rows of zs): (S, 1).
  Tensor nll_for_samples(const std::vector<int>& wrapped_ids, const Tensor& zs);
  // Teacher-forced next-token distributions, (time-1, V) softmax rows.
  Tensor forced_probs(const std::vector<int>& wrapped_ids, const std::vector<double>& z);
  std::vector<int> greedy_decode(const std::vector<double>& z, int max_len);
  std::vector<int> ancestral_sample(const std::vector<double>& z, int max_len, Rng& rng);
  // Prior materialized as an explicit mixture (standard -> one component).
  MixtureOfGaussians materialized_prior();
  std::vector<double> sample_prior(Rng& rng);

 private:
  // Runs the encoder over already-embedded per-step inputs (B rows each).
  std::pair<Var, Var> encode_steps(Graph& g, std::vector<Var> xs,
                                   const std::vector<Var>& step_masks);
  // Value-only encoder pass over pseudo-input component c.
  DiagGaussian encode_pseudo_value(int c);
};

// Single sequence of already-wrapped ids as a batch of one.
Batch batch_from_wrapped(const std::vector<std::vector<int>>& rows);

std::vector<int> wrap_ids(const Sentence& s, const Vocabulary& vocab, int cap);

}  // namespace svlab
