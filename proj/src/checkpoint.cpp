#include "svlab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>

#include "svlab/common.hpp"

namespace svlab {
namespace {

constexpr char kMagic[4] = {'S', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  check(in.good(), "checkpoint: truncated file");
  return v;
}
std::int64_t read_i64(std::istream& in) {
  std::int64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  check(in.good(), "checkpoint: truncated file");
  return v;
}
double read_f64(std::istream& in) {
  double v = 0.0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  check(in.good(), "checkpoint: truncated file");
  return v;
}
std::string read_str(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  check(in.good() || n == 0, "checkpoint: truncated file");
  return s;
}

Checkpoint snapshot(std::vector<Param*> params, const Vocabulary& vocab,
                    const ControllerState& controller, long long step,
                    const std::string& config_text) {
  Checkpoint ck;
  ck.config_text = config_text;
  ck.vocab = vocab;
  ck.controller = controller;
  ck.step = step;
  for (Param* p : params) {
    ck.names.push_back(p->name);
    ck.values.push_back(p->value);
  }
  return ck;
}

}  // namespace

Checkpoint make_checkpoint(SentenceVae& m, const Vocabulary& vocab,
                           const ControllerState& controller, long long step,
                           const std::string& config_text) {
  Checkpoint ck = snapshot(m.parameters(), vocab, controller, step, config_text);
  ck.model_kind = 1;
  ck.prior_kind = m.prior.kind;
  ck.prior_components = m.prior.components;
  ck.vamp_lengths = m.prior.vamp_lengths;
  return ck;
}

Checkpoint make_checkpoint(RnnLm& m, const Vocabulary& vocab, const ControllerState& controller,
                           long long step, const std::string& config_text) {
  Checkpoint ck = snapshot(m.parameters(), vocab, controller, step, config_text);
  ck.model_kind = 0;
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(ck.model_kind));
  write_i64(out, ck.step);
  write_f64(out, ck.controller.beta);
  write_f64(out, ck.controller.u);
  write_f64(out, ck.controller.u1);
  write_f64(out, ck.controller.u2);
  write_f64(out, ck.controller.word_dropout);
  write_i64(out, ck.controller.step);
  write_u32(out, static_cast<std::uint32_t>(ck.prior_kind));
  write_u32(out, static_cast<std::uint32_t>(ck.prior_components));
  write_u32(out, static_cast<std::uint32_t>(ck.vamp_lengths.size()));
  for (int len : ck.vamp_lengths) write_u32(out, static_cast<std::uint32_t>(len));
  write_str(out, ck.config_text);
  const int reserved = Vocabulary::kReserved;
  check(ck.vocab.size() >= reserved, "checkpoint: malformed vocabulary");
  write_u32(out, static_cast<std::uint32_t>(ck.vocab.size() - reserved));
  for (int id = reserved; id < ck.vocab.size(); ++id) write_str(out, ck.vocab.token(id));
  check(ck.names.size() == ck.values.size(), "checkpoint: name/value mismatch");
  write_u32(out, static_cast<std::uint32_t>(ck.names.size()));
  for (std::size_t i = 0; i < ck.names.size(); ++i) {
    write_str(out, ck.names[i]);
    const Tensor& t = ck.values[i];
    write_u32(out, static_cast<std::uint32_t>(t.rows()));
    write_u32(out, static_cast<std::uint32_t>(t.cols()));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  check(out.good(), "checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw DataError("checkpoint: cannot read " + path);
  char magic[4] = {};
  in.read(magic, sizeof(magic));
  if (!in.good() || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.model_kind = static_cast<int>(read_u32(in));
  ck.step = read_i64(in);
  ck.controller.beta = read_f64(in);
  ck.controller.u = read_f64(in);
  ck.controller.u1 = read_f64(in);
  ck.controller.u2 = read_f64(in);
  ck.controller.word_dropout = read_f64(in);
  ck.controller.step = read_i64(in);
  ck.prior_kind = static_cast<Prior::Kind>(read_u32(in));
  ck.prior_components = static_cast<int>(read_u32(in));
  const std::uint32_t n_lens = read_u32(in);
  for (std::uint32_t i = 0; i < n_lens; ++i) {
    ck.vamp_lengths.push_back(static_cast<int>(read_u32(in)));
  }
  ck.config_text = read_str(in);
  const std::uint32_t n_tokens = read_u32(in);
  for (std::uint32_t i = 0; i < n_tokens; ++i) ck.vocab.add(read_str(in));
  const std::uint32_t n_tensors = read_u32(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    ck.names.push_back(read_str(in));
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    Tensor t(static_cast<int>(rows), static_cast<int>(cols));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    check(in.good(), "checkpoint: truncated tensor data");
    ck.values.push_back(std::move(t));
  }
  return ck;
}

RestoredModel restore_model(const Checkpoint& ck) {
  RestoredModel out;
  out.config = parse_config(ck.config_text);
  out.vocab = ck.vocab;
  out.controller = ck.controller;
  out.step = ck.step;

  const RunConfig& cfg = out.config;
  ModelDims dims;
  dims.vocab = ck.vocab.size();
  dims.emb = cfg.emb;
  dims.hidden = cfg.hidden;
  dims.latent = cfg.latent;
  dims.enc_layers = cfg.enc_layers;
  dims.dec_layers = cfg.dec_layers;

  // Values are overwritten below, so the init seed is irrelevant.
  Rng rng(cfg.seed);
  std::vector<Param*> params;
  if (ck.model_kind == 0) {
    out.lm = std::make_unique<RnnLm>(dims, rng);
    params = out.lm->parameters();
  } else {
    Prior prior;
    if (ck.prior_kind == Prior::Kind::Standard) {
      prior = make_standard_prior();
    } else if (ck.prior_kind == Prior::Kind::Mog) {
      prior = make_mog_prior(ck.prior_components, dims.latent, rng);
    } else {
      prior.kind = Prior::Kind::Vamp;
      prior.components = ck.prior_components;
      check(static_cast<int>(ck.vamp_lengths.size()) == ck.prior_components,
            "checkpoint: vamp length table mismatch");
      for (int c = 0; c < ck.prior_components; ++c) {
        prior.vamp_lengths.push_back(ck.vamp_lengths[c]);
        prior.vamp_embeddings.emplace_back("prior.vamp." + std::to_string(c),
                                           Tensor(ck.vamp_lengths[c], dims.emb));
      }
    }
    out.vae = std::make_unique<SentenceVae>(dims, std::move(prior), rng);
    params = out.vae->parameters();
  }

  std::unordered_map<std::string, const Tensor*> by_name;
  for (std::size_t i = 0; i < ck.names.size(); ++i) by_name[ck.names[i]] = &ck.values[i];
  check(by_name.size() == ck.names.size(), "checkpoint: duplicate tensor names");
  for (Param* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw DataError("checkpoint: missing tensor " + p->name);
    const Tensor& t = *it->second;
    check(t.rows() == p->value.rows() && t.cols() == p->value.cols(),
          "checkpoint: shape mismatch for " + p->name);
    p->value = t;
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw DataError("checkpoint: unexpected tensor " + by_name.begin()->first);
  }
  return out;
}

}  // namespace svlab
