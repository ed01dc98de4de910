#include "svlab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>

#include "json.hpp"
#include "svlab/objectives.hpp"
#include "svlab/optim.hpp"

namespace svlab {
namespace {

using nlohmann::json;

std::uint64_t fnv1a(std::uint64_t h, const std::string& s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t hash_corpus(const Corpus& c) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const Sentence& s : c.sentences) {
    for (const std::string& tok : s) h = fnv1a(fnv1a(h, tok), " ");
    h = fnv1a(h, "\n");
  }
  return h;
}

// toy:<n>:<seed>
bool parse_toy_scheme(const std::string& text, int& n, std::uint64_t& seed) {
  if (text.rfind("toy:", 0) != 0) return false;
  const std::size_t second = text.find(':', 4);
  if (second == std::string::npos) throw ConfigError("data: expected toy:<n>:<seed>");
  try {
    n = std::stoi(text.substr(4, second - 4));
    seed = std::stoull(text.substr(second + 1));
  } catch (const std::exception&) {
    throw ConfigError("data: expected toy:<n>:<seed>, got " + text);
  }
  return true;
}

Corpus load_source(const std::string& spec) {
  int n = 0;
  std::uint64_t seed = 0;
  if (parse_toy_scheme(spec, n, seed)) {
    return generate_toy_corpus(ToyGrammarSpec{}, n, seed);
  }
  return read_corpus(spec);
}

double mean_raw_len(const Corpus& c) {
  double total = 0.0;
  for (const Sentence& s : c.sentences) total += static_cast<double>(s.size());
  return c.empty() ? 0.0 : total / static_cast<double>(c.size());
}

double std_raw_len(const Corpus& c, double mean) {
  double var = 0.0;
  for (const Sentence& s : c.sentences) {
    const double d = static_cast<double>(s.size()) - mean;
    var += d * d;
  }
  return c.empty() ? 0.0 : std::sqrt(var / static_cast<double>(c.size()));
}

struct StreamWriter {
  std::ofstream out;
  explicit StreamWriter(const std::string& path) : out(path) {
    check(out.good(), "metrics: cannot write " + path);
  }
  void row(const json& j) { out << j.dump() << "\n"; }
};

long long token_count(const Corpus& c, bool with_eos) {
  long long total = 0;
  for (const Sentence& s : c.sentences) {
    total += static_cast<long long>(s.size()) + (with_eos ? 1 : 0);
  }
  return total;
}

}  // namespace

ResolvedData resolve_data(const RunConfig& cfg) {
  ResolvedData d;
  const Corpus source = load_source(cfg.train_data);
  if (source.empty()) throw DataError("data: empty training source " + cfg.train_data);

  if (cfg.valid_data.empty() && cfg.test_data.empty()) {
    SplitCorpus split = split_corpus(source, cfg.seed);
    d.train = std::move(split.train);
    d.valid = std::move(split.valid);
    d.test = std::move(split.test);
  } else {
    d.train = source;
    if (!cfg.valid_data.empty()) d.valid = load_source(cfg.valid_data);
    if (!cfg.test_data.empty()) d.test = load_source(cfg.test_data);
    if (d.valid.empty()) throw DataError("data: validation split is required");
  }

  d.vocab = build_vocab(d.train, cfg.min_count);
  d.cap = cfg.max_len > 0 ? cfg.max_len : truncation_cap(d.train);
  std::uint64_t h = hash_corpus(d.train);
  h = fnv1a(h, "|");
  h ^= hash_corpus(d.valid) + 0x9e3779b97f4a7c15ULL;
  h = fnv1a(h, "|");
  h ^= hash_corpus(d.test) + 0x9e3779b97f4a7c15ULL;
  d.corpus_hash = h;
  return d;
}

TrainResult cmd_train(const RunConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  ResolvedData data = resolve_data(cfg);
  const std::string config_text = serialize_config(cfg);

  {
    json info;
    info["config"] = config_text;
    info["seed"] = cfg.seed;
    info["corpus_hash"] = data.corpus_hash;
    info["vocab_size"] = data.vocab.size();
    info["cap"] = data.cap;
    info["train_sentences"] = data.train.size();
    info["valid_sentences"] = data.valid.size();
    std::ofstream out(cfg.out_dir + "/run_info.json");
    check(out.good(), "train: cannot write run_info.json");
    out << info.dump(2) << "\n";
  }

  TrainResult result;
  result.config = cfg;
  result.metrics_path = cfg.out_dir + "/metrics.jsonl";
  result.best_checkpoint = cfg.out_dir + "/best.svck";
  StreamWriter metrics(result.metrics_path);

  ModelDims dims;
  dims.vocab = data.vocab.size();
  dims.emb = cfg.emb;
  dims.hidden = cfg.hidden;
  dims.latent = cfg.latent;
  dims.enc_layers = cfg.enc_layers;
  dims.dec_layers = cfg.dec_layers;

  Rng init_rng(cfg.seed);
  std::unique_ptr<SentenceVae> vae;
  std::unique_ptr<RnnLm> lm;
  const bool is_vae = cfg.model_type == "senvae";
  if (is_vae) {
    Prior prior;
    if (cfg.prior == "standard") {
      prior = make_standard_prior();
    } else if (cfg.prior == "mog") {
      prior = make_mog_prior(cfg.prior_components, cfg.latent, init_rng);
    } else {
      const double mean = mean_raw_len(data.train);
      const double sd = std_raw_len(data.train, mean);
      prior = init_vamp_pseudo_inputs(cfg.prior_components, mean, sd, cfg.emb, cfg.seed);
    }
    vae = std::make_unique<SentenceVae>(dims, std::move(prior), init_rng);
  } else {
    lm = std::make_unique<RnnLm>(dims, init_rng);
  }
  std::vector<Param*> params = is_vae ? vae->parameters() : lm->parameters();

  const double wd = resolve_weight_decay(cfg, data.train.size());
  Adam opt(cfg.lr, cfg.beta1, cfg.beta2, 1e-8, wd);
  ControllerState controller = controller_init(cfg.objective);
  Rng rng = Rng::derived(cfg.seed, 0x7EA1ULL);

  const auto t_start = std::chrono::steady_clock::now();
  auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  double best_nll = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_best = 0;
  long long step = 0;

  auto dump_diagnostic = [&](const Batch& batch, const LossBreakdown& bd, int epoch) {
    json diag;
    diag["step"] = step;
    diag["epoch"] = epoch;
    diag["controller"] = {{"beta", controller.beta},
                          {"u", controller.u},
                          {"u1", controller.u1},
                          {"u2", controller.u2},
                          {"word_dropout", controller.word_dropout},
                          {"step", controller.step}};
    diag["loss"] = {{"distortion", bd.distortion},
                    {"rate", bd.rate},
                    {"mmd", bd.mmd},
                    {"total", bd.total}};
    diag["batch_ids"] = batch.ids;
    diag["batch_lengths"] = batch.lengths;
    std::ofstream out(cfg.out_dir + "/diagnostic.json");
    out << diag.dump(2) << "\n";
  };

  auto save_best = [&](int epoch) {
    Checkpoint ck = is_vae ? make_checkpoint(*vae, data.vocab, controller, step, config_text)
                           : make_checkpoint(*lm, data.vocab, controller, step, config_text);
    save_checkpoint(ck, result.best_checkpoint);
    best_epoch = epoch;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    result.epochs_run = epoch;
    const std::vector<Batch> batches =
        make_batches(data.train, data.vocab, cfg.batch, data.cap, mix_seed(cfg.seed, epoch),
                     /*shuffle=*/true);
    for (const Batch& batch : batches) {
      Tape tape;
      Graph g(tape);
      LossBreakdown bd;
      Var loss;
      std::vector<int> override_ids;
      const std::vector<int>* override_ptr = nullptr;
      if (is_vae) {
        if (cfg.objective.technique == Technique::WordDrop && controller.word_dropout > 0.0) {
          override_ids = word_dropout_inputs(batch, controller.word_dropout, rng);
          override_ptr = &override_ids;
        }
        const DropoutPlan plan =
            DropoutPlan::sample(batch.batch, cfg.emb, cfg.hidden, cfg.dropout, rng);
        Tensor noise(batch.batch, cfg.latent);
        for (double& v : noise.data) v = rng.normal();
        const ElboTerms terms = elbo_terms(g, *vae, batch, noise, plan, override_ptr);
        loss = technique_loss(g, *vae, cfg.objective, controller, terms, rng, bd);
      } else {
        const DropoutPlan plan =
            DropoutPlan::sample(batch.batch, cfg.emb, cfg.hidden, cfg.dropout, rng);
        const Var rows = lm->nll_rows(g, batch, plan);
        loss = tape.mean(rows);
        bd.distortion = tape.value(loss).at(0, 0);
        bd.total = bd.distortion;
        bd.beta = 1.0;
      }

      if (!std::isfinite(bd.total)) {
        dump_diagnostic(batch, bd, epoch);
        throw NumericalError("train: non-finite loss at step " + std::to_string(step) +
                             "; diagnostic written to " + cfg.out_dir + "/diagnostic.json");
      }

      for (Param* p : params) p->zero_grad();
      tape.backward(loss);
      g.accumulate_grads();
      clip_global_norm(params, cfg.clip);
      opt.step(params);
      if (is_vae) controller_post_step(cfg.objective, controller, bd);
      ++step;

      result.step_rates.push_back(bd.rate);
      result.step_losses.push_back(bd.total);
      json row;
      row["step"] = step;
      row["epoch"] = epoch;
      row["split"] = "train";
      row["distortion"] = bd.distortion;
      row["rate"] = bd.rate;
      row["mmd"] = bd.mmd;
      row["loss"] = bd.total;
      row["beta"] = bd.beta;
      row["u"] = bd.u;
      row["u1"] = bd.u1;
      row["u2"] = bd.u2;
      row["word_dropout"] = bd.word_dropout;
      row["wall"] = wall();
      metrics.row(row);
    }

    // Epoch-end validation.
    double val_nll = 0.0;
    json vrow;
    vrow["step"] = step;
    vrow["epoch"] = epoch;
    vrow["split"] = "valid";
    if (is_vae) {
      EvalOptions vopt;
      vopt.samples = cfg.eval_samples;
      vopt.with_acc_gap = false;
      vopt.with_js = false;
      vopt.seed = mix_seed(cfg.seed, 0xEA1ULL);
      const EvalReport rep = evaluate_corpus(*vae, data.valid, data.vocab, data.cap, vopt);
      val_nll = rep.nll_mean;
      vrow["nll"] = rep.nll_mean;
      vrow["ppl"] = rep.ppl_with_eos;
      vrow["ppl_no_eos"] = rep.ppl_without_eos;
      vrow["distortion"] = rep.distortion;
      vrow["rate"] = rep.rate;
      vrow["au"] = rep.active_units;
    } else {
      const double total = rnnlm_corpus_nll(*lm, data.valid, data.vocab, data.cap, cfg.batch);
      val_nll = total / static_cast<double>(data.valid.size());
      vrow["nll"] = val_nll;
      vrow["ppl"] = std::exp(total / static_cast<double>(token_count(data.valid, true)));
      vrow["ppl_no_eos"] = std::exp(total / static_cast<double>(token_count(data.valid, false)));
    }
    vrow["beta"] = controller.beta;
    vrow["u"] = controller.u;
    vrow["word_dropout"] = controller.word_dropout;
    vrow["wall"] = wall();
    metrics.row(vrow);

    if (val_nll < best_nll) {
      best_nll = val_nll;
      since_best = 0;
      save_best(epoch);
    } else {
      ++since_best;
      if (since_best >= cfg.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }

  result.best_val_nll = best_nll;
  result.best_epoch = best_epoch;

  // Final report from the best snapshot at the expensive sample count.
  RestoredModel best = restore_model(load_checkpoint(result.best_checkpoint));
  if (is_vae) {
    EvalOptions fopt;
    fopt.samples = cfg.final_samples;
    fopt.seed = mix_seed(cfg.seed, 0xF1EA1ULL);
    result.final_report = evaluate_corpus(*best.vae, data.valid, data.vocab, data.cap, fopt);
  } else {
    const double total = rnnlm_corpus_nll(*best.lm, data.valid, data.vocab, data.cap, cfg.batch);
    result.final_report.sentences = static_cast<int>(data.valid.size());
    result.final_report.nll_total = total;
    result.final_report.nll_mean = total / static_cast<double>(data.valid.size());
    result.final_report.tokens_with_eos = token_count(data.valid, true);
    result.final_report.tokens_without_eos = token_count(data.valid, false);
    result.final_report.ppl_with_eos =
        std::exp(total / static_cast<double>(result.final_report.tokens_with_eos));
    result.final_report.ppl_without_eos =
        std::exp(total / static_cast<double>(result.final_report.tokens_without_eos));
    result.final_report.distortion = result.final_report.nll_mean;
    result.final_report.samples = 1;
  }
  {
    std::ofstream out(cfg.out_dir + "/final_eval.json");
    check(out.good(), "train: cannot write final_eval.json");
    out << result.final_report.to_json() << "\n";
  }
  json frow;
  frow["step"] = step;
  frow["epoch"] = result.epochs_run;
  frow["split"] = "final";
  frow["nll"] = result.final_report.nll_mean;
  frow["ppl"] = result.final_report.ppl_with_eos;
  frow["ppl_no_eos"] = result.final_report.ppl_without_eos;
  frow["distortion"] = result.final_report.distortion;
  frow["rate"] = result.final_report.rate;
  frow["au"] = result.final_report.active_units;
  frow["acc_gap"] = result.final_report.acc_gap;
  frow["wall"] = wall();
  metrics.row(frow);
  return result;
}

}  // namespace svlab
