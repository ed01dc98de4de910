#include "svlab/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "svlab/checkpoint.hpp"
#include "svlab/distributions.hpp"

namespace svlab {
namespace {

using nlohmann::json;

struct LoadedRun {
  RestoredModel model;
  ResolvedData data;
};

// Rebuild the corpus a checkpoint was trained on and verify the stored
// vocabulary still matches it.
LoadedRun load_run(const std::string& checkpoint_path) {
  LoadedRun run;
  run.model = restore_model(load_checkpoint(checkpoint_path));
  run.data = resolve_data(run.model.config);
  if (run.data.vocab.id_to_token != run.model.vocab.id_to_token) {
    throw DataError("checkpoint: stored vocabulary does not match corpus " +
                    run.model.config.train_data);
  }
  return run;
}

SentenceVae& require_vae(LoadedRun& run, const std::string& what) {
  if (!run.model.vae) {
    throw DataError(what + ": checkpoint holds a language model without a latent space");
  }
  return *run.model.vae;
}

long long token_count(const Corpus& c, bool with_eos) {
  long long total = 0;
  for (const Sentence& s : c.sentences) {
    total += static_cast<long long>(s.size()) + (with_eos ? 1 : 0);
  }
  return total;
}

Sentence ids_to_sentence(const std::vector<int>& ids, const Vocabulary& vocab) {
  Sentence out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

std::string format_value(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Plot helpers: minimal hand-rolled SVG line/scatter charts.
// ---------------------------------------------------------------------------

struct Series {
  std::vector<double> x, y;
  std::size_t size() const { return x.size(); }
};

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void span_of(const Series& a, const Series& b, bool x_axis, double& lo, double& hi) {
  lo = 0.0;
  hi = 1.0;
  bool any = false;
  for (const Series* s : {&a, &b}) {
    const std::vector<double>& v = x_axis ? s->x : s->y;
    for (double t : v) {
      if (!any) {
        lo = hi = t;
        any = true;
      } else {
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
    }
  }
  if (!any) return;
  const double pad = (hi - lo) > 0 ? 0.05 * (hi - lo) : 0.5;
  lo -= pad;
  hi += pad;
}

// A polyline plus optional scatter dots over labeled axes.
std::string svg_chart(const Series& line, const Series& dots, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel) {
  const double w = 720, h = 480, ml = 70, mr = 20, mt = 40, mb = 55;
  double x0, x1, y0, y1;
  span_of(line, dots, true, x0, x1);
  span_of(line, dots, false, y0, y1);
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  s << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  s << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
    << "</text>\n";
  // Axes.
  s << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
    << h - mb << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y0 + (y1 - y0) * i / 4.0;
    s << "<line x1=\"" << px(fx) << "\" y1=\"" << h - mb << "\" x2=\"" << px(fx) << "\" y2=\""
      << h - mb + 5 << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << px(fx) << "\" y=\"" << h - mb + 20
      << "\" text-anchor=\"middle\" font-size=\"11\">" << tick_label(fx) << "</text>\n";
    s << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << ml << "\" y2=\""
      << py(fy) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << ml - 8 << "\" y=\"" << py(fy) + 4
      << "\" text-anchor=\"end\" font-size=\"11\">" << tick_label(fy) << "</text>\n";
  }
  s << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
    << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel << "</text>\n";
  s << "<text x=\"18\" y=\"" << (mt + h - mb) / 2
    << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
    << (mt + h - mb) / 2 << ")\">" << ylabel << "</text>\n";

  if (line.size() >= 2) {
    s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < line.size(); ++i) {
      s << px(line.x[i]) << "," << py(line.y[i]) << " ";
    }
    s << "\"/>\n";
  }
  for (std::size_t i = 0; i < dots.size(); ++i) {
    s << "<circle cx=\"" << px(dots.x[i]) << "\" cy=\"" << py(dots.y[i])
      << "\" r=\"4\" fill=\"#d62728\"/>\n";
  }
  if (line.size() == 0 && dots.size() == 0) {
    s << "<text x=\"" << w / 2 << "\" y=\"" << h / 2
      << "\" text-anchor=\"middle\" font-size=\"14\">no data points</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  check(out.good(), "plot: cannot write " + path);
  out << text;
}

}  // namespace

EvalReport cmd_evaluate(const std::string& checkpoint_path, const std::string& split, int samples,
                        const std::string& out_dir) {
  LoadedRun run = load_run(checkpoint_path);
  const RunConfig& cfg = run.model.config;

  const Corpus* corpus = nullptr;
  std::uint64_t eval_seed = 0;
  if (split == "train") {
    corpus = &run.data.train;
    eval_seed = mix_seed(cfg.seed, 0xE7A11ULL);
  } else if (split == "valid") {
    corpus = &run.data.valid;
    eval_seed = mix_seed(cfg.seed, 0xF1EA1ULL);  // the trainer's final-report stream
  } else if (split == "test") {
    corpus = &run.data.test;
    eval_seed = mix_seed(cfg.seed, 0x7E57ULL);
  } else {
    throw ConfigError("evaluate: unknown split '" + split + "' (train|valid|test)");
  }
  if (corpus->empty()) throw DataError("evaluate: split '" + split + "' is empty");
  const int s = samples > 0 ? samples : cfg.final_samples;

  EvalReport rep;
  if (run.model.vae) {
    EvalOptions opt;
    opt.samples = s;
    opt.seed = eval_seed;
    rep = evaluate_corpus(*run.model.vae, *corpus, run.data.vocab, run.data.cap, opt);
  } else {
    const double total =
        rnnlm_corpus_nll(*run.model.lm, *corpus, run.data.vocab, run.data.cap, cfg.batch);
    rep.sentences = static_cast<int>(corpus->size());
    rep.samples = 1;
    rep.nll_total = total;
    rep.nll_mean = total / static_cast<double>(corpus->size());
    rep.tokens_with_eos = token_count(*corpus, true);
    rep.tokens_without_eos = token_count(*corpus, false);
    rep.ppl_with_eos = std::exp(total / static_cast<double>(rep.tokens_with_eos));
    rep.ppl_without_eos = std::exp(total / static_cast<double>(rep.tokens_without_eos));
    rep.distortion = rep.nll_mean;
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::string path = out_dir + "/eval_" + split + ".json";
    std::ofstream out(path);
    check(out.good(), "evaluate: cannot write " + path);
    out << rep.to_json() << "\n";
  }
  return rep;
}

std::vector<SampleRow> cmd_sample(const std::string& checkpoint_path, const std::string& mode,
                                  int n, std::uint64_t seed) {
  if (mode != "greedy-prior" && mode != "ancestral-prior" && mode != "greedy-posterior") {
    throw ConfigError("sample: unknown mode '" + mode +
                      "' (greedy-prior|ancestral-prior|greedy-posterior)");
  }
  if (n < 1) throw ConfigError("sample: n must be >= 1");

  LoadedRun run = load_run(checkpoint_path);
  SentenceVae& vae = require_vae(run, "sample");
  const Corpus& posterior_src = run.data.valid.empty() ? run.data.train : run.data.valid;
  Rng rng = Rng::derived(seed, 0x5A3DULL);

  std::vector<SampleRow> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<int> ids;
    if (mode == "greedy-prior") {
      ids = vae.greedy_decode(vae.sample_prior(rng), run.data.cap);
    } else if (mode == "ancestral-prior") {
      ids = vae.ancestral_sample(vae.sample_prior(rng), run.data.cap, rng);
    } else {
      const Sentence& src = posterior_src.sentences[i % posterior_src.size()];
      const DiagGaussian q = vae.encode_sentence(wrap_ids(src, run.data.vocab, run.data.cap));
      const std::vector<double> z = reparam_sample(q, rng.normals(q.loc.size()));
      ids = vae.greedy_decode(z, run.data.cap);
    }
    SampleRow row;
    row.text = ids_to_sentence(ids, run.data.vocab);
    const NearestNeighbor nn = ter_nearest_neighbor(row.text, run.data.train);
    row.neighbor = nn.index;
    row.distance = nn.distance;
    rows.push_back(std::move(row));
  }
  return rows;
}

HomotopyPrintout cmd_homotopy(const std::string& checkpoint_path, const std::string& sentence_a,
                              const std::string& sentence_b, int steps, std::uint64_t seed) {
  LoadedRun run = load_run(checkpoint_path);
  SentenceVae& vae = require_vae(run, "homotopy");
  const std::vector<int> wa = wrap_ids(tokenize(sentence_a), run.data.vocab, run.data.cap);
  const std::vector<int> wb = wrap_ids(tokenize(sentence_b), run.data.vocab, run.data.cap);

  HomotopyPrintout out;
  out.raw = homotopy(vae, wa, wb, steps, run.data.cap, seed);
  out.lines.reserve(out.raw.decoded.size());
  for (const std::vector<int>& ids : out.raw.decoded) {
    out.lines.push_back(detokenize(ids_to_sentence(ids, run.data.vocab)));
  }
  return out;
}

std::vector<NeighborRow> cmd_neighbors(const std::string& checkpoint_path,
                                       const std::string& sentence, int k) {
  if (k < 1) throw ConfigError("neighbors: k must be >= 1");
  LoadedRun run = load_run(checkpoint_path);
  const Sentence query = tokenize(sentence);
  const Corpus& train = run.data.train;

  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    order.emplace_back(ter_distance(query, train.sentences[i]), i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<NeighborRow> rows;
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  rows.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    NeighborRow row;
    row.index = order[i].second;
    row.distance = order[i].first;
    row.text = detokenize(train.sentences[order[i].second]);
    rows.push_back(std::move(row));
  }
  return rows;
}

TuneCommandResult cmd_tune(const RunConfig& cfg, int iterations, FitMethod method) {
  cfg.validate();
  const std::vector<std::pair<std::string, ParamSpec>> tunables =
      tunable_params(cfg.objective.technique);
  SearchSpace space;
  for (const auto& [key, spec] : tunables) space.params.push_back(spec);

  std::filesystem::create_directories(cfg.out_dir);
  TuneCommandResult out;
  out.history_path = cfg.out_dir + "/tune_history.jsonl";
  out.best_config_path = cfg.out_dir + "/best_config.cfg";

  std::vector<TuneObservation> resume;
  if (std::filesystem::exists(out.history_path)) {
    resume = load_tune_history(out.history_path);
  }

  int trial = static_cast<int>(resume.size());
  const auto objective = [&](const std::vector<double>& native) {
    RunConfig inner = cfg;
    for (std::size_t i = 0; i < tunables.size(); ++i) {
      set_config_value(inner, tunables[i].first, format_value(native[i]));
    }
    char dir[32];
    std::snprintf(dir, sizeof(dir), "/trial_%03d", trial++);
    inner.out_dir = cfg.out_dir + dir;
    const TrainResult tr = cmd_train(inner);
    return tr.final_report.nll_mean;
  };
  const auto persist = [&](const std::vector<TuneObservation>& history) {
    save_tune_history(out.history_path, history);
  };

  out.result = tune(objective, space, iterations, cfg.seed, method, resume, persist);

  out.best_config = cfg;
  for (std::size_t i = 0; i < tunables.size(); ++i) {
    set_config_value(out.best_config, tunables[i].first, format_value(out.result.best_native[i]));
  }
  std::ofstream best(out.best_config_path);
  check(best.good(), "tune: cannot write " + out.best_config_path);
  best << serialize_config(out.best_config);
  return out;
}

PlotPaths cmd_plot(const std::string& metrics_path, const std::string& out_dir) {
  std::ifstream in(metrics_path);
  if (!in.good()) throw DataError("plot: cannot read " + metrics_path);
  std::filesystem::create_directories(out_dir);

  Series rate_line;          // training step -> batch rate
  Series ppl_dots;           // validation rate -> validation PPL
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("plot: malformed metrics row: " + std::string(e.what()));
    }
    const std::string split = row.value("split", "");
    if (split == "train" && row.contains("rate")) {
      rate_line.x.push_back(row.value("step", 0.0));
      rate_line.y.push_back(row["rate"].get<double>());
    } else if ((split == "valid" || split == "final") && row.contains("rate") &&
               row.contains("ppl")) {
      ppl_dots.x.push_back(row["rate"].get<double>());
      ppl_dots.y.push_back(row["ppl"].get<double>());
    }
  }
  if (rate_line.size() == 0 && ppl_dots.size() == 0) {
    throw DataError("plot: no plottable rows in " + metrics_path);
  }

  PlotPaths paths;
  paths.rate_svg = out_dir + "/rate_progression.svg";
  paths.rate_csv = out_dir + "/rate_progression.csv";
  paths.ppl_svg = out_dir + "/ppl_vs_rate.svg";
  paths.ppl_csv = out_dir + "/ppl_vs_rate.csv";

  write_text(paths.rate_svg,
             svg_chart(rate_line, Series{}, "Rate progression", "step", "rate (nats)"));
  write_text(paths.ppl_svg, svg_chart(Series{}, ppl_dots, "Validation PPL vs rate",
                                      "rate (nats)", "perplexity"));
  {
    std::ostringstream csv;
    csv << "step,rate\n";
    for (std::size_t i = 0; i < rate_line.size(); ++i) {
      csv << format_value(rate_line.x[i]) << "," << format_value(rate_line.y[i]) << "\n";
    }
    write_text(paths.rate_csv, csv.str());
  }
  {
    std::ostringstream csv;
    csv << "rate,ppl\n";
    for (std::size_t i = 0; i < ppl_dots.size(); ++i) {
      csv << format_value(ppl_dots.x[i]) << "," << format_value(ppl_dots.y[i]) << "\n";
    }
    write_text(paths.ppl_csv, csv.str());
  }
  return paths;
}

}  // namespace svlab
