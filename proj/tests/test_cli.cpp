// Config parsing, checkpointing, the training loop, the command layer, and
// the installed binary (via SVLAB_BIN).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "svlab/checkpoint.hpp"
#include "svlab/commands.hpp"
#include "svlab/config.hpp"
#include "svlab/trainer.hpp"

using namespace svlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string& root_dir() {
  static const std::string dir = [] {
    std::string d =
        (fs::temp_directory_path() / ("svlab_cli_" + std::to_string(::getpid()))).string();
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

// Small, fast run shared by the command-layer tests.
RunConfig tiny_config(const std::string& name) {
  RunConfig cfg;
  cfg.emb = cfg.hidden = 16;
  cfg.latent = 4;
  cfg.batch = 32;
  cfg.epochs = 2;
  cfg.patience = 2;
  cfg.eval_samples = 4;
  cfg.final_samples = 8;
  cfg.train_data = "toy:160:5";
  cfg.objective.technique = Technique::Mdr;
  cfg.objective.target_rate = 2.0;
  cfg.out_dir = root_dir() + "/" + name;
  return cfg;
}

const TrainResult& shared_run() {
  static const TrainResult result = cmd_train(tiny_config("shared"));
  return result;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<json> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

// Metrics stream with the wall-clock field removed (the only
// run-to-run-variable field).
std::vector<std::string> metrics_without_wall(const std::string& path) {
  std::vector<std::string> out;
  for (json row : read_jsonl(path)) {
    row.erase("wall");
    out.push_back(row.dump());
  }
  return out;
}

struct CmdOut {
  int code = -1;
  std::string text;
};

CmdOut run_cli(const std::string& args) {
  const char* bin = std::getenv("SVLAB_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "SVLAB_BIN must point at the built binary (set by ctest)");
  static int counter = 0;
  const std::string capture = root_dir() + "/cli_out_" + std::to_string(counter++) + ".txt";
  const std::string cmd = std::string(bin) + " " + args + " > " + capture + " 2>&1";
  const int rc = std::system(cmd.c_str());
  CmdOut out;
  out.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  out.text = slurp(capture);
  return out;
}

// Deterministic sentences over a private word list, for file-corpus tests.
void write_corpus_file(const std::string& path, const std::vector<std::string>& words, int n,
                       std::uint64_t seed) {
  Rng rng(seed);
  std::ofstream out(path);
  REQUIRE(out.good());
  for (int i = 0; i < n; ++i) {
    const int len = 3 + static_cast<int>(rng.uniform() * 5);
    for (int t = 0; t < len; ++t) {
      if (t) out << ' ';
      out << words[static_cast<std::size_t>(rng.uniform() * words.size()) % words.size()];
    }
    out << '\n';
  }
}

}  // namespace

TEST_CASE("config defaults serialize the documented optimizer values exactly") {
  const std::string text = serialize_config(RunConfig{});
  for (const char* expected :
       {"optimizer.lr = 0.001", "optimizer.batch = 64", "optimizer.dropout = 0.4",
        "optimizer.clip = 1.5", "optimizer.beta1 = 0.9", "optimizer.beta2 = 0.999",
        "objective.technique = vanilla", "objective.r = 5", "model.prior = standard",
        "train.patience = 5", "optimizer.weight_decay = auto"}) {
    CAPTURE(expected);
    CHECK(text.find(std::string(expected) + "\n") != std::string::npos);
  }
}

TEST_CASE("config round trip: serialize(parse(text)) is a fixed point") {
  const std::string text =
      "# experiment\n"
      "model.preset = toy\n"
      "objective.technique = mdr   # constrained\n"
      "objective.r = 7.25\n"
      "\n"
      "optimizer.lr = 0.002\n"
      "train.seed = 42\n"
      "data.train = toy:500:3\n";
  const RunConfig cfg = parse_config(text);
  CHECK(cfg.objective.technique == Technique::Mdr);
  CHECK(cfg.objective.target_rate == 7.25);
  CHECK(cfg.lr == 0.002);
  CHECK(cfg.seed == 42);
  CHECK(cfg.emb == 48);  // toy preset

  const std::string once = serialize_config(cfg);
  const std::string twice = serialize_config(parse_config(once));
  CHECK(once == twice);
}

TEST_CASE("config preset applies before explicit keys regardless of file order") {
  const RunConfig after = parse_config(
      "model.preset = ptb\n"
      "model.emb = 100\n"
      "model.hidden = 100\n");
  const RunConfig before = parse_config(
      "model.emb = 100\n"
      "model.hidden = 100\n"
      "model.preset = ptb\n");
  CHECK(serialize_config(after) == serialize_config(before));
  CHECK(after.emb == 100);
  CHECK(after.latent == 32);      // from the preset
  CHECK(after.dec_layers == 2);   // from the preset
  CHECK(after.max_len == 59);     // from the preset
  CHECK(after.prior_components == 100);
}

TEST_CASE("config rejects unknown keys, malformed lines, and bad values") {
  CHECK_THROWS_AS((void)parse_config("nonsense.key = 1\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("model.emb 48\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("optimizer.lr = banana\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("optimizer.lr = 0.001x\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("objective.technique = magic\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("model.preset = imagenet\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("optimizer.lr = -1\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("model.emb = 32\n"), ConfigError);  // breaks emb == hidden
  CHECK_THROWS_AS((void)parse_config("train.patience = 0\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config_file("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("tunable parameter boxes match the per-technique search spaces") {
  auto names_of = [](Technique t) {
    std::vector<std::string> names;
    for (const auto& [key, spec] : tunable_params(t)) names.push_back(key);
    return names;
  };
  CHECK(names_of(Technique::Mdr) == std::vector<std::string>{"objective.r"});
  CHECK(names_of(Technique::FreeBits) == std::vector<std::string>{"objective.r"});
  CHECK(names_of(Technique::Sfb) ==
        std::vector<std::string>{"objective.r", "objective.sfb_gamma", "objective.sfb_epsilon",
                                 "objective.sfb_omega"});
  CHECK(names_of(Technique::Anneal) == std::vector<std::string>{"objective.anneal_increment"});
  CHECK(names_of(Technique::WordDrop) == std::vector<std::string>{"objective.wd_decrement"});
  CHECK(names_of(Technique::BetaVae) == std::vector<std::string>{"objective.beta"});
  CHECK(names_of(Technique::InfoVae) ==
        std::vector<std::string>{"objective.info_beta", "objective.info_lambda"});
  CHECK(names_of(Technique::LagVae) ==
        std::vector<std::string>{"objective.lag_alpha", "objective.lag_target_mmd",
                                 "objective.lag_target_elbo"});
  CHECK_THROWS_AS((void)tunable_params(Technique::Vanilla), ConfigError);

  const auto mdr = tunable_params(Technique::Mdr);
  CHECK(mdr[0].second.lower == 0.5);
  CHECK(mdr[0].second.upper == 16.0);
  CHECK(mdr[0].second.scale == ParamScale::Linear);

  // Every box must be usable as a search space directly.
  for (Technique t : {Technique::Anneal, Technique::WordDrop, Technique::BetaVae,
                      Technique::FreeBits, Technique::Sfb, Technique::Mdr, Technique::InfoVae,
                      Technique::LagVae}) {
    SearchSpace space;
    for (const auto& [key, spec] : tunable_params(t)) space.params.push_back(spec);
    CHECK_NOTHROW(space.validate());
  }
}

TEST_CASE("weight decay resolves from dropout and corpus size in auto mode") {
  RunConfig cfg;
  cfg.dropout = 0.4;
  CHECK(resolve_weight_decay(cfg, 600) == doctest::Approx((1.0 - 0.4) / 600.0).epsilon(1e-15));
  cfg.dropout = 0.0;
  CHECK(resolve_weight_decay(cfg, 100) == doctest::Approx(0.01).epsilon(1e-15));
  cfg.weight_decay = "0.25";
  CHECK(resolve_weight_decay(cfg, 100) == 0.25);
  cfg.weight_decay = "squid";
  CHECK_THROWS_AS((void)resolve_weight_decay(cfg, 100), ConfigError);
  cfg.weight_decay = "auto";
  CHECK_THROWS((void)resolve_weight_decay(cfg, 0));
}

TEST_CASE("toy data scheme resolves deterministically and splits partition the corpus") {
  RunConfig cfg = tiny_config("resolve");
  const ResolvedData a = resolve_data(cfg);
  const ResolvedData b = resolve_data(cfg);
  CHECK(a.corpus_hash == b.corpus_hash);
  CHECK(a.train.size() + a.valid.size() + a.test.size() == 160);
  CHECK(a.train.size() == b.train.size());
  CHECK(a.vocab.size() == b.vocab.size());
  CHECK(a.vocab.size() > Vocabulary::kReserved);
  CHECK(a.cap > 0);
  CHECK_FALSE(a.valid.empty());
  CHECK_FALSE(a.test.empty());

  RunConfig other = cfg;
  other.train_data = "toy:160:6";
  CHECK(resolve_data(other).corpus_hash != a.corpus_hash);

  RunConfig capped = cfg;
  capped.max_len = 3;
  CHECK(resolve_data(capped).cap == 3);

  RunConfig bad = cfg;
  bad.train_data = "toy:160";
  CHECK_THROWS_AS((void)resolve_data(bad), ConfigError);
  bad.train_data = "toy:many:1";
  CHECK_THROWS_AS((void)resolve_data(bad), ConfigError);
  bad.train_data = "/nonexistent/corpus.txt";
  CHECK_THROWS_AS((void)resolve_data(bad), DataError);

  // Explicit files: train + valid honored, absent test stays empty; a test
  // split without a validation split is rejected.
  const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", "epsilon"};
  const std::string train_path = root_dir() + "/file_train.txt";
  const std::string valid_path = root_dir() + "/file_valid.txt";
  write_corpus_file(train_path, words, 40, 11);
  write_corpus_file(valid_path, words, 8, 12);
  RunConfig files = cfg;
  files.train_data = train_path;
  files.valid_data = valid_path;
  const ResolvedData d = resolve_data(files);
  CHECK(d.train.size() == 40);
  CHECK(d.valid.size() == 8);
  CHECK(d.test.empty());

  RunConfig no_valid = cfg;
  no_valid.train_data = train_path;
  no_valid.test_data = valid_path;
  CHECK_THROWS_AS((void)resolve_data(no_valid), DataError);
}

TEST_CASE("training writes a reproducible run directory") {
  const TrainResult& r = shared_run();
  CHECK(fs::exists(r.best_checkpoint));
  CHECK(fs::exists(r.metrics_path));
  CHECK(fs::exists(r.config.out_dir + "/run_info.json"));
  CHECK(fs::exists(r.config.out_dir + "/final_eval.json"));

  const json info = json::parse(slurp(r.config.out_dir + "/run_info.json"));
  CHECK(info["seed"] == r.config.seed);
  CHECK(info["train_sentences"].get<std::size_t>() > 0);
  CHECK(info["vocab_size"].get<int>() > Vocabulary::kReserved);
  CHECK(info["config"].get<std::string>() == serialize_config(r.config));

  const std::vector<json> rows = read_jsonl(r.metrics_path);
  REQUIRE(!rows.empty());
  long long last_step = 0;
  int train_rows = 0, valid_rows = 0, final_rows = 0;
  for (const json& row : rows) {
    const std::string split = row.at("split");
    if (split == "train") {
      ++train_rows;
      const long long step = row.at("step");
      CHECK(step == last_step + 1);  // monotone, gapless
      last_step = step;
      for (const char* key : {"distortion", "rate", "loss", "beta", "u", "wall"}) {
        CAPTURE(key);
        CHECK(row.contains(key));
      }
    } else if (split == "valid") {
      ++valid_rows;
      CHECK(row.contains("nll"));
      CHECK(row.contains("ppl"));
      CHECK(row.contains("ppl_no_eos"));
    } else {
      CHECK(split == "final");
      ++final_rows;
    }
  }
  CHECK(train_rows == static_cast<int>(r.step_rates.size()));
  CHECK(valid_rows == r.epochs_run);
  CHECK(final_rows == 1);
  CHECK(r.best_epoch >= 1);
  CHECK(r.best_epoch <= r.epochs_run);
  CHECK(std::isfinite(r.best_val_nll));
  CHECK(r.final_report.sentences > 0);
  CHECK(r.final_report.samples == r.config.final_samples);
}

TEST_CASE("same seed reproduces the metrics stream bit-exactly") {
  RunConfig a = tiny_config("det_a");
  a.epochs = 1;
  a.train_data = "toy:120:9";
  RunConfig b = a;
  b.out_dir = root_dir() + "/det_b";
  const TrainResult ra = cmd_train(a);
  const TrainResult rb = cmd_train(b);
  CHECK(metrics_without_wall(ra.metrics_path) == metrics_without_wall(rb.metrics_path));
  CHECK(slurp(a.out_dir + "/final_eval.json") == slurp(b.out_dir + "/final_eval.json"));

  // The checkpoints differ only in the embedded run.out line; every learned
  // tensor must agree bit-exactly.
  const Checkpoint cka = load_checkpoint(ra.best_checkpoint);
  const Checkpoint ckb = load_checkpoint(rb.best_checkpoint);
  REQUIRE(cka.names == ckb.names);
  CHECK(cka.step == ckb.step);
  for (std::size_t i = 0; i < cka.values.size(); ++i) {
    CAPTURE(cka.names[i]);
    CHECK(cka.values[i].data == ckb.values[i].data);
  }

  RunConfig c = a;
  c.out_dir = root_dir() + "/det_c";
  c.seed = 77;
  const TrainResult rc = cmd_train(c);
  CHECK(metrics_without_wall(ra.metrics_path) != metrics_without_wall(rc.metrics_path));
}

TEST_CASE("checkpoint save/load/save round trip is byte-identical") {
  const TrainResult& r = shared_run();
  const Checkpoint ck = load_checkpoint(r.best_checkpoint);
  const std::string copy1 = root_dir() + "/ck_copy1.svck";
  const std::string copy2 = root_dir() + "/ck_copy2.svck";
  save_checkpoint(ck, copy1);
  CHECK(slurp(r.best_checkpoint) == slurp(copy1));
  save_checkpoint(load_checkpoint(copy1), copy2);
  CHECK(slurp(copy1) == slurp(copy2));
}

TEST_CASE("restored models reproduce the checkpointed state exactly") {
  const TrainResult& r = shared_run();
  const Checkpoint ck = load_checkpoint(r.best_checkpoint);
  RestoredModel m = restore_model(ck);
  REQUIRE(m.vae != nullptr);
  CHECK(m.step == ck.step);
  CHECK(m.vocab.id_to_token == ck.vocab.id_to_token);
  CHECK(m.controller.beta == ck.controller.beta);
  CHECK(m.controller.u == ck.controller.u);
  CHECK(m.controller.step == ck.controller.step);
  CHECK(serialize_config(m.config) == ck.config_text);

  // Re-checkpointing the restored model reproduces every tensor bit-exactly.
  const Checkpoint again = make_checkpoint(*m.vae, m.vocab, m.controller, m.step, ck.config_text);
  REQUIRE(again.names == ck.names);
  for (std::size_t i = 0; i < ck.values.size(); ++i) {
    CAPTURE(ck.names[i]);
    CHECK(again.values[i].data == ck.values[i].data);
    CHECK(again.values[i].rows() == ck.values[i].rows());
    CHECK(again.values[i].cols() == ck.values[i].cols());
  }
}

TEST_CASE("checkpoint loading rejects corrupt files") {
  const std::string junk = root_dir() + "/junk.svck";
  spit(junk, "JUNKJUNKJUNKJUNK");
  CHECK_THROWS_AS((void)load_checkpoint(junk), DataError);

  const std::string truncated = root_dir() + "/truncated.svck";
  const std::string full = slurp(shared_run().best_checkpoint);
  spit(truncated, full.substr(0, full.size() / 3));
  CHECK_THROWS((void)load_checkpoint(truncated));

  CHECK_THROWS_AS((void)load_checkpoint(root_dir() + "/missing.svck"), DataError);
}

TEST_CASE("evaluate matches the trainer's final report exactly") {
  const TrainResult& r = shared_run();
  const EvalReport rep =
      cmd_evaluate(r.best_checkpoint, "valid", r.config.final_samples, root_dir() + "/evalout");
  CHECK(rep.to_json() == r.final_report.to_json());
  CHECK(fs::exists(root_dir() + "/evalout/eval_valid.json"));
  CHECK(EvalReport::from_json(slurp(root_dir() + "/evalout/eval_valid.json")).to_json() ==
        rep.to_json());

  // samples <= 0 falls back to the config's final_samples.
  const EvalReport fallback = cmd_evaluate(r.best_checkpoint, "valid", 0);
  CHECK(fallback.to_json() == rep.to_json());

  // Other splits run, with their own sentence counts.
  const EvalReport test_rep = cmd_evaluate(r.best_checkpoint, "test", 2);
  CHECK(test_rep.samples == 2);
  CHECK(test_rep.sentences > 0);
  CHECK(test_rep.sentences != rep.sentences);

  CHECK_THROWS_AS((void)cmd_evaluate(r.best_checkpoint, "dev", 2), ConfigError);
  CHECK_THROWS_AS((void)cmd_evaluate(root_dir() + "/missing.svck", "valid", 2), DataError);
}

TEST_CASE("evaluate split selection guards against drifted or empty corpora") {
  const std::vector<std::string> words = {"oak", "elm", "fir", "ash", "yew", "pine"};
  const std::string train_path = root_dir() + "/drift_train.txt";
  const std::string valid_path = root_dir() + "/drift_valid.txt";
  write_corpus_file(train_path, words, 48, 31);
  write_corpus_file(valid_path, words, 8, 32);

  RunConfig cfg = tiny_config("drift");
  cfg.epochs = 1;
  cfg.train_data = train_path;
  cfg.valid_data = valid_path;
  const TrainResult r = cmd_train(cfg);

  // No test file was configured, so that split is empty.
  CHECK_THROWS_AS((void)cmd_evaluate(r.best_checkpoint, "test", 2), DataError);

  // Rewriting the training file with a different vocabulary must be caught.
  write_corpus_file(train_path, {"zebra", "walrus", "otter", "lynx"}, 48, 33);
  CHECK_THROWS_AS((void)cmd_evaluate(r.best_checkpoint, "valid", 2), DataError);
}

TEST_CASE("sampling modes generate n sentences with in-range TER neighbors") {
  const TrainResult& r = shared_run();
  const ResolvedData data = resolve_data(r.config);
  for (const char* mode : {"greedy-prior", "ancestral-prior", "greedy-posterior"}) {
    CAPTURE(mode);
    const std::vector<SampleRow> rows = cmd_sample(r.best_checkpoint, mode, 4, 99);
    REQUIRE(rows.size() == 4);
    for (const SampleRow& row : rows) {
      CHECK(row.distance >= 0.0);
      CHECK(row.distance <= 1.0);
      CHECK(row.neighbor < data.train.size());
    }
    const std::vector<SampleRow> again = cmd_sample(r.best_checkpoint, mode, 4, 99);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].text == again[i].text);
      CHECK(rows[i].neighbor == again[i].neighbor);
      CHECK(rows[i].distance == again[i].distance);
    }
  }
  // A different seed changes ancestral samples.
  const auto s1 = cmd_sample(r.best_checkpoint, "ancestral-prior", 6, 1);
  const auto s2 = cmd_sample(r.best_checkpoint, "ancestral-prior", 6, 2);
  bool any_diff = false;
  for (std::size_t i = 0; i < s1.size(); ++i) any_diff |= (s1[i].text != s2[i].text);
  CHECK(any_diff);

  CHECK_THROWS_AS((void)cmd_sample(r.best_checkpoint, "beam", 2, 1), ConfigError);
  CHECK_THROWS_AS((void)cmd_sample(r.best_checkpoint, "greedy-prior", 0, 1), ConfigError);
}

TEST_CASE("language-model checkpoints evaluate but cannot sample from a latent space") {
  RunConfig cfg = tiny_config("lm");
  cfg.model_type = "rnnlm";
  cfg.epochs = 1;
  cfg.train_data = "toy:120:4";
  const TrainResult r = cmd_train(cfg);
  CHECK(r.final_report.samples == 1);
  CHECK(r.final_report.rate == 0.0);

  const EvalReport rep = cmd_evaluate(r.best_checkpoint, "valid", 16);
  CHECK(rep.samples == 1);  // exact NLL; the sample count does not apply
  CHECK(rep.nll_mean == doctest::Approx(r.final_report.nll_mean).epsilon(1e-12));
  CHECK(rep.ppl_with_eos > 1.0);
  CHECK(rep.ppl_without_eos > rep.ppl_with_eos);

  CHECK_THROWS_AS((void)cmd_sample(r.best_checkpoint, "greedy-prior", 2, 1), DataError);
  CHECK_THROWS_AS((void)cmd_homotopy(r.best_checkpoint, "a b", "c d", 3, 1), DataError);
}

TEST_CASE("homotopy decodes the requested number of interpolation points") {
  const TrainResult& r = shared_run();
  const HomotopyPrintout h = cmd_homotopy(r.best_checkpoint, "the reef glows", "a tide turns", 5, 3);
  CHECK(h.lines.size() == 5);
  CHECK(h.raw.zs.size() == 5);
  CHECK(h.raw.decoded.size() == 5);
  REQUIRE(h.raw.endpoint_a.size() >= 2);
  CHECK(h.raw.endpoint_a.front() == Vocabulary::kBos);
  CHECK(h.raw.endpoint_a.back() == Vocabulary::kEos);

  const HomotopyPrintout again =
      cmd_homotopy(r.best_checkpoint, "the reef glows", "a tide turns", 5, 3);
  CHECK(h.lines == again.lines);

  // Unknown words map to UNK rather than failing.
  CHECK_NOTHROW((void)cmd_homotopy(r.best_checkpoint, "qqqq zzzz", "wwww", 2, 1));
  CHECK_THROWS((void)cmd_homotopy(r.best_checkpoint, "a b", "c d", 1, 1));
}

TEST_CASE("neighbors returns the k closest training sentences under TER") {
  const TrainResult& r = shared_run();
  const ResolvedData data = resolve_data(r.config);
  const std::string query = detokenize(data.train.sentences[7]);

  const std::vector<NeighborRow> rows = cmd_neighbors(r.best_checkpoint, query, 3);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].distance == 0.0);
  CHECK(detokenize(data.train.sentences[rows[0].index]) == query);
  CHECK(rows[0].distance <= rows[1].distance);
  CHECK(rows[1].distance <= rows[2].distance);

  const std::vector<NeighborRow> all =
      cmd_neighbors(r.best_checkpoint, query, static_cast<int>(data.train.size()) + 50);
  CHECK(all.size() == data.train.size());

  CHECK_THROWS_AS((void)cmd_neighbors(r.best_checkpoint, query, 0), ConfigError);
}

TEST_CASE("tune searches the technique box and persists a resumable history") {
  RunConfig cfg = tiny_config("tune");
  cfg.epochs = 1;
  cfg.train_data = "toy:120:2";
  cfg.final_samples = 4;

  const TuneCommandResult first = cmd_tune(cfg, 3);
  CHECK(first.result.history.size() == 3);
  CHECK(fs::exists(first.history_path));
  CHECK(read_jsonl(first.history_path).size() == 3);
  CHECK(fs::exists(cfg.out_dir + "/trial_000/metrics.jsonl"));
  CHECK(fs::exists(cfg.out_dir + "/trial_002/metrics.jsonl"));

  const RunConfig best = parse_config_file(first.best_config_path);
  CHECK(best.objective.target_rate == doctest::Approx(first.result.best_native[0]).epsilon(1e-12));
  CHECK(best.objective.target_rate >= 0.5);
  CHECK(best.objective.target_rate <= 16.0);

  // Budget already met: nothing new is evaluated, the history is untouched.
  const std::string before = slurp(first.history_path);
  const TuneCommandResult repeat = cmd_tune(cfg, 3);
  CHECK(repeat.result.history.size() == 3);
  CHECK(slurp(first.history_path) == before);

  // One more iteration resumes from the saved history.
  const TuneCommandResult extended = cmd_tune(cfg, 4);
  CHECK(extended.result.history.size() == 4);
  const std::string after = slurp(first.history_path);
  CHECK(after.substr(0, before.size()) == before);
  CHECK(read_jsonl(first.history_path).size() == 4);

  RunConfig vanilla = cfg;
  vanilla.objective.technique = Technique::Vanilla;
  CHECK_THROWS_AS((void)cmd_tune(vanilla, 2), ConfigError);
}

TEST_CASE("plot renders SVG and CSV from the metrics stream") {
  const TrainResult& r = shared_run();
  const PlotPaths paths = cmd_plot(r.metrics_path, root_dir() + "/plots");
  for (const std::string& p :
       {paths.rate_svg, paths.rate_csv, paths.ppl_svg, paths.ppl_csv}) {
    CAPTURE(p);
    CHECK(fs::exists(p));
  }
  const std::string rate_svg = slurp(paths.rate_svg);
  CHECK(rate_svg.find("<svg") != std::string::npos);
  CHECK(rate_svg.find("polyline") != std::string::npos);
  const std::string ppl_svg = slurp(paths.ppl_svg);
  CHECK(ppl_svg.find("circle") != std::string::npos);

  std::istringstream csv(slurp(paths.rate_csv));
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == static_cast<int>(r.step_rates.size()) + 1);  // header + one per step

  CHECK_THROWS_AS((void)cmd_plot(root_dir() + "/no_such.jsonl", root_dir() + "/plots"), DataError);
  const std::string bad = root_dir() + "/bad_metrics.jsonl";
  spit(bad, "this is not json\n");
  CHECK_THROWS_AS((void)cmd_plot(bad, root_dir() + "/plots"), DataError);
}

TEST_CASE("binary: subcommands succeed end to end with documented output") {
  const std::string dir = root_dir() + "/cli_e2e";
  fs::create_directories(dir);
  const std::string cfg_path = dir + "/run.cfg";
  spit(cfg_path,
       "model.emb = 16\nmodel.hidden = 16\nmodel.latent = 4\n"
       "objective.technique = mdr\nobjective.r = 2\n"
       "optimizer.batch = 32\ntrain.epochs = 1\ntrain.eval_samples = 4\n"
       "train.final_samples = 8\ndata.train = toy:120:8\nrun.out = " +
           dir + "/run\n");

  const CmdOut train = run_cli("train --config " + cfg_path + " --seed 123 --rate 3");
  CHECK(train.code == 0);
  CHECK(train.text.find("checkpoint:") != std::string::npos);
  CHECK(train.text.find("PPL (with EOS):") != std::string::npos);
  const json info = json::parse(slurp(dir + "/run/run_info.json"));
  CHECK(info["seed"] == 123);
  CHECK(info["config"].get<std::string>().find("objective.r = 3\n") != std::string::npos);

  const std::string ckpt = dir + "/run/best.svck";
  const CmdOut eval = run_cli("evaluate " + ckpt + " --split valid --samples 4");
  CHECK(eval.code == 0);
  CHECK(eval.text.find("PPL (with EOS):") != std::string::npos);
  CHECK(eval.text.find("PPL (without EOS):") != std::string::npos);

  const CmdOut sample = run_cli("sample " + ckpt + " --mode ancestral-prior -n 3 --seed 4");
  CHECK(sample.code == 0);
  CHECK(sample.text.find("nearest train #") != std::string::npos);

  const CmdOut hom = run_cli("homotopy " + ckpt + " \"the reef\" \"a tide\" --steps 3");
  CHECK(hom.code == 0);
  CHECK(hom.text.find(" 2:") != std::string::npos);

  const CmdOut nb = run_cli("neighbors " + ckpt + " \"the reef\" -k 2");
  CHECK(nb.code == 0);
  CHECK(nb.text.find("TER") != std::string::npos);

  const CmdOut plot = run_cli("plot " + dir + "/run/metrics.jsonl --out " + dir + "/plots");
  CHECK(plot.code == 0);
  CHECK(fs::exists(dir + "/plots/rate_progression.svg"));
}

TEST_CASE("binary: exit codes distinguish config, numerical, and data errors") {
  CHECK(run_cli("train --config /nonexistent.cfg").code == 2);

  const std::string badcfg = root_dir() + "/bad.cfg";
  spit(badcfg, "nonsense.key = 1\n");
  CHECK(run_cli("train --config " + badcfg).code == 2);

  CHECK(run_cli("evaluate " + root_dir() + "/missing.svck").code == 4);

  // Every tuning trial fails on an unreadable validation file; with zero
  // successes the tuner aborts numerically.
  const std::string failcfg = root_dir() + "/fail.cfg";
  spit(failcfg,
       "model.emb = 16\nmodel.hidden = 16\nmodel.latent = 4\n"
       "objective.technique = mdr\ntrain.epochs = 1\n"
       "data.train = toy:40:1\ndata.valid = /nonexistent/valid.txt\n"
       "run.out = " +
           root_dir() + "/fail_out\n");
  CHECK(run_cli("tune --config " + failcfg + " --iterations 2").code == 3);

  CHECK(run_cli("frobnicate").code != 0);
  CHECK(run_cli("").code != 0);
}
