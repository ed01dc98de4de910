// svlab: train / evaluate / tune / sample / homotopy / neighbors / plot for
// sentence VAEs with autoregressive decoders.
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "svlab/commands.hpp"

namespace {

using namespace svlab;

void print_report(const EvalReport& rep, const std::string& split) {
  std::printf("split: %s  sentences: %d  importance samples: %d\n", split.c_str(), rep.sentences,
              rep.samples);
  std::printf("NLL: %.4f nats/sentence (total %.2f)\n", rep.nll_mean, rep.nll_total);
  std::printf("PPL (with EOS): %.4f\n", rep.ppl_with_eos);
  std::printf("PPL (without EOS): %.4f\n", rep.ppl_without_eos);
  std::printf("D: %.4f  R: %.4f  AU: %d  Acc_gap: %.4f\n", rep.distortion, rep.rate,
              rep.active_units, rep.acc_gap);
  if (!rep.js_curve.empty()) {
    std::printf("JS sensitivity:");
    for (double v : rep.js_curve) std::printf(" %.4f", v);
    std::printf("\n");
  }
}

int run(int argc, char** argv) {
  CLI::App app{"sentence-VAE laboratory"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, split = "valid", mode = "greedy-prior";
  std::string sentence, sentence_a, sentence_b, metrics_path, out_dir;
  std::uint64_t seed = 1;
  double rate = 0.0;
  int samples = 0, n = 10, steps = 7, k = 5, iterations = 25;
  bool mcmc = false;

  CLI::App* train = app.add_subcommand("train", "train a model from a config");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--seed", seed, "override train.seed");
  train->add_option("--rate", rate, "override objective.r");
  train->add_option("--out", out_dir, "override run.out");

  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
  evaluate->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  evaluate->add_option("--split", split, "train|valid|test");
  evaluate->add_option("--samples", samples, "importance samples per sentence");
  evaluate->add_option("--out", out_dir, "directory for eval_<split>.json");

  CLI::App* tune = app.add_subcommand("tune", "Bayesian optimization of the technique's knobs");
  tune->add_option("--config", config_path, "base config file")->required();
  tune->add_option("--iterations", iterations, "total evaluation budget");
  tune->add_option("--seed", seed, "override train.seed");
  tune->add_option("--out", out_dir, "override run.out");
  tune->add_flag("--mcmc", mcmc, "slice-sampling kernel fit instead of marginal likelihood");

  CLI::App* sample = app.add_subcommand("sample", "generate sentences with a TER neighbor table");
  sample->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  sample->add_option("--mode", mode, "greedy-prior|ancestral-prior|greedy-posterior");
  sample->add_option("-n,--n", n, "number of generations");
  sample->add_option("--seed", seed, "sampling seed");

  CLI::App* homotopy = app.add_subcommand("homotopy", "decode along a latent interpolation");
  homotopy->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  homotopy->add_option("a", sentence_a, "first sentence")->required();
  homotopy->add_option("b", sentence_b, "second sentence")->required();
  homotopy->add_option("--steps", steps, "interpolation points (>= 2)");
  homotopy->add_option("--seed", seed, "posterior sampling seed");

  CLI::App* neighbors = app.add_subcommand("neighbors", "closest training sentences under TER");
  neighbors->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  neighbors->add_option("sentence", sentence, "query sentence")->required();
  neighbors->add_option("-k,--k", k, "how many neighbors");

  CLI::App* plot = app.add_subcommand("plot", "render metrics.jsonl as SVG curves");
  plot->add_option("metrics", metrics_path, "metrics.jsonl path")->required();
  plot->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    RunConfig cfg = parse_config_file(config_path);
    if (train->count("--seed")) cfg.seed = seed;
    if (train->count("--rate")) cfg.objective.target_rate = rate;
    if (train->count("--out")) cfg.out_dir = out_dir;
    const TrainResult result = cmd_train(cfg);
    std::printf("trained %d epoch(s)%s; best validation NLL %.4f at epoch %d\n",
                result.epochs_run, result.stopped_early ? " (stopped early)" : "",
                result.best_val_nll, result.best_epoch);
    std::printf("checkpoint: %s\nmetrics: %s\n", result.best_checkpoint.c_str(),
                result.metrics_path.c_str());
    print_report(result.final_report, "valid");
    return 0;
  }
  if (evaluate->parsed()) {
    const EvalReport rep = cmd_evaluate(checkpoint_path, split, samples, out_dir);
    print_report(rep, split);
    return 0;
  }
  if (tune->parsed()) {
    RunConfig cfg = parse_config_file(config_path);
    if (tune->count("--seed")) cfg.seed = seed;
    if (tune->count("--out")) cfg.out_dir = out_dir;
    const TuneCommandResult result =
        cmd_tune(cfg, iterations, mcmc ? FitMethod::SliceMcmc : FitMethod::MarginalLikelihood);
    std::printf("best validation NLL %.4f\n", result.result.best_value);
    const auto tunables = tunable_params(cfg.objective.technique);
    for (std::size_t i = 0; i < result.result.best_native.size(); ++i) {
      std::printf("  %s = %.6g\n", tunables[i].first.c_str(), result.result.best_native[i]);
    }
    std::printf("history: %s\nbest config: %s\n", result.history_path.c_str(),
                result.best_config_path.c_str());
    return 0;
  }
  if (sample->parsed()) {
    const std::vector<SampleRow> rows = cmd_sample(checkpoint_path, mode, n, seed);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::printf("[%2zu] %s\n", i, detokenize(rows[i].text).c_str());
      std::printf("     nearest train #%zu (TER %.3f)\n", rows[i].neighbor, rows[i].distance);
    }
    return 0;
  }
  if (homotopy->parsed()) {
    const HomotopyPrintout result =
        cmd_homotopy(checkpoint_path, sentence_a, sentence_b, steps, seed);
    for (std::size_t i = 0; i < result.lines.size(); ++i) {
      std::printf("%2zu: %s\n", i, result.lines[i].c_str());
    }
    return 0;
  }
  if (neighbors->parsed()) {
    const std::vector<NeighborRow> rows = cmd_neighbors(checkpoint_path, sentence, k);
    for (const NeighborRow& row : rows) {
      std::printf("#%zu  TER %.3f  %s\n", row.index, row.distance, row.text.c_str());
    }
    return 0;
  }
  if (plot->parsed()) {
    const PlotPaths paths = cmd_plot(metrics_path, out_dir);
    std::printf("%s\n%s\n%s\n%s\n", paths.rate_svg.c_str(), paths.rate_csv.c_str(),
                paths.ppl_svg.c_str(), paths.ppl_csv.c_str());
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
