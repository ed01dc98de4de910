#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svlab/bayesopt.hpp"
#include "svlab/config.hpp"
#include "svlab/evaluation.hpp"
#include "svlab/trainer.hpp"

namespace svlab {

// Rebuilds the checkpoint's corpus from its embedded config, verifies the
// stored vocabulary against the rebuilt one (mismatch is a data error), and
// produces a full report on the requested split ("train" | "valid" | "test").
// samples <= 0 falls back to the config's train.final_samples. When out_dir
// is nonempty the report is written to out_dir/eval_<split>.json.
EvalReport cmd_evaluate(const std::string& checkpoint_path, const std::string& split,
                        int samples, const std::string& out_dir = "");

struct SampleRow {
  Sentence text;              // generated sentence
  std::size_t neighbor = 0;   // index of the closest training sentence
  double distance = 0.0;      // TER to that neighbor, in [0, 1]
};

// n generations from a checkpointed model plus a nearest-neighbor TER table
// against the training split. Modes: greedy-prior, ancestral-prior,
// greedy-posterior (greedy decodes of posterior samples of validation
// sentences, cycling).
std::vector<SampleRow> cmd_sample(const std::string& checkpoint_path, const std::string& mode,
                                  int n, std::uint64_t seed);

struct HomotopyPrintout {
  HomotopyResult raw;
  std::vector<std::string> lines;  // detokenized greedy decode per step
};

// Tokenizes the two sentences with the checkpoint vocabulary and decodes
// `steps` points along the latent interpolation between posterior samples.
HomotopyPrintout cmd_homotopy(const std::string& checkpoint_path, const std::string& sentence_a,
                              const std::string& sentence_b, int steps, std::uint64_t seed);

struct NeighborRow {
  std::size_t index = 0;
  double distance = 0.0;
  std::string text;
};

// The k training sentences closest to the query under TER (ties keep the
// earlier index).
std::vector<NeighborRow> cmd_neighbors(const std::string& checkpoint_path,
                                       const std::string& sentence, int k);

struct TuneCommandResult {
  TuneResult result;
  RunConfig best_config;
  std::string history_path;      // <out>/tune_history.jsonl, saved per iteration
  std::string best_config_path;  // <out>/best_config.cfg
};

// Bayesian optimization over the technique's tunable box: each trial trains
// under cfg with the suggested values patched in and reports the final
// validation NLL. An existing history file is resumed and counts toward the
// iteration budget.
TuneCommandResult cmd_tune(const RunConfig& cfg, int iterations,
                           FitMethod method = FitMethod::MarginalLikelihood);

struct PlotPaths {
  std::string rate_svg, rate_csv;
  std::string ppl_svg, ppl_csv;
};

// Reads a metrics.jsonl stream and renders the rate-progression curve
// (training steps) and the PPL-vs-rate scatter (validation epochs), each as
// SVG plus the underlying CSV.
PlotPaths cmd_plot(const std::string& metrics_path, const std::string& out_dir);

}  // namespace svlab
