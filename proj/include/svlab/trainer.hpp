#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svlab/checkpoint.hpp"
#include "svlab/config.hpp"
#include "svlab/evaluation.hpp"
#include "svlab/pipeline.hpp"

namespace svlab {

// Corpus splits plus the artifacts derived from the training split.
struct ResolvedData {
  Corpus train, valid, test;
  Vocabulary vocab;
  int cap = 0;
  std::uint64_t corpus_hash = 0;
};

// data.train is either a file path or toy:<n>:<seed>. Splits come from
// data.valid / data.test when given, otherwise from the seeded 80/10/10
// hash split of the training source.
ResolvedData resolve_data(const RunConfig& cfg);

struct TrainResult {
  RunConfig config;
  std::string best_checkpoint;  // path of the best validation snapshot
  std::string metrics_path;
  double best_val_nll = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  bool stopped_early = false;
  EvalReport final_report;          // best model at train.final_samples
  std::vector<double> step_rates;   // training-batch rate per optimizer step
  std::vector<double> step_losses;  // total loss per optimizer step
};

// Trains per the config: early stopping on validation importance-sampled NLL
// (train.eval_samples) with the configured patience, best checkpoint and
// JSONL metrics under run.out, final report at train.final_samples. A
// non-finite loss dumps diagnostics and raises NumericalError.
TrainResult cmd_train(const RunConfig& cfg);

}  // namespace svlab
