#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "svlab/config.hpp"
#include "svlab/models.hpp"
#include "svlab/objectives.hpp"
#include "svlab/pipeline.hpp"

namespace svlab {

// On-disk model snapshot: every named parameter tensor, the prior shape, the
// controller state, the vocabulary, the step counter, and the full config
// text. Binary ("SVCK", version 1, little-endian); round-trips bit-exactly.
struct Checkpoint {
  std::string config_text;
  Vocabulary vocab;
  ControllerState controller;
  long long step = 0;
  int model_kind = 1;  // 0: language model only, 1: sentence VAE
  Prior::Kind prior_kind = Prior::Kind::Standard;
  int prior_components = 0;
  std::vector<int> vamp_lengths;
  std::vector<std::string> names;
  std::vector<Tensor> values;
};

Checkpoint make_checkpoint(SentenceVae& m, const Vocabulary& vocab,
                           const ControllerState& controller, long long step,
                           const std::string& config_text);
Checkpoint make_checkpoint(RnnLm& m, const Vocabulary& vocab,
                           const ControllerState& controller, long long step,
                           const std::string& config_text);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// A model rebuilt from a checkpoint; exactly one of vae/lm is set.
struct RestoredModel {
  RunConfig config;
  Vocabulary vocab;
  ControllerState controller;
  long long step = 0;
  std::unique_ptr<SentenceVae> vae;
  std::unique_ptr<RnnLm> lm;
};

RestoredModel restore_model(const Checkpoint& ck);

}  // namespace svlab
