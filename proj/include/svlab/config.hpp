#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "svlab/bayesopt.hpp"
#include "svlab/objectives.hpp"

namespace svlab {

// Full description of a run. The flat dotted key-value text format keeps
// tuning histories diff-friendly; serialize() materializes every default in
// sorted key order, so parse(serialize(parse(text))) is byte-identical.
struct RunConfig {
  // model.*
  std::string model_type = "senvae";  // senvae | rnnlm
  std::string preset = "toy";         // toy | ptb | yahoo | yelp
  int emb = 48;
  int hidden = 48;
  int latent = 8;
  int enc_layers = 1;
  int dec_layers = 1;
  int max_len = 0;  // 0: compute from training data (mean + 3 std)
  std::string prior = "standard";  // standard | mog | vamp
  int prior_components = 10;

  // objective.*
  ObjectiveConfig objective;

  // optimizer.*
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch = 64;
  double clip = 1.5;
  double dropout = 0.4;
  std::string weight_decay = "auto";  // "auto": (1 - dropout) / N_train

  // train.*
  std::uint64_t seed = 1;
  int epochs = 50;
  int patience = 5;
  int eval_samples = 64;     // early-stopping importance samples
  int final_samples = 1000;  // final-report importance samples

  // data.*
  std::string train_data = "toy:5000:1";  // path or toy:<n>:<seed>
  std::string valid_data;                 // empty: seeded 80/10/10 split
  std::string test_data;
  int min_count = 1;

  // run.*
  std::string out_dir = "runs/default";

  void validate() const;
};

// Applies a named preset's model-shape defaults (other fields untouched).
void apply_preset(RunConfig& cfg, const std::string& name);

// Sets one dotted key from its text value. Unknown key or bad value raises
// ConfigError. This is the same path the parser uses.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Reads flat `key = value` lines; '#' starts a comment; blank lines are
// skipped. A model.preset key is applied first, then remaining keys in file
// order (so explicit keys override the preset).
RunConfig parse_config(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Every key, sorted, one per line, defaults materialized.
std::string serialize_config(const RunConfig& cfg);

// Numeric weight decay for a given training-set size.
double resolve_weight_decay(const RunConfig& cfg, std::size_t n_train);

// Table of technique-specific tunables: (config key, box) pairs. Raises
// ConfigError for techniques with nothing to tune.
std::vector<std::pair<std::string, ParamSpec>> tunable_params(Technique t);

}  // namespace svlab
