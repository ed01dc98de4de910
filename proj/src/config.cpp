#include "svlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "svlab/common.hpp"

namespace svlab {
namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config: bad number for " + key + ": '" + text + "'");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config: bad integer for " + key + ": '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config: bad unsigned integer for " + key + ": '" + text + "'");
  }
  return v;
}

struct KeyHandler {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::vector<KeyHandler> make_registry() {
  std::vector<KeyHandler> reg;
  auto add_str = [&](const std::string& key, std::string RunConfig::* field) {
    reg.push_back({key, [field](const RunConfig& c) { return c.*field; },
                   [field](RunConfig& c, const std::string& v) { c.*field = v; }});
  };
  auto add_int = [&](const std::string& key, int RunConfig::* field) {
    reg.push_back({key,
                   [field](const RunConfig& c) { return std::to_string(c.*field); },
                   [key, field](RunConfig& c, const std::string& v) {
                     c.*field = static_cast<int>(parse_int(key, v));
                   }});
  };
  auto add_double = [&](const std::string& key, double RunConfig::* field) {
    reg.push_back({key, [field](const RunConfig& c) { return format_double(c.*field); },
                   [key, field](RunConfig& c, const std::string& v) {
                     c.*field = parse_double(key, v);
                   }});
  };
  auto add_obj = [&](const std::string& key, double ObjectiveConfig::* field) {
    reg.push_back({key,
                   [field](const RunConfig& c) { return format_double(c.objective.*field); },
                   [key, field](RunConfig& c, const std::string& v) {
                     c.objective.*field = parse_double(key, v);
                   }});
  };

  add_str("data.test", &RunConfig::test_data);
  add_str("data.train", &RunConfig::train_data);
  add_str("data.valid", &RunConfig::valid_data);
  add_int("data.min_count", &RunConfig::min_count);

  add_int("model.dec_layers", &RunConfig::dec_layers);
  add_int("model.emb", &RunConfig::emb);
  add_int("model.enc_layers", &RunConfig::enc_layers);
  add_int("model.hidden", &RunConfig::hidden);
  add_int("model.latent", &RunConfig::latent);
  add_int("model.max_len", &RunConfig::max_len);
  reg.push_back({"model.preset", [](const RunConfig& c) { return c.preset; },
                 [](RunConfig& c, const std::string& v) {
                   apply_preset(c, v);  // also records the name
                 }});
  add_str("model.prior", &RunConfig::prior);
  add_int("model.prior_components", &RunConfig::prior_components);
  add_str("model.type", &RunConfig::model_type);

  add_obj("objective.anneal_increment", &ObjectiveConfig::anneal_increment);
  add_obj("objective.beta", &ObjectiveConfig::beta);
  add_obj("objective.info_beta", &ObjectiveConfig::info_beta);
  add_obj("objective.info_lambda", &ObjectiveConfig::info_lambda);
  add_obj("objective.lag_alpha", &ObjectiveConfig::lag_alpha);
  add_obj("objective.lag_target_elbo", &ObjectiveConfig::lag_target_elbo);
  add_obj("objective.lag_target_mmd", &ObjectiveConfig::lag_target_mmd);
  add_obj("objective.r", &ObjectiveConfig::target_rate);
  add_obj("objective.rho", &ObjectiveConfig::rho);
  add_obj("objective.sfb_beta_max", &ObjectiveConfig::sfb_beta_max);
  add_obj("objective.sfb_beta_min", &ObjectiveConfig::sfb_beta_min);
  add_obj("objective.sfb_epsilon", &ObjectiveConfig::sfb_epsilon);
  add_obj("objective.sfb_gamma", &ObjectiveConfig::sfb_gamma);
  add_obj("objective.sfb_omega", &ObjectiveConfig::sfb_omega);
  reg.push_back({"objective.technique",
                 [](const RunConfig& c) { return technique_to_string(c.objective.technique); },
                 [](RunConfig& c, const std::string& v) {
                   c.objective.technique = technique_from_string(v);
                 }});
  add_obj("objective.wd_decrement", &ObjectiveConfig::wd_decrement);

  add_int("optimizer.batch", &RunConfig::batch);
  add_double("optimizer.beta1", &RunConfig::beta1);
  add_double("optimizer.beta2", &RunConfig::beta2);
  add_double("optimizer.clip", &RunConfig::clip);
  add_double("optimizer.dropout", &RunConfig::dropout);
  add_double("optimizer.lr", &RunConfig::lr);
  reg.push_back({"optimizer.weight_decay",
                 [](const RunConfig& c) { return c.weight_decay; },
                 [](RunConfig& c, const std::string& v) {
                   if (v != "auto") parse_double("optimizer.weight_decay", v);
                   c.weight_decay = v;
                 }});

  add_str("run.out", &RunConfig::out_dir);

  add_int("train.epochs", &RunConfig::epochs);
  add_int("train.eval_samples", &RunConfig::eval_samples);
  add_int("train.final_samples", &RunConfig::final_samples);
  add_int("train.patience", &RunConfig::patience);
  reg.push_back({"train.seed",
                 [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = parse_u64("train.seed", v); }});

  std::sort(reg.begin(), reg.end(),
            [](const KeyHandler& a, const KeyHandler& b) { return a.key < b.key; });
  return reg;
}

const std::vector<KeyHandler>& registry() {
  static const std::vector<KeyHandler> reg = make_registry();
  return reg;
}

const KeyHandler* find_key(const std::string& key) {
  const auto& reg = registry();
  const auto it = std::lower_bound(
      reg.begin(), reg.end(), key,
      [](const KeyHandler& h, const std::string& k) { return h.key < k; });
  if (it == reg.end() || it->key != key) return nullptr;
  return &*it;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "toy") {
    cfg.emb = 48;
    cfg.hidden = 48;
    cfg.latent = 8;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.prior_components = 10;
    cfg.max_len = 0;
  } else if (name == "ptb") {
    cfg.emb = 256;
    cfg.hidden = 256;
    cfg.latent = 32;
    cfg.enc_layers = 1;
    cfg.dec_layers = 2;
    cfg.prior_components = 100;
    cfg.max_len = 59;
  } else if (name == "yahoo" || name == "yelp") {
    cfg.emb = 512;
    cfg.hidden = 512;
    cfg.latent = 32;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.prior_components = 100;
    cfg.max_len = 200;
  } else {
    throw ConfigError("config: unknown preset '" + name + "'");
  }
  cfg.preset = name;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const KeyHandler* h = find_key(key);
  if (h == nullptr) throw ConfigError("config: unknown key '" + key + "'");
  h->set(cfg, value);
}

RunConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
    }
    pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  RunConfig cfg;
  for (const auto& [k, v] : pairs) {
    if (k == "model.preset") set_config_value(cfg, k, v);
  }
  for (const auto& [k, v] : pairs) {
    if (k != "model.preset") set_config_value(cfg, k, v);
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("config: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const KeyHandler& h : registry()) out << h.key << " = " << h.get(cfg) << "\n";
  return out.str();
}

void RunConfig::validate() const {
  if (model_type != "senvae" && model_type != "rnnlm") {
    throw ConfigError("config: model.type must be senvae or rnnlm");
  }
  if (prior != "standard" && prior != "mog" && prior != "vamp") {
    throw ConfigError("config: model.prior must be standard, mog, or vamp");
  }
  if (emb < 1 || hidden < 1 || latent < 1 || enc_layers < 1 || dec_layers < 1) {
    throw ConfigError("config: model dimensions must be >= 1");
  }
  if (emb != hidden) {
    throw ConfigError("config: model.emb must equal model.hidden (tied output embedding)");
  }
  if (prior_components < 1) throw ConfigError("config: model.prior_components must be >= 1");
  if (max_len < 0) throw ConfigError("config: model.max_len must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("config: optimizer.lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("config: optimizer.beta1/beta2 must be in [0, 1)");
  }
  if (batch < 1) throw ConfigError("config: optimizer.batch must be >= 1");
  if (!(clip > 0.0)) throw ConfigError("config: optimizer.clip must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("config: optimizer.dropout must be in [0, 1)");
  }
  if (weight_decay != "auto") {
    const double wd = parse_double("optimizer.weight_decay", weight_decay);
    if (!(wd >= 0.0)) throw ConfigError("config: optimizer.weight_decay must be >= 0 or auto");
  }
  if (epochs < 1) throw ConfigError("config: train.epochs must be >= 1");
  if (patience < 1) throw ConfigError("config: train.patience must be >= 1");
  if (eval_samples < 1 || final_samples < 1) {
    throw ConfigError("config: train.eval_samples and train.final_samples must be >= 1");
  }
  if (min_count < 1) throw ConfigError("config: data.min_count must be >= 1");
  if (train_data.empty()) throw ConfigError("config: data.train is required");
  try {
    objective.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

double resolve_weight_decay(const RunConfig& cfg, std::size_t n_train) {
  if (cfg.weight_decay != "auto") {
    return parse_double("optimizer.weight_decay", cfg.weight_decay);
  }
  check(n_train > 0, "weight decay: empty training set");
  return (1.0 - cfg.dropout) / static_cast<double>(n_train);
}

std::vector<std::pair<std::string, ParamSpec>> tunable_params(Technique t) {
  using P = std::pair<std::string, ParamSpec>;
  switch (t) {
    case Technique::Anneal:
      return {P{"objective.anneal_increment",
                {"anneal_increment", 1e-6, 1e-2, ParamScale::Log10, false}}};
    case Technique::WordDrop:
      return {P{"objective.wd_decrement",
                {"wd_decrement", 1e-6, 1e-2, ParamScale::Log10, false}}};
    case Technique::FreeBits:
    case Technique::Mdr:
      return {P{"objective.r", {"r", 0.5, 16.0, ParamScale::Linear, false}}};
    case Technique::Sfb:
      return {P{"objective.r", {"r", 0.5, 16.0, ParamScale::Linear, false}},
              P{"objective.sfb_gamma", {"sfb_gamma", 1.0, 1.5, ParamScale::Linear, false}},
              P{"objective.sfb_epsilon", {"sfb_epsilon", 0.5, 1.0, ParamScale::Linear, false}},
              P{"objective.sfb_omega", {"sfb_omega", 1e-4, 0.1, ParamScale::Log10, false}}};
    case Technique::BetaVae:
      return {P{"objective.beta", {"beta", 0.1, 1.0, ParamScale::Linear, false}}};
    case Technique::InfoVae:
      return {P{"objective.info_beta", {"info_beta", 0.1, 1.0, ParamScale::Linear, false}},
              P{"objective.info_lambda", {"info_lambda", 1.0, 1000.0, ParamScale::Log10, false}}};
    case Technique::LagVae:
      return {P{"objective.lag_alpha", {"lag_alpha", -50.0, -1.0, ParamScale::Linear, false}},
              P{"objective.lag_target_mmd",
                {"lag_target_mmd", 1e-4, 0.1, ParamScale::Log10, false}},
              P{"objective.lag_target_elbo",
                {"lag_target_elbo", 20.0, 200.0, ParamScale::Linear, false}}};
    case Technique::Vanilla:
      break;
  }
  throw ConfigError("tune: technique '" + technique_to_string(t) +
                    "' has no tunable hyperparameters");
}

}  // namespace svlab
