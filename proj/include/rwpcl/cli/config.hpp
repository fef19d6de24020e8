#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwpcl/core/errors.hpp"
#include "rwpcl/eval/kfold.hpp"
#include "rwpcl/text/utf8.hpp"
#include "rwpcl/train/grid.hpp"

namespace rwpcl::cli {

enum class KeyType { integer, number, boolean, string, choice, integer_list, number_list };

inline const char* type_name(KeyType t) {
  switch (t) {
    case KeyType::integer: return "int";
    case KeyType::number: return "float";
    case KeyType::boolean: return "bool";
    case KeyType::string: return "string";
    case KeyType::choice: return "choice";
    case KeyType::integer_list: return "int-list";
    case KeyType::number_list: return "float-list";
  }
  return "?";
}

struct KeyDef {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string description;
  std::vector<std::string> choices;  // only for KeyType::choice
};

// clang-format off
inline const std::vector<KeyDef>& config_keys() {
  static const std::vector<KeyDef> keys = {
      // run
      {"seed", KeyType::integer, "13", "master seed; every trial seed is derived from it", {}},
      {"jobs", KeyType::integer, "1", "concurrent trials for grid, kfold and ablation runs", {}},
      // data
      {"dataset", KeyType::string, "", "JSON-lines dataset file", {}},
      {"max_len", KeyType::integer, "64", "sequence length including CLS and SEP (presets: 64, 68, 215)", {}},
      {"min_count", KeyType::integer, "2", "minimum token frequency for the vocabulary", {}},
      {"keep_hashtag_text", KeyType::boolean, "false", "strip only the '#' instead of dropping hashtag tokens", {}},
      {"emoji_table", KeyType::string, "", "emoji name table (empty: the shipped table)", {}},
      {"split_train", KeyType::number, "0.8", "training share of the stratified split", {}},
      {"split_val", KeyType::number, "0.1", "validation share of the stratified split", {}},
      {"split_test", KeyType::number, "0.1", "test share of the stratified split", {}},
      // encoder
      {"layers", KeyType::integer, "2", "transformer blocks", {}},
      {"model_dim", KeyType::integer, "64", "hidden size", {}},
      {"heads", KeyType::integer, "2", "attention heads (must divide model_dim)", {}},
      {"ff_dim", KeyType::integer, "128", "feed-forward inner size", {}},
      // training
      {"epsilon", KeyType::number, "0.001", "perturbation strength", {}},
      {"lambda", KeyType::number, "0.2", "contrastive weight in the total loss, in [0,1]", {}},
      {"beta", KeyType::number, "0.005", "off-diagonal weight of the Barlow Twins loss", {}},
      {"noise_scale", KeyType::choice, "std", "read eps*||w|| as the noise std or variance", {"std", "variance"}},
      {"bt_centering", KeyType::boolean, "false", "mean-center embeddings before cross-correlation", {}},
      {"rwp", KeyType::boolean, "true", "enable the perturbed stream", {}},
      {"cl", KeyType::boolean, "true", "enable the contrastive stream", {}},
      {"batch_size", KeyType::integer, "16", "training batch size", {}},
      {"learning_rate", KeyType::number, "0.001", "AdamW learning rate", {}},
      {"epochs", KeyType::integer, "40", "maximum epochs", {}},
      {"patience", KeyType::integer, "5", "early-stopping patience in epochs", {}},
      {"weight_decay", KeyType::number, "0.01", "decoupled weight decay", {}},
      {"adam_beta1", KeyType::number, "0.9", "first-moment decay", {}},
      {"adam_beta2", KeyType::number, "0.999", "second-moment decay", {}},
      {"adam_eps", KeyType::number, "1e-08", "AdamW denominator epsilon", {}},
      {"clip_norm", KeyType::number, "1", "global gradient-norm clip (0 disables)", {}},
      {"proj_hidden", KeyType::integer, "1024", "projection hidden size", {}},
      {"proj_dim", KeyType::integer, "300", "projection output size", {}},
      {"eval_batch_size", KeyType::integer, "64", "inference chunk size", {}},
      // grid
      {"grid_batch_sizes", KeyType::integer_list, "16,32", "grid values for batch_size", {}},
      {"grid_epsilons", KeyType::number_list, "0.0005,0.0001,0.005,0.001", "grid values for epsilon", {}},
      {"grid_lambdas", KeyType::number_list, "0.1,0.2,0.3,0.4,0.5", "grid values for lambda", {}},
      // k-fold
      {"folds", KeyType::integer, "10", "k for cross-validation", {}},
      {"fold_members", KeyType::integer, "1", "models averaged per fold", {}},
      {"fold_val_ratio", KeyType::number, "0.1", "validation share of each fold's training pool", {}},
      // synthetic data
      {"synth_examples", KeyType::integer, "2000", "synthetic posts", {}},
      {"synth_classes", KeyType::integer, "2", "synthetic classes", {}},
      {"synth_vocab", KeyType::integer, "400", "synthetic vocabulary size (signal plus noise words)", {}},
      {"synth_signal_tokens", KeyType::integer, "8", "signal words owned by each class", {}},
      {"synth_noise_rate", KeyType::number, "0.5", "probability that a word is a shared noise word", {}},
      {"synth_flip_rate", KeyType::number, "0.05", "fraction of labels flipped to another class", {}},
      {"synth_min_words", KeyType::integer, "4", "shortest synthetic post in words", {}},
      {"synth_max_words", KeyType::integer, "12", "longest synthetic post in words", {}},
      {"synth_decorate", KeyType::boolean, "true", "sprinkle mentions, hashtags and URLs into posts", {}},
  };
  return keys;
}
// clang-format on

inline const KeyDef* find_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(trim(cur));
  return out;
}

inline bool parse_int(const std::string& s, long long& v) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return !s.empty() && r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

inline bool parse_number(const std::string& s, double& v) {
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return !s.empty() && r.ec == std::errc{} && r.ptr == s.data() + s.size() && std::isfinite(v);
}

}  // namespace detail

/// Resolved configuration: every registered key holds a validated value.
class Config {
 public:
  Config() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  void set(const std::string& key, const std::string& raw, const std::string& where = "") {
    const KeyDef* def = find_key(key);
    const std::string at = where.empty() ? "" : where + ": ";
    if (!def) throw ConfigError(at + "unknown config key '" + key + "'");
    const std::string v = detail::trim(raw);
    auto bad = [&](const std::string& what) {
      return ConfigError(at + "key '" + key + "' expects " + what + ", got '" + v + "'");
    };
    long long i = 0;
    double d = 0;
    switch (def->type) {
      case KeyType::integer:
        if (!detail::parse_int(v, i) || i < 0) throw bad("a non-negative integer");
        break;
      case KeyType::number:
        if (!detail::parse_number(v, d)) throw bad("a finite number");
        break;
      case KeyType::boolean:
        if (v != "true" && v != "false") throw bad("true or false");
        break;
      case KeyType::string:
        break;
      case KeyType::choice:
        if (std::find(def->choices.begin(), def->choices.end(), v) == def->choices.end()) throw bad("one of the listed choices");
        break;
      case KeyType::integer_list:
        for (const auto& p : detail::split_list(v))
          if (!detail::parse_int(p, i) || i < 0) throw bad("a comma-separated list of non-negative integers");
        break;
      case KeyType::number_list:
        for (const auto& p : detail::split_list(v))
          if (!detail::parse_number(p, d)) throw bad("a comma-separated list of numbers");
        break;
    }
    values_[key] = v;
  }

  /// "key=value" as given to --set.
  void set_assignment(const std::string& kv, const std::string& where = "--set") {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + kv + "'");
    set(detail::trim(std::string_view(kv).substr(0, eq)), kv.substr(eq + 1), where);
  }

  /// Flat file of "key = value" lines; '#' starts a comment line.
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      set_assignment(t, path + ":" + std::to_string(n));
    }
  }

  const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::string str(const std::string& key) const { return raw(key); }
  std::size_t size(const std::string& key) const {
    long long v = 0;
    detail::parse_int(raw(key), v);
    return static_cast<std::size_t>(v);
  }
  double num(const std::string& key) const {
    double v = 0;
    detail::parse_number(raw(key), v);
    return v;
  }
  bool flag(const std::string& key) const { return raw(key) == "true"; }
  std::vector<std::size_t> size_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& p : detail::split_list(raw(key))) {
      long long v = 0;
      detail::parse_int(p, v);
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }
  std::vector<double> num_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& p : detail::split_list(raw(key))) {
      double v = 0;
      detail::parse_number(p, v);
      out.push_back(v);
    }
    return out;
  }

  nlohmann::json to_json() const { return nlohmann::json(values_); }

  /// Inverse of to_json(), for re-running from a manifest snapshot.
  static Config from_json(const nlohmann::json& j) {
    Config c;
    for (auto it = j.begin(); it != j.end(); ++it) c.set(it.key(), it.value().get<std::string>(), "snapshot");
    return c;
  }

 private:
  std::map<std::string, std::string> values_;
};

inline EncoderConfig encoder_config(const Config& c) {
  EncoderConfig e;
  e.layers = c.size("layers");
  e.model_dim = c.size("model_dim");
  e.heads = c.size("heads");
  e.ff_dim = c.size("ff_dim");
  e.max_len = c.size("max_len");
  return e;
}

inline TrainConfig train_config(const Config& c, std::uint64_t seed) {
  TrainConfig t;
  t.epsilon = c.num("epsilon");
  t.lambda = c.num("lambda");
  t.beta = c.num("beta");
  t.noise_scale = c.str("noise_scale") == "variance" ? NoiseScale::variance : NoiseScale::std_dev;
  t.bt_centering = c.flag("bt_centering");
  t.rwp = c.flag("rwp");
  t.cl = c.flag("cl");
  t.batch_size = c.size("batch_size");
  t.learning_rate = c.num("learning_rate");
  t.epochs = c.size("epochs");
  t.patience = c.size("patience");
  t.weight_decay = c.num("weight_decay");
  t.adam_beta1 = c.num("adam_beta1");
  t.adam_beta2 = c.num("adam_beta2");
  t.adam_eps = c.num("adam_eps");
  t.clip_norm = c.num("clip_norm");
  t.proj_hidden = c.size("proj_hidden");
  t.proj_dim = c.size("proj_dim");
  t.eval_batch_size = c.size("eval_batch_size");
  t.seed = seed;
  t.validate();
  return t;
}

inline GridSpec grid_spec(const Config& c) {
  GridSpec g;
  g.batch_sizes = c.size_list("grid_batch_sizes");
  g.epsilons = c.num_list("grid_epsilons");
  g.lambdas = c.num_list("grid_lambdas");
  return g;
}

}  // namespace rwpcl::cli
