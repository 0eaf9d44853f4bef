#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mmctr/datapipe/synthetic.hpp"
#include "mmctr/error.hpp"
#include "mmctr/text.hpp"

namespace mmctr {

/// Every knob of a run. Defaults are the tuned values: Adam at 5e-4, batch
/// 128, 64-dim embeddings, 2 encoder layers, 3 cross layers, dropout 0.2 in
/// both the Transformer and the cross network, k = 16, deep tower
/// [1024, 512, 256], head [64, 32], patience 5.
struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t batch_size = 128;
  std::size_t embedding_dim = 64;
  std::size_t n_encoder_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_ff = 0;  // 0 means 4 * d_t
  double transformer_dropout = 0.2;
  std::size_t n_cross_layers = 3;
  double cross_net_dropout = 0.2;
  std::vector<std::size_t> deep_hidden = {1024, 512, 256};
  std::vector<std::size_t> head_hidden = {64, 32};
  std::size_t k = 16;
  std::size_t N = 32;
  std::size_t patience = 5;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 2025;
  bool use_multimodal = true;
  bool use_transformer = true;
  bool use_dcnv2 = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Feature split: which items.tsv categorical columns become t2..t|T| and
  // which samples.tsv side columns feed e_side. nullopt selects all.
  std::optional<std::vector<std::size_t>> item_cat_features;
  std::optional<std::vector<std::size_t>> side_features;

  // Data-dependent sizes; 0 / empty means "infer from the data at train
  // time". Checkpoints always store the resolved values.
  std::size_t d_mm = 0;
  std::size_t item_vocab = 0;
  std::vector<std::size_t> cat_vocab;
  std::vector<std::size_t> side_vocab;

  // Synthetic generator (gen-data).
  std::size_t gen_users = 500;
  std::size_t gen_items = 1000;
  std::size_t gen_train = 8000;
  std::size_t gen_val = 1000;
  std::size_t gen_test = 1000;
  double gen_positive_rate = 0.5;
  std::size_t gen_d_mm = 16;
  std::size_t gen_latent_dim = 8;
  double gen_alpha = 2.0;
  double gen_beta = 2.0;
  double gen_mm_noise = 0.1;
  std::size_t gen_item_cats = 1;
  std::size_t gen_cat_vocab = 16;
  std::size_t gen_side = 2;
  std::size_t gen_side_vocab = 8;
  std::size_t gen_pool_size = 0;

  /// Calls f(key, field) for every field, in file order.
  template <typename Self, typename F>
  static void visit(Self& c, F&& f) {
    f("learning_rate", c.learning_rate);
    f("batch_size", c.batch_size);
    f("embedding_dim", c.embedding_dim);
    f("n_encoder_layers", c.n_encoder_layers);
    f("n_heads", c.n_heads);
    f("d_ff", c.d_ff);
    f("transformer_dropout", c.transformer_dropout);
    f("n_cross_layers", c.n_cross_layers);
    f("cross_net_dropout", c.cross_net_dropout);
    f("deep_hidden", c.deep_hidden);
    f("head_hidden", c.head_hidden);
    f("k", c.k);
    f("N", c.N);
    f("patience", c.patience);
    f("max_epochs", c.max_epochs);
    f("seed", c.seed);
    f("use_multimodal", c.use_multimodal);
    f("use_transformer", c.use_transformer);
    f("use_dcnv2", c.use_dcnv2);
    f("adam_beta1", c.adam_beta1);
    f("adam_beta2", c.adam_beta2);
    f("adam_eps", c.adam_eps);
    f("item_cat_features", c.item_cat_features);
    f("side_features", c.side_features);
    f("d_mm", c.d_mm);
    f("item_vocab", c.item_vocab);
    f("cat_vocab", c.cat_vocab);
    f("side_vocab", c.side_vocab);
    f("gen_users", c.gen_users);
    f("gen_items", c.gen_items);
    f("gen_train", c.gen_train);
    f("gen_val", c.gen_val);
    f("gen_test", c.gen_test);
    f("gen_positive_rate", c.gen_positive_rate);
    f("gen_d_mm", c.gen_d_mm);
    f("gen_latent_dim", c.gen_latent_dim);
    f("gen_alpha", c.gen_alpha);
    f("gen_beta", c.gen_beta);
    f("gen_mm_noise", c.gen_mm_noise);
    f("gen_item_cats", c.gen_item_cats);
    f("gen_cat_vocab", c.gen_cat_vocab);
    f("gen_side", c.gen_side);
    f("gen_side_vocab", c.gen_side_vocab);
    f("gen_pool_size", c.gen_pool_size);
  }

  bool operator==(const TrainConfig&) const = default;
};

namespace config_detail {

inline std::vector<std::size_t> parse_list(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  for (auto tok : text::split(value, ',')) {
    tok = text::trim(tok);
    if (tok.empty()) {
      if (text::trim(value).empty()) break;
      throw ConfigError("config key '" + std::string(key) + "': empty list element");
    }
    auto v = text::parse_number<std::size_t>(tok);
    if (!v) throw ConfigError("config key '" + std::string(key) + "': expected integers, got '" + std::string(tok) + "'");
    out.push_back(*v);
  }
  return out;
}

inline void assign(std::string_view key, std::string_view value, double& field) {
  auto v = text::parse_number<double>(value);
  if (!v) throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + std::string(value) + "'");
  field = *v;
}

template <typename U>
  requires(std::is_unsigned_v<U> && !std::is_same_v<U, bool>)
void assign(std::string_view key, std::string_view value, U& field) {
  auto v = text::parse_number<U>(value);
  if (!v) {
    throw ConfigError("config key '" + std::string(key) + "': expected a non-negative integer, got '" +
                      std::string(value) + "'");
  }
  field = *v;
}

inline void assign(std::string_view key, std::string_view value, bool& field) {
  if (value == "true" || value == "1") field = true;
  else if (value == "false" || value == "0") field = false;
  else throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(value) + "'");
}

inline void assign(std::string_view key, std::string_view value, std::vector<std::size_t>& field) {
  field = parse_list(key, value);
}

inline void assign(std::string_view key, std::string_view value, std::optional<std::vector<std::size_t>>& field) {
  if (value == "all") field.reset();
  else field = parse_list(key, value);
}

inline std::string render(double v) { return text::format_number(v); }
template <typename U>
  requires(std::is_unsigned_v<U> && !std::is_same_v<U, bool>)
std::string render(U v) {
  return std::to_string(v);
}
inline std::string render(bool v) { return v ? "true" : "false"; }
inline std::string render(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}
inline std::string render(const std::optional<std::vector<std::size_t>>& v) { return v ? render(*v) : "all"; }

}  // namespace config_detail

/// Sets one key from its text value; unknown keys are errors.
inline void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  bool found = false;
  TrainConfig::visit(cfg, [&](std::string_view name, auto& field) {
    if (name == key) {
      config_detail::assign(key, text::trim(value), field);
      found = true;
    }
  });
  if (!found) throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Checks the range constraints that do not depend on data.
inline void validate(const TrainConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.N == 0) fail("N must be >= 1");
  if (c.k > c.N) fail("k = " + std::to_string(c.k) + " exceeds N = " + std::to_string(c.N));
  if (c.embedding_dim == 0) fail("embedding_dim must be >= 1");
  if (c.batch_size == 0) fail("batch_size must be >= 1");
  if (!(c.learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (!(c.transformer_dropout >= 0.0 && c.transformer_dropout < 1.0)) fail("transformer_dropout must be in [0, 1)");
  if (!(c.cross_net_dropout >= 0.0 && c.cross_net_dropout < 1.0)) fail("cross_net_dropout must be in [0, 1)");
  if (c.use_transformer && c.n_encoder_layers == 0) fail("n_encoder_layers must be >= 1 with use_transformer");
  if (c.n_heads == 0) fail("n_heads must be >= 1");
  if (c.patience == 0) fail("patience must be >= 1");
  if (c.use_dcnv2 && c.deep_hidden.empty()) fail("deep_hidden must list at least one layer with use_dcnv2");
  for (auto h : c.deep_hidden) {
    if (h == 0) fail("deep_hidden sizes must be >= 1");
  }
  for (auto h : c.head_hidden) {
    if (h == 0) fail("head_hidden sizes must be >= 1");
  }
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0) || !(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) {
    fail("adam betas must be in [0, 1)");
  }
  if (!(c.adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (!(c.gen_positive_rate > 0.0 && c.gen_positive_rate < 1.0)) fail("gen_positive_rate must be in (0, 1)");
}

/// Flat `key = value` text; `#` starts a comment. Unspecified keys keep
/// their defaults.
inline TrainConfig parse_config_text(std::string_view body, const std::string& source = "config") {
  TrainConfig cfg;
  std::size_t lineno = 0;
  for (auto raw : text::split(body, '\n')) {
    ++lineno;
    auto line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set_config_value(cfg, text::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

inline TrainConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

/// Renders every key; parse_config_text(to_text(c)) == c.
inline std::string to_text(const TrainConfig& cfg) {
  std::string out;
  TrainConfig::visit(cfg, [&](std::string_view name, const auto& field) {
    out += std::string(name) + " = " + config_detail::render(field) + "\n";
  });
  return out;
}

inline data::GeneratorConfig generator_config(const TrainConfig& c, std::size_t n_samples) {
  data::GeneratorConfig g;
  g.seed = c.seed;
  g.n_users = c.gen_users;
  g.n_items = c.gen_items;
  g.d_mm = c.gen_d_mm;
  g.max_history = c.N;
  g.n_samples = n_samples;
  g.positive_rate = c.gen_positive_rate;
  g.latent_dim = c.gen_latent_dim;
  g.alpha = c.gen_alpha;
  g.beta = c.gen_beta;
  g.mm_noise = c.gen_mm_noise;
  g.n_item_cats = c.gen_item_cats;
  g.cat_vocab = c.gen_cat_vocab;
  g.n_side = c.gen_side;
  g.side_vocab = c.gen_side_vocab;
  g.pool_size = c.gen_pool_size;
  return g;
}

}  // namespace mmctr
