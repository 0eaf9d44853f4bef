#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mmctr/config.hpp"
#include "mmctr/datapipe.hpp"
#include "mmctr/embedding.hpp"
#include "mmctr/model.hpp"
#include "mmctr/text.hpp"
#include "mmctr/trainer/train.hpp"

namespace mmctr {

enum class GridMode { kOneFactor, kCartesian };

/// Candidate values per config key, kept as text and applied through the
/// same setter as config files.
struct GridSpec {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  GridMode mode = GridMode::kOneFactor;
};

/// The tuning grid over learning rate, embedding size, both dropout rates
/// and the readout length.
inline GridSpec tuning_grid() {
  GridSpec g;
  g.axes = {{"learning_rate", {"1e-3", "5e-4", "5e-5", "1e-5"}},
            {"embedding_dim", {"16", "32", "64", "128"}},
            {"transformer_dropout", {"0", "0.1", "0.2", "0.3", "0.4"}},
            {"cross_net_dropout", {"0", "0.1", "0.2", "0.3", "0.4"}},
            {"k", {"0", "2", "4", "8", "16", "24"}}};
  return g;
}

/// `key = v1, v2, ...` lines plus an optional `mode = one_factor|cartesian`.
inline GridSpec parse_grid_text(std::string_view body, const std::string& source = "grid") {
  GridSpec spec;
  std::size_t lineno = 0;
  for (auto raw : text::split(body, '\n')) {
    ++lineno;
    auto line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = v1, v2, ...'");
    const std::string key(text::trim(line.substr(0, eq)));
    const auto rhs = text::trim(line.substr(eq + 1));
    if (key == "mode") {
      if (rhs == "one_factor") spec.mode = GridMode::kOneFactor;
      else if (rhs == "cartesian") spec.mode = GridMode::kCartesian;
      else throw ConfigError(where + "mode must be one_factor or cartesian");
      continue;
    }
    std::vector<std::string> values;
    for (auto v : text::split(rhs, ',')) {
      v = text::trim(v);
      if (v.empty()) throw ConfigError(where + "empty value for '" + key + "'");
      values.emplace_back(v);
    }
    TrainConfig probe;
    for (const auto& v : values) {
      try {
        set_config_value(probe, key, v);
      } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
      }
    }
    spec.axes.emplace_back(key, std::move(values));
  }
  return spec;
}

inline GridSpec parse_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_grid_text(ss.str(), path.string());
}

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// One-factor mode varies one key at a time around the base config (one
/// trial per listed value); Cartesian mode runs every combination.
inline std::vector<Overrides> expand_grid(const GridSpec& spec) {
  if (spec.axes.empty()) throw ConfigError("grid is empty");
  for (const auto& [key, values] : spec.axes) {
    if (values.empty()) throw ConfigError("grid key '" + key + "' has no values");
  }
  std::vector<Overrides> trials;
  if (spec.mode == GridMode::kOneFactor) {
    for (const auto& [key, values] : spec.axes) {
      for (const auto& v : values) trials.push_back({{key, v}});
    }
    return trials;
  }
  trials.push_back({});
  for (const auto& [key, values] : spec.axes) {
    std::vector<Overrides> next;
    for (const auto& partial : trials) {
      for (const auto& v : values) {
        auto t = partial;
        t.emplace_back(key, v);
        next.push_back(std::move(t));
      }
    }
    trials = std::move(next);
  }
  return trials;
}

inline std::string describe(const Overrides& o) {
  std::string s;
  for (std::size_t i = 0; i < o.size(); ++i) s += (i ? " " : "") + o[i].first + "=" + o[i].second;
  return s;
}

struct TrialResult {
  std::size_t trial = 0;  // position in the expanded grid
  Overrides overrides;
  bool failed = false;
  std::string error;
  double val_auc = 0.0;
  double val_logloss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

struct GridData {
  const data::ItemTable* items = nullptr;
  const data::SampleSet* train = nullptr;
  const data::SampleSet* val = nullptr;
};

/// Trains one trial from scratch. Any library error (divergence, invalid
/// combination, ...) marks the trial failed instead of propagating.
inline TrialResult run_trial(std::size_t index, const Overrides& overrides, const TrainConfig& base,
                             const GridData& data) {
  TrialResult r;
  r.trial = index;
  r.overrides = overrides;
  try {
    TrainConfig cfg = base;
    for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
    auto catalog = std::make_shared<const ItemCatalog>(ItemCatalog::from_table(*data.items, cfg.item_cat_features));
    cfg = resolve_config(cfg, *data.items, *catalog, {data.train, data.val});
    CtrModel<float> model(cfg, catalog);
    TrainOptions opts;
    opts.log = nullptr;
    const auto res = train(model, *data.train, *data.val, opts);
    r.epochs_run = res.history.size();
    r.best_epoch = res.best_epoch;
    r.val_auc = res.best_val_auc;
    r.val_logloss = res.best_val_logloss;
    if (res.best_epoch == 0) {
      r.failed = true;
      r.error = "no epoch completed";
    }
  } catch (const Error& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

/// Runs every trial in order; `on_trial` (optional) observes each result as
/// it completes. Returned in trial order; see rank_trials for sorting.
inline std::vector<TrialResult> grid_search(const GridSpec& spec, const TrainConfig& base, const GridData& data,
                                            const std::function<void(const TrialResult&)>& on_trial = {}) {
  const auto trials = expand_grid(spec);
  std::vector<TrialResult> out;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    out.push_back(run_trial(i, trials[i], base, data));
    if (on_trial) on_trial(out.back());
  }
  return out;
}

/// Successful trials by validation AUC descending (ties by trial index),
/// then failed trials in trial order.
inline std::vector<TrialResult> rank_trials(std::vector<TrialResult> trials) {
  std::stable_sort(trials.begin(), trials.end(), [](const TrialResult& a, const TrialResult& b) {
    if (a.failed != b.failed) return !a.failed;
    if (a.failed) return a.trial < b.trial;
    if (a.val_auc != b.val_auc) return a.val_auc > b.val_auc;
    return a.trial < b.trial;
  });
  return trials;
}

inline void write_grid_tsv(std::ostream& out, const std::vector<TrialResult>& trials) {
  out << "rank\ttrial\tparams\tstatus\tval_auc\tval_logloss\tbest_epoch\tepochs\terror\n";
  std::size_t rank = 0;
  for (const auto& t : rank_trials(trials)) {
    out << ++rank << '\t' << t.trial << '\t' << describe(t.overrides) << '\t' << (t.failed ? "failed" : "ok") << '\t';
    if (t.failed) {
      out << "-\t-\t-\t" << t.epochs_run << '\t';
      std::string msg = t.error;
      std::replace(msg.begin(), msg.end(), '\t', ' ');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << msg << '\n';
    } else {
      out << text::format_number(t.val_auc) << '\t' << text::format_number(t.val_logloss) << '\t' << t.best_epoch << '\t'
          << t.epochs_run << "\t-\n";
    }
  }
}

}  // namespace mmctr
