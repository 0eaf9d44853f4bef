#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmctr/checkpoint.hpp"
#include "mmctr/config.hpp"
#include "mmctr/datapipe.hpp"
#include "mmctr/diffcore/gradcheck.hpp"
#include "mmctr/embedding.hpp"
#include "mmctr/metrics.hpp"
#include "mmctr/model.hpp"
#include "mmctr/trainer/grid.hpp"
#include "mmctr/trainer/train.hpp"

// Command implementations behind the mmctr executable. Each returns the
// process exit code and writes its primary output to `out`.
namespace mmctr::commands {

namespace fs = std::filesystem;

inline constexpr const char* kItemsFile = "items.tsv";
inline constexpr const char* kCheckpointFile = "model.ckpt";

inline fs::path split_path(const fs::path& data_dir, const std::string& split) { return data_dir / (split + ".tsv"); }

/// items.tsv plus train/val/test.tsv from the synthetic generator.
inline int gen_data(const TrainConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  const std::size_t total = cfg.gen_train + cfg.gen_val + cfg.gen_test;
  if (cfg.gen_train == 0 || cfg.gen_val == 0) throw ConfigError("gen_train and gen_val must be >= 1");
  auto synth = data::gen_synthetic(generator_config(cfg, total));
  fs::create_directories(out_dir);
  data::save_items(out_dir / kItemsFile, synth.items);
  const std::vector<std::pair<std::string, std::size_t>> splits{
      {"train", cfg.gen_train}, {"val", cfg.gen_val}, {"test", cfg.gen_test}};
  std::size_t offset = 0;
  nlohmann::ordered_json summary;
  summary["items"] = synth.items.size();
  for (const auto& [name, count] : splits) {
    if (count == 0) continue;
    data::SampleSet part{synth.samples.max_history, synth.samples.n_side, {}};
    part.samples.assign(synth.samples.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                        synth.samples.samples.begin() + static_cast<std::ptrdiff_t>(offset + count));
    offset += count;
    data::save_samples(split_path(out_dir, name), part);
    summary[name] = count;
  }
  out << summary.dump() << '\n';
  return 0;
}

struct Dataset {
  data::ItemTable items;
  data::SampleSet train;
  data::SampleSet val;
};

inline Dataset load_dataset(const fs::path& dir) {
  Dataset d{data::load_items(dir / kItemsFile), data::load_samples(split_path(dir, "train")),
            data::load_samples(split_path(dir, "val"))};
  data::validate_samples(d.train, d.items);
  data::validate_samples(d.val, d.items);
  return d;
}

/// Builds a float model for `cfg` on `data`, filling data-dependent sizes.
inline std::unique_ptr<CtrModel<float>> build_model(const TrainConfig& cfg, const data::ItemTable& items,
                                                    const std::vector<const data::SampleSet*>& samples) {
  auto catalog = std::make_shared<const ItemCatalog>(ItemCatalog::from_table(items, cfg.item_cat_features));
  const auto resolved = resolve_config(cfg, items, *catalog, samples);
  return std::make_unique<CtrModel<float>>(resolved, std::move(catalog));
}

/// Trains on <data>/train.tsv with early stopping on <data>/val.tsv and
/// writes metrics.jsonl, config.txt and the best model.ckpt into run_dir.
/// Epoch lines go to `out`, the closing summary to `summary_out`.
inline int train(const TrainConfig& cfg, const fs::path& data_dir, const fs::path& run_dir, std::ostream& out,
                 std::ostream& summary_out = std::cerr) {
  const auto d = load_dataset(data_dir);
  auto model = build_model(cfg, d.items, {&d.train, &d.val});
  fs::create_directories(run_dir);
  data::write_file(run_dir / "config.txt", [](std::ostream& o, const TrainConfig& c) { o << to_text(c); },
                   model->config());
  TrainOptions opts;
  opts.log = &out;
  opts.run_dir = run_dir;
  const auto result = mmctr::train(*model, d.train, d.val, opts);
  save_checkpoint(run_dir / kCheckpointFile, make_checkpoint(*model));
  nlohmann::ordered_json summary;
  summary["best_epoch"] = result.best_epoch;
  summary["best_val_auc"] = result.best_val_auc;
  summary["epochs"] = result.history.size();
  summary["early_stopped"] = result.early_stopped;
  summary_out << summary.dump() << '\n';
  return 0;
}

inline int eval(const fs::path& checkpoint, const fs::path& data_dir, const std::string& split, std::ostream& out) {
  const auto model = restore_model<float>(load_checkpoint(checkpoint));
  const auto set = data::load_samples(split_path(data_dir, split));
  out << metrics::report(split, std::nullopt, evaluate_model(*model, set)).dump() << '\n';
  return 0;
}

/// One `sample_index<TAB>prob` row per input sample, no header.
inline int predict(const fs::path& checkpoint, const fs::path& input, const fs::path& output) {
  const auto model = restore_model<float>(load_checkpoint(checkpoint));
  const auto set = data::load_samples(input);
  const auto probs = model->predict(set, model->config().batch_size);
  data::write_file(
      output,
      [](std::ostream& o, const std::vector<double>& p) {
        for (std::size_t i = 0; i < p.size(); ++i) o << i << '\t' << text::format_number(p[i]) << '\n';
      },
      probs);
  return 0;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t n_tensors = 0;
  std::size_t n_scalars = 0;
};

/// Finite-difference check of every trainable tensor of the model `cfg`
/// describes, built on a small synthetic instance drawn from the gen_*
/// settings. Runs in extended precision; dropout is disabled.
inline GradCheckReport run_gradcheck(const TrainConfig& cfg, std::ostream* per_tensor = nullptr) {
  using Real = long double;
  auto gen = generator_config(cfg, std::max<std::size_t>(cfg.batch_size, 1));
  auto synth = data::gen_synthetic(gen);
  auto catalog = std::make_shared<const ItemCatalog>(ItemCatalog::from_table(synth.items, cfg.item_cat_features));
  const auto resolved = resolve_config(cfg, synth.items, *catalog, {&synth.samples});
  CtrModel<Real> model(resolved, catalog);
  const auto batch = data::make_batches(synth.samples, synth.samples.size(), resolved.N).front();
  Rng unused(0);
  ScalarFn<Real> f = [&](BasicGraph<Real>& g) { return model.loss(g, batch, false, unused); };

  GradCheckReport rep;
  for (const auto& p : model.params().entries()) {
    const std::size_t cols = p.tensor.rank() == 2 ? p.tensor.dim(1) : 1;
    const auto r = grad_check_detailed(f, p.tensor, default_grad_check_eps<Real>(), p.frozen_rows * cols);
    ++rep.n_tensors;
    rep.n_scalars += r.n_checked;
    if (per_tensor) {
      nlohmann::ordered_json j;
      j["tensor"] = p.name;
      j["max_rel_error"] = r.max_rel_error;
      j["worst_index"] = r.worst_index;
      j["analytic"] = r.analytic;
      j["numeric"] = r.numeric;
      j["n"] = r.n_checked;
      *per_tensor << j.dump() << '\n';
    }
    if (rep.worst_tensor.empty() || r.max_rel_error > rep.max_rel_error) {
      rep.max_rel_error = r.max_rel_error;
      rep.worst_tensor = p.name;
    }
  }
  return rep;
}

inline int gradcheck(const TrainConfig& cfg, double tolerance, std::ostream& out) {
  const auto rep = run_gradcheck(cfg, &out);
  nlohmann::ordered_json j;
  j["max_rel_error"] = rep.max_rel_error;
  j["worst_tensor"] = rep.worst_tensor;
  j["tensors"] = rep.n_tensors;
  j["scalars"] = rep.n_scalars;
  j["tolerance"] = tolerance;
  j["passed"] = rep.max_rel_error < tolerance;
  out << j.dump() << '\n';
  return rep.max_rel_error < tolerance ? 0 : 1;
}

/// Runs the sweep and writes run_dir/grid.tsv; one JSON line per trial.
inline int grid(const TrainConfig& base, const GridSpec& spec, const fs::path& data_dir, const fs::path& run_dir,
                std::ostream& out) {
  const auto d = load_dataset(data_dir);
  fs::create_directories(run_dir);
  const auto results = grid_search(spec, base, {&d.items, &d.train, &d.val}, [&](const TrialResult& t) {
    nlohmann::ordered_json j;
    j["trial"] = t.trial;
    j["params"] = describe(t.overrides);
    j["status"] = t.failed ? "failed" : "ok";
    if (t.failed) {
      j["error"] = t.error;
    } else {
      j["val_auc"] = t.val_auc;
      j["val_logloss"] = t.val_logloss;
      j["best_epoch"] = t.best_epoch;
    }
    out << j.dump() << '\n' << std::flush;
  });
  data::write_file(run_dir / "grid.tsv", [](std::ostream& o, const std::vector<TrialResult>& r) { write_grid_tsv(o, r); },
                   results);
  return 0;
}

}  // namespace mmctr::commands
