#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmctr/datapipe.hpp"
#include "mmctr/metrics.hpp"
#include "mmctr/model.hpp"
#include "mmctr/random.hpp"
#include "mmctr/trainer/adam.hpp"
#include "mmctr/trainer/early_stopping.hpp"

namespace mmctr {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  metrics::EvalResult val;
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_val_auc = 0.0;
  double best_val_logloss = 0.0;
  bool early_stopped = false;
  std::uint64_t optimizer_steps = 0;
};

struct TrainOptions {
  std::ostream* log = &std::cout;                // JSON metric lines; nullptr silences
  std::optional<std::filesystem::path> run_dir;  // receives metrics.jsonl when set
};

template <typename T>
metrics::EvalResult evaluate_model(const CtrModel<T>& model, const data::SampleSet& set) {
  const auto probs = model.predict(set, model.config().batch_size);
  std::vector<int> labels;
  labels.reserve(set.size());
  for (const auto& s : set.samples) labels.push_back(s.label);
  return metrics::evaluate(probs, labels);
}

inline nlohmann::ordered_json epoch_line(const EpochRecord& r) {
  auto j = metrics::report("val", r.epoch, r.val);
  j["train_loss"] = r.train_loss;
  return j;
}

/// Minibatch Adam on the mean BCE, one validation pass per epoch, early
/// stopping on validation AUC. On return the model holds the parameters of
/// the best epoch. Throws DivergenceError on a non-finite batch loss.
template <typename T>
TrainResult train(CtrModel<T>& model, const data::SampleSet& train_set, const data::SampleSet& val_set,
                  const TrainOptions& opts = {}) {
  const auto& cfg = model.config();
  if (train_set.empty()) throw DataError("training split is empty");
  if (val_set.empty()) throw DataError("validation split is empty");

  std::ofstream jsonl;
  if (opts.run_dir) {
    std::filesystem::create_directories(*opts.run_dir);
    jsonl.open(*opts.run_dir / "metrics.jsonl", std::ios::binary);
    if (!jsonl) throw Error("cannot write " + (*opts.run_dir / "metrics.jsonl").string());
  }

  Adam<T> adam(model.params(), {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  EarlyStopping stopper(cfg.patience);
  Rng dropout_rng(derive_seed(cfg.seed, Stream::kDropout));
  const std::uint64_t shuffle_base = derive_seed(cfg.seed, Stream::kShuffle);

  TrainResult result;
  std::vector<std::vector<T>> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& p : model.params().entries()) best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches = data::make_batches(train_set, cfg.batch_size, cfg.N, derive_seed(shuffle_base, epoch));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      model.params().clear_grads();
      BasicGraph<T> g;
      auto loss = model.loss(g, batches[b], true, dropout_rng);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(b + 1));
      }
      g.backward(loss);
      adam.step();
      loss_sum += value * static_cast<double>(batches[b].size);
    }
    model.params().clear_grads();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.val = evaluate_model(model, val_set);
    rec.improved = stopper.update(rec.val.auc);
    if (rec.improved) snapshot();
    result.history.push_back(rec);

    const auto line = epoch_line(rec).dump();
    if (opts.log) *opts.log << line << '\n' << std::flush;
    if (jsonl) jsonl << line << '\n' << std::flush;

    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }

  result.optimizer_steps = adam.steps();
  if (!best.empty()) {
    auto& entries = model.params().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) std::copy(best[i].begin(), best[i].end(), entries[i].tensor.data().begin());
    result.best_epoch = stopper.best_epoch();
    result.best_val_auc = stopper.best_auc();
    result.best_val_logloss = result.history[result.best_epoch - 1].val.logloss;
  }
  return result;
}

}  // namespace mmctr
