#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmctr/error.hpp"

namespace mmctr::metrics {

struct EvalResult {
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_pos = 0;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> count_classes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("auc: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                        " labels");
  }
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("auc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw MetricError("auc: non-finite score at index " + std::to_string(i));
    pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("auc is undefined without both positive and negative labels");
  return {pos, neg};
}

}  // namespace detail

/// ROC AUC as the Mann-Whitney statistic: (sum of positive ranks -
/// n_pos(n_pos+1)/2) / (n_pos n_neg), tied scores sharing their average rank.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  const auto [n_pos, n_neg] = detail::count_classes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; a tie block spanning ranks [lo+1, hi] gets (lo+1+hi)/2.
  // Summing 2x the rank keeps everything integral.
  std::uint64_t pos_rank_sum_x2 = 0;
  std::size_t lo = 0;
  while (lo < order.size()) {
    std::size_t hi = lo + 1;
    while (hi < order.size() && scores[order[hi]] == scores[order[lo]]) ++hi;
    const std::uint64_t rank_x2 = (lo + 1) + hi;
    for (std::size_t i = lo; i < hi; ++i) {
      if (labels[order[i]] == 1) pos_rank_sum_x2 += rank_x2;
    }
    lo = hi;
  }
  const double u = (static_cast<double>(pos_rank_sum_x2) - static_cast<double>(n_pos) * (n_pos + 1)) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Pairwise-enumeration AUC: wins plus half-ties over every positive-negative
/// pair. Quadratic; an oracle for auc().
inline double auc_bruteforce(std::span<const double> scores, std::span<const int> labels) {
  const auto [n_pos, n_neg] = detail::count_classes(scores, labels);
  std::uint64_t wins_x2 = 0;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    if (labels[p] != 1) continue;
    for (std::size_t n = 0; n < scores.size(); ++n) {
      if (labels[n] != 0) continue;
      if (scores[p] > scores[n]) wins_x2 += 2;
      else if (scores[p] == scores[n]) wins_x2 += 1;
    }
  }
  return (static_cast<double>(wins_x2) / 2.0) / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy of probabilities, clamped to [1e-7, 1-1e-7].
inline double logloss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.empty()) throw ContractError("logloss: empty input");
  if (probs.size() != labels.size()) throw ContractError("logloss: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) {
      throw ContractError("logloss: probability out of [0,1] at index " + std::to_string(i));
    }
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("logloss: labels must be 0 or 1");
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    acc -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return acc / static_cast<double>(probs.size());
}

inline EvalResult evaluate(std::span<const double> probs, std::span<const int> labels) {
  EvalResult r;
  r.auc = auc(probs, labels);
  r.logloss = logloss(probs, labels);
  r.n_samples = probs.size();
  r.n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  return r;
}

/// One evaluation report: {"split", "epoch", "auc", "logloss", "n"}.
/// `epoch` is null for evaluations outside a training loop.
inline nlohmann::ordered_json report(const std::string& split, std::optional<std::size_t> epoch, const EvalResult& r) {
  nlohmann::ordered_json j;
  j["split"] = split;
  j["epoch"] = epoch ? nlohmann::ordered_json(*epoch) : nlohmann::ordered_json(nullptr);
  j["auc"] = r.auc;
  j["logloss"] = r.logloss;
  j["n"] = r.n_samples;
  return j;
}

}  // namespace mmctr::metrics
