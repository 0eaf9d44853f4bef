#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmctr/datapipe/types.hpp"
#include "mmctr/error.hpp"
#include "mmctr/random.hpp"

namespace mmctr::data {

struct GeneratorConfig {
  std::uint64_t seed = 2025;
  std::size_t n_users = 500;
  std::size_t n_items = 1000;
  std::size_t d_mm = 16;
  std::size_t max_history = 32;  // N
  std::size_t n_samples = 10000;
  double positive_rate = 0.5;

  std::size_t latent_dim = 8;
  double alpha = 2.0;     // weight of the user-target affinity
  double beta = 2.0;      // weight of the mean history-target affinity
  double mm_noise = 0.1;  // stddev of noise added to the normalized item factor
  std::size_t n_item_cats = 1;   // |T| - 1
  std::size_t cat_vocab = 16;
  std::size_t n_side = 2;
  std::size_t side_vocab = 8;
  std::size_t pool_size = 0;     // high-affinity pool per user; 0 means max(2N, n_items/10)
};

struct SyntheticData {
  ItemTable items;
  SampleSet samples;
  std::vector<std::vector<double>> user_factors;  // [n_users][latent_dim]
  std::vector<std::vector<double>> item_factors;  // [n_items + 1][latent_dim], row 0 unused
  std::vector<double> logits;                     // calibrated click logit per sample
  double bias = 0.0;
};

namespace detail {

inline double affinity(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s / std::sqrt(static_cast<double>(a.size()));
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Bias b such that the mean of logistic(raw + b) equals `target`.
inline double calibrate_bias(const std::vector<double>& raw, double target) {
  auto rate = [&](double b) {
    double s = 0.0;
    for (double z : raw) s += logistic(z + b);
    return s / static_cast<double>(raw.size());
  };
  double lo = -50.0, hi = 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rate(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Latent-factor click log. Users and items get Gaussian factors u, v; the
/// multimodal vector is normalize(v) plus noise; histories are drawn from
/// each user's highest-affinity items; a sample clicks with probability
/// sigmoid(alpha*<u,v_t> + beta*mean_h <v_h,v_t> + bias), the bias chosen so
/// the expected positive rate matches the target. Fully determined by seed.
inline SyntheticData gen_synthetic(const GeneratorConfig& cfg) {
  if (cfg.n_users == 0 || cfg.n_items == 0 || cfg.n_samples == 0 || cfg.latent_dim == 0) {
    throw ContractError("gen_synthetic: counts must be positive");
  }
  if (!(cfg.positive_rate > 0.0 && cfg.positive_rate < 1.0)) {
    throw ContractError("gen_synthetic: positive_rate must be in (0, 1)");
  }
  if (cfg.cat_vocab < 2 || cfg.side_vocab < 2) throw ContractError("gen_synthetic: vocabularies need >= 2 codes");

  Rng rng(derive_seed(cfg.seed, Stream::kData));
  const std::size_t L = cfg.latent_dim;
  SyntheticData out;

  out.user_factors.assign(cfg.n_users, std::vector<double>(L));
  for (auto& u : out.user_factors) {
    for (auto& x : u) x = rng.normal();
  }
  out.item_factors.assign(cfg.n_items + 1, std::vector<double>(L, 0.0));
  for (std::size_t i = 1; i <= cfg.n_items; ++i) {
    for (auto& x : out.item_factors[i]) x = rng.normal();
  }

  out.items = ItemTable(cfg.n_item_cats + 1, cfg.d_mm);
  for (std::size_t i = 1; i <= cfg.n_items; ++i) {
    const auto& v = out.item_factors[i];
    ItemRecord rec;
    rec.item_id = static_cast<std::int64_t>(i);
    // First categorical code: the dominant latent direction (a coarse
    // "genre"); further codes are uninformative.
    for (std::size_t c = 0; c < cfg.n_item_cats; ++c) {
      std::int64_t code;
      if (c == 0) {
        std::size_t arg = 0;
        for (std::size_t d = 1; d < L; ++d) {
          if (std::abs(v[d]) > std::abs(v[arg])) arg = d;
        }
        const std::size_t signed_arg = 2 * arg + (v[arg] < 0 ? 1 : 0);
        code = 1 + static_cast<std::int64_t>(signed_arg % (cfg.cat_vocab - 1));
      } else {
        code = 1 + static_cast<std::int64_t>(rng.below(cfg.cat_vocab - 1));
      }
      rec.cat_features.push_back(code);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    rec.mm_embedding.assign(cfg.d_mm, 0.0f);
    for (std::size_t d = 0; d < cfg.d_mm; ++d) {
      const double base = d < L ? v[d] / norm : 0.0;
      rec.mm_embedding[d] = static_cast<float>(base + cfg.mm_noise * rng.normal());
    }
    out.items.add(std::move(rec));
  }

  const std::size_t pool = cfg.pool_size ? std::min(cfg.pool_size, cfg.n_items)
                                         : std::min(cfg.n_items, std::max<std::size_t>(2 * cfg.max_history,
                                                                                       cfg.n_items / 10));
  std::unordered_map<std::size_t, std::vector<std::int64_t>> pools;
  auto user_pool = [&](std::size_t user) -> const std::vector<std::int64_t>& {
    auto it = pools.find(user);
    if (it != pools.end()) return it->second;
    std::vector<std::pair<double, std::int64_t>> scored;
    scored.reserve(cfg.n_items);
    for (std::size_t i = 1; i <= cfg.n_items; ++i) {
      scored.emplace_back(-detail::affinity(out.user_factors[user], out.item_factors[i]), static_cast<std::int64_t>(i));
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(pool), scored.end());
    std::vector<std::int64_t> ids;
    for (std::size_t i = 0; i < pool; ++i) ids.push_back(scored[i].second);
    return pools.emplace(user, std::move(ids)).first->second;
  };

  out.samples.max_history = cfg.max_history;
  out.samples.n_side = cfg.n_side;
  std::vector<double> raw(cfg.n_samples);
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    ImpressionSample sample;
    const auto user = static_cast<std::size_t>(rng.below(cfg.n_users));
    sample.user_id = static_cast<std::int64_t>(user);
    const auto len = static_cast<std::size_t>(rng.below(cfg.max_history + 1));
    const auto& candidates = user_pool(user);
    for (std::size_t h = 0; h < len; ++h) sample.history.push_back(candidates[rng.below(candidates.size())]);
    sample.target_item = 1 + static_cast<std::int64_t>(rng.below(cfg.n_items));
    for (std::size_t c = 0; c < cfg.n_side; ++c) {
      sample.side_features.push_back(1 + static_cast<std::int64_t>(rng.below(cfg.side_vocab - 1)));
    }
    const auto& vt = out.item_factors[static_cast<std::size_t>(sample.target_item)];
    double hist = 0.0;
    for (auto h : sample.history) hist += detail::affinity(out.item_factors[static_cast<std::size_t>(h)], vt);
    if (!sample.history.empty()) hist /= static_cast<double>(sample.history.size());
    raw[s] = cfg.alpha * detail::affinity(out.user_factors[user], vt) + cfg.beta * hist;
    out.samples.samples.push_back(std::move(sample));
  }

  out.bias = detail::calibrate_bias(raw, cfg.positive_rate);
  out.logits.resize(cfg.n_samples);
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    out.logits[s] = raw[s] + out.bias;
    out.samples.samples[s].label = rng.bernoulli(detail::logistic(out.logits[s])) ? 1 : 0;
  }
  return out;
}

}  // namespace mmctr::data
