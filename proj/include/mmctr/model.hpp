#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mmctr/config.hpp"
#include "mmctr/crossnet.hpp"
#include "mmctr/datapipe.hpp"
#include "mmctr/embedding.hpp"
#include "mmctr/head.hpp"
#include "mmctr/layers.hpp"
#include "mmctr/sequence.hpp"

namespace mmctr {

/// Fills in every data-dependent config field left at 0 / empty / "all":
/// d_mm, item_vocab, cat_vocab (max code + 1 per selected item column),
/// side_features and side_vocab (max code + 1 over `samples`). Values that
/// were given explicitly are checked against the data instead.
inline TrainConfig resolve_config(TrainConfig cfg, const data::ItemTable& items, const ItemCatalog& catalog,
                                  const std::vector<const data::SampleSet*>& samples) {
  validate(cfg);
  if (cfg.d_mm == 0) cfg.d_mm = items.d_mm();
  if (cfg.d_mm != items.d_mm()) {
    throw ConfigError("config d_mm = " + std::to_string(cfg.d_mm) + " but the item table has d_mm = " +
                      std::to_string(items.d_mm()));
  }
  cfg.item_vocab = std::max(cfg.item_vocab, catalog.vocab);

  const auto max_codes = catalog.max_codes();
  if (cfg.cat_vocab.empty()) {
    for (auto m : max_codes) cfg.cat_vocab.push_back(static_cast<std::size_t>(m) + 1);
  } else if (cfg.cat_vocab.size() != max_codes.size()) {
    throw ConfigError("cat_vocab lists " + std::to_string(cfg.cat_vocab.size()) + " sizes for " +
                      std::to_string(max_codes.size()) + " item categorical features");
  }
  for (std::size_t f = 0; f < max_codes.size(); ++f) {
    if (static_cast<std::size_t>(max_codes[f]) >= cfg.cat_vocab[f]) {
      throw ConfigError("item categorical feature " + std::to_string(f) + " has code " + std::to_string(max_codes[f]) +
                        " outside cat_vocab " + std::to_string(cfg.cat_vocab[f]));
    }
  }

  std::size_t n_side = 0;
  for (const auto* s : samples) {
    if (s) n_side = std::max(n_side, s->n_side);
  }
  if (!cfg.side_features) {
    cfg.side_features.emplace();
    for (std::size_t c = 0; c < n_side; ++c) cfg.side_features->push_back(c);
  }
  for (auto c : *cfg.side_features) {
    if (c >= n_side) {
      throw ConfigError("side feature column " + std::to_string(c) + " does not exist; samples carry " +
                        std::to_string(n_side));
    }
  }
  std::vector<std::size_t> side_max(cfg.side_features->size(), 0);
  for (const auto* s : samples) {
    if (!s) continue;
    for (const auto& sample : s->samples) {
      for (std::size_t f = 0; f < side_max.size(); ++f) {
        side_max[f] = std::max(side_max[f], static_cast<std::size_t>(sample.side_features[(*cfg.side_features)[f]]));
      }
    }
  }
  if (cfg.side_vocab.empty()) {
    for (auto m : side_max) cfg.side_vocab.push_back(m + 1);
  } else if (cfg.side_vocab.size() != side_max.size()) {
    throw ConfigError("side_vocab lists " + std::to_string(cfg.side_vocab.size()) + " sizes for " +
                      std::to_string(side_max.size()) + " side features");
  }
  for (std::size_t f = 0; f < side_max.size(); ++f) {
    if (side_max[f] >= cfg.side_vocab[f]) {
      throw ConfigError("side feature " + std::to_string(f) + " has code " + std::to_string(side_max[f]) +
                        " outside side_vocab " + std::to_string(cfg.side_vocab[f]));
    }
  }
  return cfg;
}

/// The full scoring network: embeddings, Transformer sequence readout,
/// parallel cross/deep interaction, and the prediction head. The three
/// use_* switches of the config remove the multimodal segment, replace the
/// Transformer readout by a masked mean of history embeddings, or bypass the
/// cross/deep module.
template <typename T>
class CtrModel {
 public:
  /// `cfg` must already be resolved (see resolve_config).
  CtrModel(const TrainConfig& cfg, std::shared_ptr<const ItemCatalog> catalog)
      : cfg_(cfg), params_(cfg.seed) {
    validate(cfg_);
    if (!cfg_.side_features) throw ContractError("CtrModel: side_features must be resolved");
    if (cfg_.use_dcnv2 && cfg_.deep_hidden.empty()) throw ConfigError("deep_hidden must be non-empty with use_dcnv2");
    const std::size_t d_e = cfg_.embedding_dim;
    items_ = make_item_encoder(params_, std::move(catalog), cfg_.item_vocab, cfg_.cat_vocab, d_e, cfg_.use_multimodal);
    side_ = make_side_encoder(params_, *cfg_.side_features, cfg_.side_vocab, d_e);
    const std::size_t d_item = items_.d_item();
    std::size_t d_seq = d_item;
    if (cfg_.use_transformer) {
      encoder_ = make_encoder(params_, "encoder", 2 * d_item, cfg_.n_encoder_layers, cfg_.n_heads, cfg_.d_ff,
                              cfg_.transformer_dropout);
      d_seq = (cfg_.k + 1) * 2 * d_item;
    }
    d_f_ = d_item + side_.d_side() + d_seq;
    std::size_t d_out = d_f_;
    if (cfg_.use_dcnv2) {
      cross_ = make_cross_net(params_, "cross", d_f_, cfg_.n_cross_layers, cfg_.cross_net_dropout);
      deep_ = make_mlp(params_, "deep", d_f_, cfg_.deep_hidden);
      d_out = d_f_ + cfg_.deep_hidden.back();
    }
    d_o_ = d_out;
    head_ = make_head(params_, "head", d_out, cfg_.head_hidden);
  }

  CtrModel(const CtrModel&) = delete;
  CtrModel& operator=(const CtrModel&) = delete;

  /// Logits [B] for one batch.
  BasicTensor<T> forward(BasicGraph<T>& g, const data::Batch& batch, bool training, Rng& rng) const {
    if (batch.seq_len != cfg_.N) {
      throw DimensionError("batch history length " + std::to_string(batch.seq_len) + " vs N = " + std::to_string(cfg_.N));
    }
    const std::size_t B = batch.size;
    auto target = item_embed(g, items_, batch.targets, {B});
    auto side = side_embed(g, side_, batch.side, B);
    auto hist = item_embed(g, items_, batch.history, {B, batch.seq_len});
    BasicTensor<T> seq;
    if (cfg_.use_transformer) {
      auto s = encode(g, encoder_, build_seq_input(g, hist, target), batch.mask, training, rng);
      seq = readout(g, s, batch.mask, cfg_.k);
    } else {
      seq = masked_mean(g, hist, batch.mask);
    }
    auto fo = build_fi(g, target, side, seq);
    if (cfg_.use_dcnv2) {
      fo = combine(g, cross_forward(g, fo, cross_, training, rng), deep_forward(g, fo, deep_));
    }
    return head_logits(g, head_, fo);
  }

  /// Mean BCE of the batch.
  BasicTensor<T> loss(BasicGraph<T>& g, const data::Batch& batch, bool training, Rng& rng) const {
    std::vector<T> labels(batch.labels.begin(), batch.labels.end());
    return bce_loss(g, forward(g, batch, training, rng), std::span<const T>(labels));
  }

  /// Click probabilities in evaluation mode.
  std::vector<double> predict(const data::Batch& batch) const {
    BasicGraph<T> g;
    Rng unused(0);
    return probabilities(forward(g, batch, false, unused));
  }

  std::vector<double> predict(const data::SampleSet& set, std::size_t batch_size) const {
    std::vector<double> out;
    out.reserve(set.size());
    for (const auto& batch : data::make_batches(set, batch_size, cfg_.N)) {
      auto p = predict(batch);
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const ItemCatalog& catalog() const { return *items_.catalog; }
  std::shared_ptr<const ItemCatalog> catalog_ptr() const { return items_.catalog; }
  const ItemEncoder<T>& item_encoder() const { return items_; }

  std::size_t d_item() const { return items_.d_item(); }
  std::size_t d_side() const { return side_.d_side(); }
  std::size_t d_f() const { return d_f_; }
  std::size_t d_o() const { return d_o_; }

 private:
  TrainConfig cfg_;
  ParamStore<T> params_;
  ItemEncoder<T> items_;
  SideEncoder<T> side_;
  TransformerEncoder<T> encoder_;
  CrossNet<T> cross_;
  std::vector<Dense<T>> deep_;
  PredictionHead<T> head_;
  std::size_t d_f_ = 0;
  std::size_t d_o_ = 0;
};

}  // namespace mmctr
