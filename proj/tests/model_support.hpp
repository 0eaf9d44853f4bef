#pragma once

#include <memory>

#include "mmctr/config.hpp"
#include "mmctr/datapipe.hpp"
#include "mmctr/embedding.hpp"
#include "mmctr/model.hpp"

namespace mmctr::testutil {

// Small enough that a forward pass costs well under a millisecond.
inline TrainConfig tiny_config() {
  TrainConfig c;
  c.embedding_dim = 4;
  c.gen_d_mm = 4;
  c.N = 6;
  c.k = 2;
  c.n_encoder_layers = 1;
  c.n_heads = 1;
  c.n_cross_layers = 1;
  c.deep_hidden = {8};
  c.head_hidden = {4, 2};
  c.transformer_dropout = 0.0;
  c.cross_net_dropout = 0.0;
  c.batch_size = 16;
  c.gen_users = 40;
  c.gen_items = 60;
  c.gen_cat_vocab = 5;
  c.gen_side_vocab = 4;
  return c;
}

inline data::SyntheticData tiny_data(const TrainConfig& cfg, std::size_t n_samples) {
  return data::gen_synthetic(generator_config(cfg, n_samples));
}

template <typename T>
std::unique_ptr<CtrModel<T>> make_model(const TrainConfig& cfg, const data::ItemTable& items,
                                        const data::SampleSet& samples) {
  auto catalog = std::make_shared<const ItemCatalog>(ItemCatalog::from_table(items, cfg.item_cat_features));
  return std::make_unique<CtrModel<T>>(resolve_config(cfg, items, *catalog, {&samples}), catalog);
}

}  // namespace mmctr::testutil
