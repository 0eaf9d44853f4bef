#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmctr/datapipe/types.hpp"
#include "mmctr/diffcore.hpp"
#include "mmctr/layers.hpp"

namespace mmctr {

inline constexpr double kEmbeddingInitStd = 0.01;

/// Dense per-item lookup arrays indexed by item id, built once from the item
/// table. Row 0 is the padding item: all codes 0 and a zero multimodal vector.
struct ItemCatalog {
  std::size_t vocab = 1;  // max item id + 1
  std::size_t d_mm = 0;
  std::vector<std::uint8_t> known;                   // [vocab]
  std::vector<std::vector<std::int64_t>> cat_codes;  // [n_cat][vocab]
  std::vector<float> mm;                             // [vocab x d_mm]

  std::size_t n_cat() const { return cat_codes.size(); }

  /// `columns` picks which item-table categorical columns are used, in that
  /// order; nullopt takes all of them.
  static ItemCatalog from_table(const data::ItemTable& table,
                                const std::optional<std::vector<std::size_t>>& columns = std::nullopt) {
    std::vector<std::size_t> cols;
    if (columns) {
      cols = *columns;
      for (auto c : cols) {
        if (c >= table.n_cat()) {
          throw ConfigError("item categorical column " + std::to_string(c) + " does not exist; the item table has " +
                            std::to_string(table.n_cat()));
        }
      }
    } else {
      for (std::size_t c = 0; c < table.n_cat(); ++c) cols.push_back(c);
    }
    ItemCatalog cat;
    cat.vocab = static_cast<std::size_t>(table.max_id()) + 1;
    cat.d_mm = table.d_mm();
    cat.known.assign(cat.vocab, 0);
    cat.cat_codes.assign(cols.size(), std::vector<std::int64_t>(cat.vocab, 0));
    cat.mm.assign(cat.vocab * cat.d_mm, 0.0f);
    for (const auto& [id, rec] : table) {
      const auto row = static_cast<std::size_t>(id);
      cat.known[row] = 1;
      for (std::size_t f = 0; f < cols.size(); ++f) cat.cat_codes[f][row] = rec.cat_features[cols[f]];
      std::copy(rec.mm_embedding.begin(), rec.mm_embedding.end(), cat.mm.begin() + static_cast<std::ptrdiff_t>(row * cat.d_mm));
    }
    return cat;
  }

  /// Largest code per selected column (0 for an empty table).
  std::vector<std::int64_t> max_codes() const {
    std::vector<std::int64_t> out;
    for (const auto& col : cat_codes) out.push_back(col.empty() ? 0 : *std::max_element(col.begin(), col.end()));
    return out;
  }

  void check_ids(std::span<const std::int64_t> ids) const {
    for (auto id : ids) {
      if (id == data::kPaddingId) continue;
      if (id < 0 || static_cast<std::size_t>(id) >= vocab || !known[static_cast<std::size_t>(id)]) {
        throw IndexError("unknown item id " + std::to_string(id));
      }
    }
  }
};

/// Trainable [vocab x dim] table drawn from N(0, 0.01^2), padding row zeroed
/// and excluded from updates.
template <typename T>
BasicTensor<T> add_embedding_table(ParamStore<T>& store, const std::string& name, std::size_t vocab, std::size_t dim) {
  if (vocab == 0) throw ConfigError("embedding table '" + name + "' needs a vocabulary of at least 1");
  auto table = store.add(name, {vocab, dim}, 1);
  auto rng = store.rng_for(name);
  auto w = table.data();
  for (std::size_t i = dim; i < w.size(); ++i) w[i] = static_cast<T>(rng.normal(0.0, kEmbeddingInitStd));
  return table;
}

/// Item representation: one table per item feature (the id first, then the
/// selected categorical columns), followed by the frozen multimodal vector.
template <typename T>
struct ItemEncoder {
  std::shared_ptr<const ItemCatalog> catalog;
  std::vector<BasicTensor<T>> tables;  // [0] item id, then one per categorical column
  BasicTensor<T> mm;                   // frozen; undefined when unused or d_mm == 0
  std::size_t d_e = 0;
  bool use_multimodal = true;

  std::size_t n_features() const { return tables.size(); }
  std::size_t d_mm() const { return mm.defined() ? mm.cols() : 0; }
  std::size_t d_item() const { return n_features() * d_e + d_mm(); }
};

/// `item_vocab` may exceed catalog.vocab (room for ids seen later);
/// `cat_vocab` holds one size per catalog categorical column.
template <typename T>
ItemEncoder<T> make_item_encoder(ParamStore<T>& store, std::shared_ptr<const ItemCatalog> catalog,
                                 std::size_t item_vocab, const std::vector<std::size_t>& cat_vocab, std::size_t d_e,
                                 bool use_multimodal) {
  if (cat_vocab.size() != catalog->n_cat()) {
    throw ConfigError("cat_vocab lists " + std::to_string(cat_vocab.size()) + " sizes for " +
                      std::to_string(catalog->n_cat()) + " item categorical features");
  }
  if (item_vocab < catalog->vocab) {
    throw ConfigError("item_vocab " + std::to_string(item_vocab) + " is smaller than max item id + 1 = " +
                      std::to_string(catalog->vocab));
  }
  ItemEncoder<T> enc;
  enc.d_e = d_e;
  enc.use_multimodal = use_multimodal;
  enc.tables.push_back(add_embedding_table(store, "embed.item", item_vocab, d_e));
  for (std::size_t f = 0; f < cat_vocab.size(); ++f) {
    enc.tables.push_back(add_embedding_table(store, "embed.item_cat" + std::to_string(f), cat_vocab[f], d_e));
  }
  if (use_multimodal && catalog->d_mm > 0) {
    std::vector<T> values(catalog->mm.begin(), catalog->mm.end());
    enc.mm = BasicTensor<T>({catalog->vocab, catalog->d_mm}, std::move(values), false);
  }
  enc.catalog = std::move(catalog);
  return enc;
}

/// Embeds every id in `ids` (padding 0 allowed) to [lead_shape..., d_item].
template <typename T>
BasicTensor<T> item_embed(BasicGraph<T>& g, const ItemEncoder<T>& enc, std::span<const std::int64_t> ids,
                          const Shape& lead_shape) {
  enc.catalog->check_ids(ids);
  std::vector<BasicTensor<T>> parts;
  parts.push_back(embedding_lookup(g, enc.tables[0], ids, lead_shape));
  std::vector<std::int64_t> codes(ids.size());
  for (std::size_t f = 1; f < enc.tables.size(); ++f) {
    const auto& column = enc.catalog->cat_codes[f - 1];
    for (std::size_t i = 0; i < ids.size(); ++i) codes[i] = column[static_cast<std::size_t>(ids[i])];
    parts.push_back(embedding_lookup(g, enc.tables[f], codes, lead_shape));
  }
  if (enc.mm.defined()) parts.push_back(embedding_lookup(g, enc.mm, ids, lead_shape));
  return concat(g, parts);
}

/// Side-feature tables over selected sample side columns.
template <typename T>
struct SideEncoder {
  std::vector<std::size_t> columns;  // indices into ImpressionSample::side_features
  std::vector<BasicTensor<T>> tables;
  std::size_t d_e = 0;

  std::size_t d_side() const { return tables.size() * d_e; }
};

template <typename T>
SideEncoder<T> make_side_encoder(ParamStore<T>& store, const std::vector<std::size_t>& columns,
                                 const std::vector<std::size_t>& side_vocab, std::size_t d_e) {
  if (columns.size() != side_vocab.size()) {
    throw ConfigError("side_vocab lists " + std::to_string(side_vocab.size()) + " sizes for " +
                      std::to_string(columns.size()) + " side features");
  }
  SideEncoder<T> enc;
  enc.columns = columns;
  enc.d_e = d_e;
  for (std::size_t f = 0; f < columns.size(); ++f) {
    enc.tables.push_back(add_embedding_table(store, "embed.side" + std::to_string(f), side_vocab[f], d_e));
  }
  return enc;
}

/// `codes` is row-major [batch x n_side_total]. Returns [batch x d_side], or
/// an undefined tensor when no side feature is selected.
template <typename T>
BasicTensor<T> side_embed(BasicGraph<T>& g, const SideEncoder<T>& enc, std::span<const std::int64_t> codes,
                          std::size_t batch) {
  if (enc.tables.empty()) return {};
  if (batch == 0 || codes.size() % batch != 0) throw DimensionError("side_embed: codes do not split into the batch");
  const std::size_t width = codes.size() / batch;
  std::vector<BasicTensor<T>> parts;
  std::vector<std::int64_t> column(batch);
  for (std::size_t f = 0; f < enc.tables.size(); ++f) {
    if (enc.columns[f] >= width) {
      throw ConfigError("side feature column " + std::to_string(enc.columns[f]) + " does not exist; samples carry " +
                        std::to_string(width));
    }
    for (std::size_t b = 0; b < batch; ++b) column[b] = codes[b * width + enc.columns[f]];
    parts.push_back(embedding_lookup(g, enc.tables[f], column, {batch}));
  }
  return concat(g, parts);
}

}  // namespace mmctr
