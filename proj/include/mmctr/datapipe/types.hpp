#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmctr/error.hpp"

namespace mmctr::data {

/// Item id 0 is the padding item: it never appears as a real item and maps
/// to all-zero embeddings everywhere.
inline constexpr std::int64_t kPaddingId = 0;

/// One catalog item: its id (feature t1), the remaining categorical codes
/// t2..t|T|, and the frozen multimodal vector.
struct ItemRecord {
  std::int64_t item_id = 0;
  std::vector<std::int64_t> cat_features;
  std::vector<float> mm_embedding;
};

class ItemTable {
 public:
  ItemTable() = default;
  /// `n_features` is |T|, counting the item id itself.
  ItemTable(std::size_t n_features, std::size_t d_mm) : n_features_(n_features), d_mm_(d_mm) {
    if (n_features == 0) throw DataError("item table needs |T| >= 1 (the item id)");
  }

  void add(ItemRecord item) {
    if (item.item_id <= kPaddingId) {
      throw DataError("item id " + std::to_string(item.item_id) + " is reserved or negative");
    }
    if (item.cat_features.size() != n_cat()) {
      throw DataError("item " + std::to_string(item.item_id) + " has " + std::to_string(item.cat_features.size()) +
                      " categorical codes, expected " + std::to_string(n_cat()));
    }
    if (item.mm_embedding.size() != d_mm_) {
      throw DataError("item " + std::to_string(item.item_id) + " has a multimodal vector of length " +
                      std::to_string(item.mm_embedding.size()) + ", expected " + std::to_string(d_mm_));
    }
    for (auto c : item.cat_features) {
      if (c < 0) throw DataError("item " + std::to_string(item.item_id) + " has a negative categorical code");
    }
    const auto id = item.item_id;
    if (!items_.emplace(id, std::move(item)).second) throw DataError("duplicate item id " + std::to_string(id));
  }

  const ItemRecord* find(std::int64_t id) const {
    auto it = items_.find(id);
    return it == items_.end() ? nullptr : &it->second;
  }
  bool contains(std::int64_t id) const { return items_.count(id) != 0; }

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t n_features() const { return n_features_; }
  std::size_t n_cat() const { return n_features_ - 1; }
  std::size_t d_mm() const { return d_mm_; }
  std::int64_t max_id() const { return items_.empty() ? kPaddingId : items_.rbegin()->first; }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::size_t n_features_ = 1;
  std::size_t d_mm_ = 0;
  std::map<std::int64_t, ItemRecord> items_;
};

/// One impression. `history` is stored as logged: oldest first.
struct ImpressionSample {
  std::int64_t user_id = 0;
  std::vector<std::int64_t> history;
  std::int64_t target_item = 0;
  std::vector<std::int64_t> side_features;
  int label = 0;

  bool operator==(const ImpressionSample&) const = default;
};

struct SampleSet {
  std::size_t max_history = 0;  // N declared by the file header
  std::size_t n_side = 0;
  std::vector<ImpressionSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// A padded minibatch. History rows are stored most-recent-first, so column
/// j holds the (j+1)-th latest interaction.
struct Batch {
  std::size_t size = 0;
  std::size_t seq_len = 0;
  std::size_t n_side = 0;
  std::vector<std::int64_t> history;  // size x seq_len, padding id 0
  std::vector<std::uint8_t> mask;     // size x seq_len, 1 where a real item sits
  std::vector<std::int64_t> targets;  // size
  std::vector<std::int64_t> side;     // size x n_side
  std::vector<float> labels;          // size
  std::vector<std::size_t> sample_index;
};

/// Checks that every id a sample references exists in the item table.
inline void validate_samples(const SampleSet& set, const ItemTable& items) {
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto& s = set.samples[i];
    if (!items.contains(s.target_item)) {
      throw DataError("sample " + std::to_string(i) + ": unknown target item " + std::to_string(s.target_item));
    }
    for (auto h : s.history) {
      if (!items.contains(h)) {
        throw DataError("sample " + std::to_string(i) + ": unknown history item " + std::to_string(h));
      }
    }
  }
}

}  // namespace mmctr::data
