#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mmctr/datapipe/types.hpp"
#include "mmctr/error.hpp"
#include "mmctr/random.hpp"

namespace mmctr::data {

struct PaddedHistory {
  std::vector<std::int64_t> ids;
  std::vector<std::uint8_t> mask;
};

/// Turns an oldest-first history into a length-N most-recent-first row:
/// the latest item lands in slot 0, padding (id 0, mask 0) fills the tail.
/// Histories longer than N keep only their N most recent items.
inline PaddedHistory pad_history(std::span<const std::int64_t> history, std::size_t seq_len) {
  PaddedHistory out{std::vector<std::int64_t>(seq_len, kPaddingId), std::vector<std::uint8_t>(seq_len, 0)};
  const std::size_t keep = std::min(history.size(), seq_len);
  for (std::size_t j = 0; j < keep; ++j) {
    out.ids[j] = history[history.size() - 1 - j];
    out.mask[j] = 1;
  }
  return out;
}

/// Assembles the samples at `indices` into one padded batch.
inline Batch make_batch(const SampleSet& set, std::span<const std::size_t> indices, std::size_t seq_len) {
  Batch b;
  b.size = indices.size();
  b.seq_len = seq_len;
  b.n_side = set.n_side;
  b.history.reserve(b.size * seq_len);
  b.mask.reserve(b.size * seq_len);
  for (auto idx : indices) {
    const auto& s = set.samples.at(idx);
    auto padded = pad_history(s.history, seq_len);
    b.history.insert(b.history.end(), padded.ids.begin(), padded.ids.end());
    b.mask.insert(b.mask.end(), padded.mask.begin(), padded.mask.end());
    b.targets.push_back(s.target_item);
    b.side.insert(b.side.end(), s.side_features.begin(), s.side_features.end());
    b.labels.push_back(static_cast<float>(s.label));
    b.sample_index.push_back(idx);
  }
  return b;
}

/// Splits a sample set into batches of `batch_size` (the last one may be
/// smaller). With a shuffle seed the order is a seeded permutation;
/// without one it is file order.
inline std::vector<Batch> make_batches(const SampleSet& set, std::size_t batch_size, std::size_t seq_len,
                                       std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  std::vector<std::size_t> order;
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    order = rng.permutation(set.size());
  } else {
    order.resize(set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.push_back(make_batch(set, std::span(order).subspan(start, end - start), seq_len));
  }
  return batches;
}

}  // namespace mmctr::data
