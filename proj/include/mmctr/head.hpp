#pragma once

#include <span>
#include <string>
#include <vector>

#include "mmctr/diffcore.hpp"
#include "mmctr/layers.hpp"

namespace mmctr {

/// ReLU MLP followed by one linear unit giving the click logit.
template <typename T>
struct PredictionHead {
  std::vector<Dense<T>> hidden;
  Dense<T> out;
};

template <typename T>
PredictionHead<T> make_head(ParamStore<T>& store, const std::string& prefix, std::size_t in,
                            const std::vector<std::size_t>& hidden) {
  PredictionHead<T> head;
  head.hidden = make_mlp(store, prefix, in, hidden);
  head.out = make_dense(store, prefix + ".out", hidden.empty() ? in : hidden.back(), 1);
  return head;
}

/// Logits of shape [B] for f_o[B x d].
template <typename T>
BasicTensor<T> head_logits(BasicGraph<T>& g, const PredictionHead<T>& head, const BasicTensor<T>& fo) {
  auto z = apply(g, head.out, mlp_forward(g, head.hidden, fo));
  return reshape(g, z, {z.dim(0)});
}

template <typename T>
std::vector<double> probabilities(const BasicTensor<T>& logits) {
  std::vector<double> out;
  out.reserve(logits.numel());
  for (auto z : logits.data()) out.push_back(sigmoid(static_cast<double>(z)));
  return out;
}

template <typename T>
BasicTensor<T> bce_loss(BasicGraph<T>& g, const BasicTensor<T>& logits, std::span<const T> labels) {
  return bce_with_logits(g, logits, labels);
}

}  // namespace mmctr
