#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmctr/diffcore.hpp"
#include "mmctr/layers.hpp"

namespace mmctr {

/// Concatenates the target embedding onto every history position:
/// [B x N x d_item] and [B x d_item] give [B x N x 2 d_item].
template <typename T>
BasicTensor<T> build_seq_input(BasicGraph<T>& g, const BasicTensor<T>& items, const BasicTensor<T>& target) {
  if (items.rank() != 3 || target.rank() != 2 || items.dim(0) != target.dim(0) || items.dim(2) != target.dim(1)) {
    throw DimensionError("build_seq_input: history " + shape_str(items.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  return concat(g, {items, repeat_rows(g, target, items.dim(1))});
}

namespace detail {

inline void check_mask(const Shape& s, std::span<const std::uint8_t> mask, const char* op) {
  if (s.size() != 3 || mask.size() != s[0] * s[1]) {
    throw DimensionError(std::string(op) + ": mask of " + std::to_string(mask.size()) + " cells vs tensor " +
                         shape_str(s));
  }
}

}  // namespace detail

/// Zeroes positions of x[B x N x D] whose mask cell is 0.
template <typename T>
BasicTensor<T> mask_positions(BasicGraph<T>& g, const BasicTensor<T>& x, std::span<const std::uint8_t> mask) {
  detail::check_mask(x.shape(), mask, "mask_positions");
  const std::size_t D = x.dim(2);
  auto out = g.output(x.shape(), x.requires_grad());
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (mask[p]) std::copy_n(x.data().data() + p * D, D, out.data().data() + p * D);
  }
  if (x.requires_grad()) {
    g.record([x, out, m = std::vector<std::uint8_t>(mask.begin(), mask.end()), D]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t p = 0; p < m.size(); ++p) {
        if (!m[p]) continue;
        for (std::size_t j = 0; j < D; ++j) dx[p * D + j] += dc[p * D + j];
      }
    });
  }
  return out;
}

/// Latest-k plus max-pool readout of S[B x N x D] stored most recent first.
/// Output row: [S_1 | ... | S_k | max over valid positions], length
/// (k + 1) D. Positions past the valid length contribute zeros; the pooled
/// segment is zero when no position is valid. Ties in the max send the
/// gradient to the earliest position.
template <typename T>
BasicTensor<T> readout(BasicGraph<T>& g, const BasicTensor<T>& s, std::span<const std::uint8_t> mask,
                       std::size_t k) {
  detail::check_mask(s.shape(), mask, "readout");
  const std::size_t B = s.dim(0), N = s.dim(1), D = s.dim(2);
  if (k > N) throw ConfigError("readout: k = " + std::to_string(k) + " exceeds N = " + std::to_string(N));
  const std::size_t W = (k + 1) * D;
  auto out = g.output({B, W}, s.requires_grad());
  // Source flat index for every output cell, or -1 for a structural zero.
  std::vector<std::ptrdiff_t> src(B * W, -1);
  const T* x = s.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t p = 0; p < k; ++p) {
      if (!mask[b * N + p]) continue;
      for (std::size_t j = 0; j < D; ++j) src[b * W + p * D + j] = static_cast<std::ptrdiff_t>((b * N + p) * D + j);
    }
    for (std::size_t j = 0; j < D; ++j) {
      std::ptrdiff_t best = -1;
      for (std::size_t p = 0; p < N; ++p) {
        if (!mask[b * N + p]) continue;
        const auto idx = static_cast<std::ptrdiff_t>((b * N + p) * D + j);
        if (best < 0 || x[idx] > x[best]) best = idx;
      }
      src[b * W + k * D + j] = best;
    }
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] >= 0) out[i] = x[src[i]];
  }
  if (s.requires_grad()) {
    g.record([s, out, src = std::move(src)]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      auto dx = s.grad_buffer();
      for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i] >= 0) dx[static_cast<std::size_t>(src[i])] += dc[i];
      }
    });
  }
  return out;
}

/// Mean of x[B x N x D] over valid positions; zero when none are valid.
template <typename T>
BasicTensor<T> masked_mean(BasicGraph<T>& g, const BasicTensor<T>& x, std::span<const std::uint8_t> mask) {
  detail::check_mask(x.shape(), mask, "masked_mean");
  const std::size_t B = x.dim(0), N = x.dim(1), D = x.dim(2);
  auto out = g.output({B, D}, x.requires_grad());
  std::vector<T> inv(B, T{0});
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t count = 0;
    for (std::size_t p = 0; p < N; ++p) count += mask[b * N + p] ? 1 : 0;
    if (count == 0) continue;
    inv[b] = T{1} / static_cast<T>(count);
    for (std::size_t p = 0; p < N; ++p) {
      if (!mask[b * N + p]) continue;
      for (std::size_t j = 0; j < D; ++j) out[b * D + j] += x[(b * N + p) * D + j];
    }
    for (std::size_t j = 0; j < D; ++j) out[b * D + j] *= inv[b];
  }
  if (x.requires_grad()) {
    g.record([x, out, m = std::vector<std::uint8_t>(mask.begin(), mask.end()), inv, N, D]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t b = 0; b < inv.size(); ++b) {
        for (std::size_t p = 0; p < N; ++p) {
          if (!m[b * N + p]) continue;
          for (std::size_t j = 0; j < D; ++j) dx[(b * N + p) * D + j] += dc[b * D + j] * inv[b];
        }
      }
    });
  }
  return out;
}

template <typename T>
struct EncoderLayer {
  Dense<T> q, k, v, o;
  BasicTensor<T> ln1_gain, ln1_bias;
  Dense<T> ff1, ff2;
  BasicTensor<T> ln2_gain, ln2_bias;
};

/// Post-norm Transformer encoder stack without positional encoding.
template <typename T>
struct TransformerEncoder {
  std::vector<EncoderLayer<T>> layers;
  std::size_t d_model = 0;
  std::size_t d_ff = 0;
  std::size_t n_heads = 1;
  double dropout = 0.0;
};

template <typename T>
TransformerEncoder<T> make_encoder(ParamStore<T>& store, const std::string& prefix, std::size_t d_model,
                                   std::size_t n_layers, std::size_t n_heads, std::size_t d_ff, double dropout) {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("d_t = " + std::to_string(d_model) + " is not divisible by n_heads = " + std::to_string(n_heads));
  }
  TransformerEncoder<T> enc;
  enc.d_model = d_model;
  enc.d_ff = d_ff ? d_ff : 4 * d_model;
  enc.n_heads = n_heads;
  enc.dropout = dropout;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string p = prefix + "." + std::to_string(l);
    EncoderLayer<T> layer;
    layer.q = make_dense(store, p + ".q", d_model, d_model);
    layer.k = make_dense(store, p + ".k", d_model, d_model);
    layer.v = make_dense(store, p + ".v", d_model, d_model);
    layer.o = make_dense(store, p + ".o", d_model, d_model);
    layer.ln1_gain = add_constant<T>(store, p + ".ln1.gain", d_model, T{1});
    layer.ln1_bias = add_constant<T>(store, p + ".ln1.bias", d_model, T{0});
    layer.ff1 = make_dense(store, p + ".ff1", d_model, enc.d_ff);
    layer.ff2 = make_dense(store, p + ".ff2", enc.d_ff, d_model);
    layer.ln2_gain = add_constant<T>(store, p + ".ln2.gain", d_model, T{1});
    layer.ln2_bias = add_constant<T>(store, p + ".ln2.bias", d_model, T{0});
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

/// Runs the stack over x[B x N x d_model]; padded keys are masked and padded
/// outputs zeroed at the end. `attention` (optional) receives each layer's
/// weights, [B x H x N x N] per layer.
template <typename T>
BasicTensor<T> encode(BasicGraph<T>& g, const TransformerEncoder<T>& enc, BasicTensor<T> x,
                      std::span<const std::uint8_t> mask, bool training, Rng& rng,
                      std::vector<std::vector<T>>* attention = nullptr) {
  detail::check_mask(x.shape(), mask, "encode");
  if (x.dim(2) != enc.d_model) {
    throw DimensionError("encode: input width " + std::to_string(x.dim(2)) + " vs d_t " + std::to_string(enc.d_model));
  }
  if (attention) attention->clear();
  for (const auto& layer : enc.layers) {
    std::vector<T>* weights = nullptr;
    if (attention) weights = &attention->emplace_back();
    auto ctx = masked_attention(g, apply(g, layer.q, x), apply(g, layer.k, x), apply(g, layer.v, x), mask,
                                enc.n_heads, weights);
    auto h = dropout(g, apply(g, layer.o, ctx), enc.dropout, training, rng);
    x = layer_norm(g, add(g, x, h), layer.ln1_gain, layer.ln1_bias);
    auto f = apply(g, layer.ff2, relu(g, apply(g, layer.ff1, x)));
    f = dropout(g, f, enc.dropout, training, rng);
    x = layer_norm(g, add(g, x, f), layer.ln2_gain, layer.ln2_bias);
  }
  return mask_positions(g, x, mask);
}

}  // namespace mmctr
