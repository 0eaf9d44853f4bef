#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmctr/diffcore/graph.hpp"
#include "mmctr/diffcore/ops.hpp"
#include "mmctr/diffcore/tensor.hpp"
#include "mmctr/error.hpp"

namespace mmctr {

/// Scaled dot-product attention over q, k, v of shape [B x N x D] split into
/// `n_heads` heads of width D / n_heads. Keys whose mask cell is 0 get zero
/// weight. A query with no valid key produces a zero context row.
///
/// If `weights_out` is non-null it receives the attention weights laid out
/// [B x H x N(query) x N(key)].
template <typename T>
BasicTensor<T> masked_attention(BasicGraph<T>& g, const BasicTensor<T>& q, const BasicTensor<T>& k,
                                const BasicTensor<T>& v, std::span<const std::uint8_t> key_mask,
                                std::size_t n_heads, std::vector<T>* weights_out = nullptr) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("masked_attention: q/k/v must share a [B x N x D] shape, got " + shape_str(q.shape()) +
                         ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const std::size_t B = q.dim(0), N = q.dim(1), D = q.dim(2);
  if (n_heads == 0 || D % n_heads != 0) {
    throw DimensionError("masked_attention: width " + std::to_string(D) + " not divisible by " +
                         std::to_string(n_heads) + " heads");
  }
  if (key_mask.size() != B * N) throw DimensionError("masked_attention: mask size does not match B x N");
  const std::size_t H = n_heads, dh = D / H;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  const bool rg = detail::any_requires_grad<T>({&q, &k, &v});
  auto out = g.output(q.shape(), rg);
  std::vector<T> probs(B * H * N * N, T{0});
  std::vector<T> logits(N);

  const T* Q = q.data().data();
  const T* K = k.data().data();
  const T* V = v.data().data();
  T* O = out.data().data();

  for (std::size_t b = 0; b < B; ++b) {
    const std::uint8_t* mrow = key_mask.data() + b * N;
    bool any_valid = false;
    for (std::size_t j = 0; j < N; ++j) any_valid = any_valid || mrow[j];
    if (!any_valid) continue;
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < N; ++i) {
        const T* qi = Q + (b * N + i) * D + h * dh;
        T maxv = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < N; ++j) {
          if (!mrow[j]) continue;
          const T* kj = K + (b * N + j) * D + h * dh;
          T s{0};
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          logits[j] = s * scale;
          maxv = std::max(maxv, logits[j]);
        }
        T* p = probs.data() + ((b * H + h) * N + i) * N;
        T denom{0};
        for (std::size_t j = 0; j < N; ++j) {
          if (!mrow[j]) continue;
          p[j] = std::exp(logits[j] - maxv);
          denom += p[j];
        }
        T* oi = O + (b * N + i) * D + h * dh;
        for (std::size_t j = 0; j < N; ++j) {
          if (!mrow[j]) continue;
          p[j] /= denom;
          const T* vj = V + (b * N + j) * D + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  if (weights_out) *weights_out = probs;

  if (rg) {
    g.record([q, k, v, out, probs = std::move(probs), B, N, D, H, dh, scale]() mutable {
      if (!out.has_grad()) return;
      const T* dO = out.grad().data();
      const T* Q = q.data().data();
      const T* K = k.data().data();
      const T* V = v.data().data();
      // Inputs that do not require grad still get scratch buffers so the
      // loops below stay branch-free; they are discarded afterwards.
      std::vector<T> scratch_q, scratch_k, scratch_v;
      auto buffer = [](const BasicTensor<T>& t, std::vector<T>& scratch) -> T* {
        if (t.requires_grad()) return t.grad_buffer().data();
        scratch.assign(t.numel(), T{0});
        return scratch.data();
      };
      T* dQ = buffer(q, scratch_q);
      T* dK = buffer(k, scratch_k);
      T* dV = buffer(v, scratch_v);
      std::vector<T> dp(N);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < H; ++h) {
          for (std::size_t i = 0; i < N; ++i) {
            const T* p = probs.data() + ((b * H + h) * N + i) * N;
            const T* doi = dO + (b * N + i) * D + h * dh;
            T dot{0};
            for (std::size_t j = 0; j < N; ++j) {
              if (p[j] == T{0}) {
                dp[j] = T{0};
                continue;
              }
              const T* vj = V + (b * N + j) * D + h * dh;
              T* dvj = dV + (b * N + j) * D + h * dh;
              T s{0};
              for (std::size_t c = 0; c < dh; ++c) {
                s += doi[c] * vj[c];
                dvj[c] += p[j] * doi[c];
              }
              dp[j] = s;
              dot += p[j] * s;
            }
            const T* qi = Q + (b * N + i) * D + h * dh;
            T* dqi = dQ + (b * N + i) * D + h * dh;
            for (std::size_t j = 0; j < N; ++j) {
              if (p[j] == T{0}) continue;
              const T ds = p[j] * (dp[j] - dot) * scale;
              const T* kj = K + (b * N + j) * D + h * dh;
              T* dkj = dK + (b * N + j) * D + h * dh;
              for (std::size_t c = 0; c < dh; ++c) {
                dqi[c] += ds * kj[c];
                dkj[c] += ds * qi[c];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace mmctr
