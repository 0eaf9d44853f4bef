#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmctr/diffcore/graph.hpp"
#include "mmctr/diffcore/tensor.hpp"
#include "mmctr/error.hpp"
#include "mmctr/random.hpp"

namespace mmctr {

namespace kernels {

// Rows of A are processed four at a time so each row of B is loaded once per
// block. Reductions keep kLanes independent partial sums, which lets the
// compiler vectorize them without reassociating a single accumulator.
inline constexpr std::size_t kRowBlock = 4;
inline constexpr std::size_t kLanes = 16;

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + kRowBlock <= m; i += kRowBlock) {
    T* __restrict c0 = c + i * n;
    T* __restrict c1 = c0 + n;
    T* __restrict c2 = c1 + n;
    T* __restrict c3 = c2 + n;
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      if (v0 == T{0} && v1 == T{0} && v2 == T{0} && v3 == T{0}) continue;
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bv = brow[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    T* __restrict crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m x k] += dC[m x n] * B[k x n]^T
template <typename T>
void gemm_nt_acc(const T* dc, const T* b, T* da, std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t n_main = n - n % kLanes;
  std::size_t i = 0;
  for (; i + kRowBlock <= m; i += kRowBlock) {
    const T* d0 = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* __restrict brow = b + p * n;
      T s[kRowBlock][kLanes] = {};
      for (std::size_t j = 0; j < n_main; j += kLanes) {
        for (std::size_t l = 0; l < kLanes; ++l) {
          const T bv = brow[j + l];
          s[0][l] += d0[j + l] * bv;
          s[1][l] += d0[n + j + l] * bv;
          s[2][l] += d0[2 * n + j + l] * bv;
          s[3][l] += d0[3 * n + j + l] * bv;
        }
      }
      for (std::size_t j = n_main; j < n; ++j) {
        for (std::size_t r = 0; r < kRowBlock; ++r) s[r][0] += d0[r * n + j] * brow[j];
      }
      for (std::size_t r = 0; r < kRowBlock; ++r) {
        T acc{0};
        for (std::size_t l = 0; l < kLanes; ++l) acc += s[r][l];
        da[(i + r) * k + p] += acc;
      }
    }
  }
  for (; i < m; ++i) {
    const T* __restrict dcrow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* __restrict brow = b + p * n;
      T s[kLanes] = {};
      for (std::size_t j = 0; j < n_main; j += kLanes) {
        for (std::size_t l = 0; l < kLanes; ++l) s[l] += dcrow[j + l] * brow[j + l];
      }
      for (std::size_t j = n_main; j < n; ++j) s[0] += dcrow[j] * brow[j];
      T acc{0};
      for (std::size_t l = 0; l < kLanes; ++l) acc += s[l];
      da[i * k + p] += acc;
    }
  }
}

// dB[k x n] += A[m x k]^T * dC[m x n]
template <typename T>
void gemm_tn_acc(const T* a, const T* dc, T* db, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + kRowBlock <= m; i += kRowBlock) {
    const T* a0 = a + i * k;
    const T* __restrict d0 = dc + i * n;
    const T* __restrict d1 = d0 + n;
    const T* __restrict d2 = d1 + n;
    const T* __restrict d3 = d2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      if (v0 == T{0} && v1 == T{0} && v2 == T{0} && v3 == T{0}) continue;
      T* __restrict dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += v0 * d0[j] + v1 * d1[j] + v2 * d2[j] + v3 * d3[j];
    }
  }
  for (; i < m; ++i) {
    const T* arow = a + i * k;
    const T* __restrict dcrow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      T* __restrict dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

}  // namespace kernels

namespace detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const BasicTensor<T>*> ts) {
  for (const auto* t : ts) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void require_same_shape(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

inline Shape with_last(Shape s, std::size_t last) {
  s.back() = last;
  return s;
}

}  // namespace detail

/// Plain 2-D matrix product.
template <typename T>
BasicTensor<T> matmul(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool rg = detail::any_requires_grad<T>({&a, &b});
  auto out = g.output({m, n}, rg);
  kernels::gemm_acc(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (rg) {
    g.record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const T* dc = out.grad().data();
      if (a.requires_grad()) kernels::gemm_nt_acc(dc, b.data().data(), a.grad_buffer().data(), m, k, n);
      if (b.requires_grad()) kernels::gemm_tn_acc(a.data().data(), dc, b.grad_buffer().data(), m, k, n);
    });
  }
  return out;
}

/// Affine map over the trailing axis: x[..., in] * w[in x out] + bias[out].
/// `bias` may be undefined.
template <typename T>
BasicTensor<T> linear(BasicGraph<T>& g, const BasicTensor<T>& x, const BasicTensor<T>& w,
                      const BasicTensor<T>& bias) {
  if (w.rank() != 2 || x.cols() != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  const std::size_t m = x.rows(), k = w.dim(0), n = w.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != n)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " vs weight " + shape_str(w.shape()));
  }
  const bool rg = detail::any_requires_grad<T>({&x, &w, &bias});
  auto out = g.output(detail::with_last(x.shape(), n), rg);
  T* o = out.data().data();
  if (bias.defined()) {
    for (std::size_t i = 0; i < m; ++i) std::copy(bias.data().begin(), bias.data().end(), o + i * n);
  }
  kernels::gemm_acc(x.data().data(), w.data().data(), o, m, k, n);
  if (rg) {
    g.record([x, w, bias, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const T* dc = out.grad().data();
      if (x.requires_grad()) kernels::gemm_nt_acc(dc, w.data().data(), x.grad_buffer().data(), m, k, n);
      if (w.requires_grad()) kernels::gemm_tn_acc(x.data().data(), dc, w.grad_buffer().data(), m, k, n);
      if (bias.defined() && bias.requires_grad()) {
        T* db = bias.grad_buffer().data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) db[j] += dc[i * n + j];
        }
      }
    });
  }
  return out;
}

enum class Elementwise { kAdd, kMul };

/// Pointwise add or multiply of equal-shaped tensors. No broadcasting.
template <typename T>
BasicTensor<T> elementwise(BasicGraph<T>& g, Elementwise kind, const BasicTensor<T>& a,
                           const BasicTensor<T>& b) {
  detail::require_same_shape(kind == Elementwise::kAdd ? "add" : "mul", a, b);
  const bool rg = detail::any_requires_grad<T>({&a, &b});
  auto out = g.output(a.shape(), rg);
  const std::size_t n = a.numel();
  auto av = a.data();
  auto bv = b.data();
  auto ov = out.data();
  if (kind == Elementwise::kAdd) {
    for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
  }
  if (rg) {
    g.record([kind, a, b, out, n]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      if (a.requires_grad()) {
        auto da = a.grad_buffer();
        if (kind == Elementwise::kAdd) {
          for (std::size_t i = 0; i < n; ++i) da[i] += dc[i];
        } else {
          auto bv = b.data();
          for (std::size_t i = 0; i < n; ++i) da[i] += dc[i] * bv[i];
        }
      }
      if (b.requires_grad()) {
        auto db = b.grad_buffer();
        if (kind == Elementwise::kAdd) {
          for (std::size_t i = 0; i < n; ++i) db[i] += dc[i];
        } else {
          auto av = a.data();
          for (std::size_t i = 0; i < n; ++i) db[i] += dc[i] * av[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> add(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(g, Elementwise::kAdd, a, b);
}

template <typename T>
BasicTensor<T> mul(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(g, Elementwise::kMul, a, b);
}

/// The one supported broadcast: a bias vector added to every row of x.
template <typename T>
BasicTensor<T> add_bias(BasicGraph<T>& g, const BasicTensor<T>& x, const BasicTensor<T>& bias) {
  if (bias.rank() != 1 || bias.dim(0) != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match rows of " +
                         shape_str(x.shape()));
  }
  const bool rg = detail::any_requires_grad<T>({&x, &bias});
  auto out = g.output(x.shape(), rg);
  const std::size_t m = x.rows(), n = x.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + bias[j];
  }
  if (rg) {
    g.record([x, bias, out, m, n]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      if (x.requires_grad()) {
        auto dx = x.grad_buffer();
        for (std::size_t i = 0; i < m * n; ++i) dx[i] += dc[i];
      }
      if (bias.requires_grad()) {
        auto db = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) db[j] += dc[i * n + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> relu(BasicGraph<T>& g, const BasicTensor<T>& x) {
  const bool rg = x.requires_grad();
  auto out = g.output(x.shape(), rg);
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
  if (rg) {
    g.record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        if (x[i] > T{0}) dx[i] += dc[i];
      }
    });
  }
  return out;
}

/// Inverted dropout: zero with probability p and scale survivors by
/// 1/(1-p) in training; identity otherwise.
template <typename T>
BasicTensor<T> dropout(BasicGraph<T>& g, const BasicTensor<T>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("dropout: rate must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const std::size_t n = x.numel();
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> keep(n);
  for (std::size_t i = 0; i < n; ++i) keep[i] = rng.uniform() < p ? T{0} : scale;
  const bool rg = x.requires_grad();
  auto out = g.output(x.shape(), rg);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * keep[i];
  if (rg) {
    g.record([x, out, keep = std::move(keep), n]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) dx[i] += dc[i] * keep[i];
    });
  }
  return out;
}

/// Layer normalization over the trailing axis with learned gain and bias.
template <typename T>
BasicTensor<T> layer_norm(BasicGraph<T>& g, const BasicTensor<T>& x, const BasicTensor<T>& gain,
                          const BasicTensor<T>& bias, double eps = 1e-5) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " vs input " + shape_str(x.shape()));
  }
  const bool rg = detail::any_requires_grad<T>({&x, &gain, &bias});
  auto out = g.output(x.shape(), rg);
  std::vector<T> xhat(m * n);
  std::vector<T> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data().data() + i * n;
    Accum<T> mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<Accum<T>>(n);
    Accum<T> var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<Accum<T>>(n);
    const T is = static_cast<T>(Accum<T>{1} / std::sqrt(var + static_cast<Accum<T>>(eps)));
    inv_std[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = static_cast<T>(row[j] - mean) * is;
      xhat[i * n + j] = h;
      out[i * n + j] = gain[j] * h + bias[j];
    }
  }
  if (rg) {
    g.record([x, gain, bias, out, xhat = std::move(xhat), inv_std = std::move(inv_std), m, n]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      if (gain.requires_grad() || bias.requires_grad()) {
        auto dg = gain.requires_grad() ? gain.grad_buffer() : std::span<T>{};
        auto db = bias.requires_grad() ? bias.grad_buffer() : std::span<T>{};
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            if (!dg.empty()) dg[j] += dy[i * n + j] * xhat[i * n + j];
            if (!db.empty()) db[j] += dy[i * n + j];
          }
        }
      }
      if (x.requires_grad()) {
        auto dx = x.grad_buffer();
        std::vector<T> dh(n);
        for (std::size_t i = 0; i < m; ++i) {
          Accum<T> mean_dh = 0, mean_dh_h = 0;
          for (std::size_t j = 0; j < n; ++j) {
            dh[j] = dy[i * n + j] * gain[j];
            mean_dh += dh[j];
            mean_dh_h += dh[j] * xhat[i * n + j];
          }
          mean_dh /= static_cast<Accum<T>>(n);
          mean_dh_h /= static_cast<Accum<T>>(n);
          for (std::size_t j = 0; j < n; ++j) {
            dx[i * n + j] += inv_std[i] * static_cast<T>(dh[j] - mean_dh - xhat[i * n + j] * mean_dh_h);
          }
        }
      }
    });
  }
  return out;
}

/// Concatenation along the trailing axis; all parts share the leading shape.
template <typename T>
BasicTensor<T> concat(BasicGraph<T>& g, const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& lead = parts.front().shape();
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != lead.size() || !std::equal(lead.begin(), lead.end() - 1, p.shape().begin())) {
      throw DimensionError("concat: leading shape mismatch " + shape_str(lead) + " vs " + shape_str(p.shape()));
    }
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  if (parts.size() == 1) return parts.front();
  const std::size_t m = parts.front().rows();
  auto out = g.output(detail::with_last(lead, total), rg);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.data().data() + i * w, w, out.data().data() + i * total + offset);
    }
    offset += w;
  }
  if (rg) {
    g.record([parts, out, m, total]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto dp = p.grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) dp[i * w + j] += dc[i * total + offset + j];
          }
        }
        offset += w;
      }
    });
  }
  return out;
}

/// Copies of x's values under a new shape with the same element count.
template <typename T>
BasicTensor<T> reshape(BasicGraph<T>& g, const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto out = g.output(std::move(shape), x.requires_grad());
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  if (x.requires_grad()) {
    g.record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < dc.size(); ++i) dx[i] += dc[i];
    });
  }
  return out;
}

/// Repeats each row of x[B x D] `count` times, giving [B x count x D].
template <typename T>
BasicTensor<T> repeat_rows(BasicGraph<T>& g, const BasicTensor<T>& x, std::size_t count) {
  if (x.rank() != 2) throw DimensionError("repeat_rows: expected a matrix, got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), d = x.dim(1);
  auto out = g.output({b, count, d}, x.requires_grad());
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t r = 0; r < count; ++r) {
      std::copy_n(x.data().data() + i * d, d, out.data().data() + (i * count + r) * d);
    }
  }
  if (x.requires_grad()) {
    g.record([x, out, b, count, d]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t r = 0; r < count; ++r) {
          for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += dc[(i * count + r) * d + j];
        }
      }
    });
  }
  return out;
}

/// Row gather from table[V x D]. Row 0 is the padding row: it is read like
/// any other row but never receives gradient.
template <typename T>
BasicTensor<T> embedding_lookup(BasicGraph<T>& g, const BasicTensor<T>& table, std::span<const std::int64_t> ids,
                                Shape lead_shape) {
  if (table.rank() != 2) throw DimensionError("embedding_lookup: table must be a matrix, got " + shape_str(table.shape()));
  if (shape_numel(lead_shape) != ids.size()) {
    throw DimensionError("embedding_lookup: " + std::to_string(ids.size()) + " ids do not fill " + shape_str(lead_shape));
  }
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(vocab));
    }
  }
  lead_shape.push_back(d);
  auto out = g.output(std::move(lead_shape), table.requires_grad());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d, out.data().data() + i * d);
  }
  if (table.requires_grad()) {
    g.record([table, out, id_copy = std::vector<std::int64_t>(ids.begin(), ids.end()), d]() mutable {
      if (!out.has_grad()) return;
      auto dc = out.grad();
      auto dt = table.grad_buffer();
      for (std::size_t i = 0; i < id_copy.size(); ++i) {
        const auto row = static_cast<std::size_t>(id_copy[i]);
        if (row == 0) continue;
        for (std::size_t j = 0; j < d; ++j) dt[row * d + j] += dc[i * d + j];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> sum(BasicGraph<T>& g, const BasicTensor<T>& x) {
  Accum<T> acc = 0;
  for (auto v : x.data()) acc += v;
  auto out = g.output({1}, x.requires_grad());
  out[0] = static_cast<T>(acc);
  if (x.requires_grad()) {
    g.record([x, out]() mutable {
      if (!out.has_grad()) return;
      const T dc = out.grad()[0];
      for (auto& v : x.grad_buffer()) v += dc;
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> mean(BasicGraph<T>& g, const BasicTensor<T>& x) {
  Accum<T> acc = 0;
  for (auto v : x.data()) acc += v;
  const std::size_t n = x.numel();
  auto out = g.output({1}, x.requires_grad());
  out[0] = static_cast<T>(acc / static_cast<Accum<T>>(n));
  if (x.requires_grad()) {
    g.record([x, out, n]() mutable {
      if (!out.has_grad()) return;
      const T dc = static_cast<T>(out.grad()[0] / static_cast<Accum<T>>(n));
      for (auto& v : x.grad_buffer()) v += dc;
    });
  }
  return out;
}

/// Per-sample binary cross-entropy from logits, in the overflow-free form
/// max(z,0) - z*y + log1p(exp(-|z|)).
template <typename T>
Accum<T> bce_term(T z, T y) {
  using A = Accum<T>;
  const A zd = z;
  return std::max(zd, A{0}) - zd * static_cast<A>(y) + std::log1p(std::exp(-std::abs(zd)));
}

template <typename T>
T sigmoid(T z) {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

/// Mean binary cross-entropy of logits against 0/1 labels.
template <typename T>
BasicTensor<T> bce_with_logits(BasicGraph<T>& g, const BasicTensor<T>& logits, std::span<const T> labels) {
  const std::size_t n = logits.numel();
  if (n == 0 || labels.empty()) throw ContractError("bce_with_logits: empty batch");
  if (labels.size() != n) {
    throw DimensionError("bce_with_logits: " + std::to_string(n) + " logits vs " + std::to_string(labels.size()) +
                         " labels");
  }
  Accum<T> acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != T{0} && labels[i] != T{1}) throw ContractError("bce_with_logits: labels must be 0 or 1");
    acc += bce_term(logits[i], labels[i]);
  }
  auto out = g.output({1}, logits.requires_grad());
  out[0] = static_cast<T>(acc / static_cast<Accum<T>>(n));
  if (logits.requires_grad()) {
    g.record([logits, out, y = std::vector<T>(labels.begin(), labels.end()), n]() mutable {
      if (!out.has_grad()) return;
      const T scale = static_cast<T>(out.grad()[0] / static_cast<Accum<T>>(n));
      auto dz = logits.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) dz[i] += scale * (sigmoid(logits[i]) - y[i]);
    });
  }
  return out;
}

}  // namespace mmctr
