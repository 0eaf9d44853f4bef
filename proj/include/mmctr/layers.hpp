#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mmctr/diffcore.hpp"
#include "mmctr/random.hpp"

namespace mmctr {

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> tensor;
  // Leading rows the optimizer must leave alone (the padding row of an
  // embedding table).
  std::size_t frozen_rows = 0;
};

/// Named trainable tensors in registration order. Every tensor is
/// initialized from its own RNG stream keyed by (seed, name), so two models
/// that share a parameter name and shape start from the same values.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  BasicTensor<T> add(const std::string& name, Shape shape, std::size_t frozen_rows = 0) {
    if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
    BasicTensor<T> t(std::move(shape), true);
    entries_.push_back({name, t, frozen_rows});
    return t;
  }

  Rng rng_for(const std::string& name) const {
    return Rng(derive_seed(derive_seed(seed_, Stream::kInit), hash_name(name)));
  }

  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : entries_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  std::vector<Parameter<T>>& entries() { return entries_; }
  const std::vector<Parameter<T>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t n_scalars() const {
    std::size_t n = 0;
    for (const auto& p : entries_) n += p.tensor.numel();
    return n;
  }

  void clear_grads() const {
    for (const auto& p : entries_) p.tensor.clear_grad();
  }

 private:
  std::uint64_t seed_;
  std::vector<Parameter<T>> entries_;
};

/// Glorot-uniform weight in [in x out].
template <typename T>
BasicTensor<T> add_glorot(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out) {
  auto w = store.add(name, {in, out});
  auto rng = store.rng_for(name);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& x : w.data()) x = static_cast<T>(rng.uniform(-limit, limit));
  return w;
}

template <typename T>
BasicTensor<T> add_constant(ParamStore<T>& store, const std::string& name, std::size_t n, T value) {
  auto b = store.add(name, {n});
  for (auto& x : b.data()) x = value;
  return b;
}

/// Affine layer x * w + b with w stored [in x out].
template <typename T>
struct Dense {
  BasicTensor<T> w;
  BasicTensor<T> b;

  std::size_t in() const { return w.dim(0); }
  std::size_t out() const { return w.dim(1); }
};

template <typename T>
Dense<T> make_dense(ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out) {
  return {add_glorot(store, prefix + ".w", in, out), add_constant<T>(store, prefix + ".b", out, T{0})};
}

template <typename T>
BasicTensor<T> apply(BasicGraph<T>& g, const Dense<T>& layer, const BasicTensor<T>& x) {
  return linear(g, x, layer.w, layer.b);
}

/// Stack of Dense + ReLU layers; the last hidden activation is the output.
template <typename T>
std::vector<Dense<T>> make_mlp(ParamStore<T>& store, const std::string& prefix, std::size_t in,
                               const std::vector<std::size_t>& hidden) {
  std::vector<Dense<T>> layers;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers.push_back(make_dense(store, prefix + "." + std::to_string(i), in, hidden[i]));
    in = hidden[i];
  }
  return layers;
}

template <typename T>
BasicTensor<T> mlp_forward(BasicGraph<T>& g, const std::vector<Dense<T>>& layers, BasicTensor<T> x) {
  for (const auto& layer : layers) x = relu(g, apply(g, layer, x));
  return x;
}

}  // namespace mmctr
