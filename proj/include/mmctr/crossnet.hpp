#pragma once

#include <string>
#include <vector>

#include "mmctr/diffcore.hpp"
#include "mmctr/layers.hpp"

namespace mmctr {

/// f_i = [e_target | e_side | S_o]; `side` may be undefined.
template <typename T>
BasicTensor<T> build_fi(BasicGraph<T>& g, const BasicTensor<T>& target, const BasicTensor<T>& side,
                        const BasicTensor<T>& seq) {
  std::vector<BasicTensor<T>> parts{target};
  if (side.defined()) parts.push_back(side);
  parts.push_back(seq);
  for (const auto& p : parts) {
    if (p.rank() != 2) throw DimensionError("build_fi: expected [B x d] parts, got " + shape_str(p.shape()));
  }
  return concat(g, parts);
}

/// Cross layers c_{l+1} = f_i * dropout(c_l W_l + b_l) + c_l with c_0 = f_i.
/// W_l is dense [d_f x d_f], applied to row vectors.
template <typename T>
struct CrossNet {
  std::vector<Dense<T>> layers;
  double dropout = 0.0;
};

template <typename T>
CrossNet<T> make_cross_net(ParamStore<T>& store, const std::string& prefix, std::size_t d_f, std::size_t n_layers,
                           double dropout) {
  CrossNet<T> net;
  net.dropout = dropout;
  for (std::size_t l = 0; l < n_layers; ++l) net.layers.push_back(make_dense(store, prefix + "." + std::to_string(l), d_f, d_f));
  return net;
}

template <typename T>
BasicTensor<T> cross_forward(BasicGraph<T>& g, const BasicTensor<T>& fi, const CrossNet<T>& net, bool training,
                             Rng& rng) {
  auto c = fi;
  for (const auto& layer : net.layers) {
    auto z = dropout(g, apply(g, layer, c), net.dropout, training, rng);
    c = add(g, mul(g, fi, z), c);
  }
  return c;
}

template <typename T>
BasicTensor<T> deep_forward(BasicGraph<T>& g, const BasicTensor<T>& fi, const std::vector<Dense<T>>& deep) {
  return mlp_forward(g, deep, fi);
}

/// f_o = [c_o | d_o]; either side may be undefined when its branch is off.
template <typename T>
BasicTensor<T> combine(BasicGraph<T>& g, const BasicTensor<T>& cross, const BasicTensor<T>& deep) {
  std::vector<BasicTensor<T>> parts;
  if (cross.defined()) parts.push_back(cross);
  if (deep.defined()) parts.push_back(deep);
  return concat(g, parts);
}

}  // namespace mmctr
