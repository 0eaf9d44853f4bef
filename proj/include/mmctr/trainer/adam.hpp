#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mmctr/error.hpp"
#include "mmctr/layers.hpp"

namespace mmctr {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam without weight decay or schedule. Moments live per parameter in
/// registration order; the frozen leading rows of a parameter are never
/// touched.
template <typename T>
class Adam {
 public:
  Adam(ParamStore<T>& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {
    for (const auto& p : store.entries()) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  /// Applies one update from the gradients currently held by the
  /// parameters. Every parameter must carry a gradient.
  void step() {
    auto& entries = store_->entries();
    if (entries.size() != m_.size()) throw ContractError("adam: parameter list changed after construction");
    for (const auto& p : entries) {
      if (!p.tensor.has_grad()) throw ContractError("adam: parameter '" + p.name + "' has no gradient");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& p = entries[i];
      auto w = p.tensor.data();
      auto g = p.tensor.grad();
      const std::size_t skip = p.frozen_rows * (p.tensor.rank() > 1 ? p.tensor.cols() : 1);
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = skip; j < w.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        w[j] = static_cast<T>(static_cast<double>(w[j]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

  /// Restores saved state; shapes must match the parameter list.
  void restore(std::uint64_t t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
    if (m.size() != m_.size() || v.size() != v_.size()) throw CheckpointError("adam state: parameter count differs");
    for (std::size_t i = 0; i < m_.size(); ++i) {
      if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size()) {
        throw CheckpointError("adam state: moment size differs for '" + store_->entries()[i].name + "'");
      }
    }
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  ParamStore<T>* store_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace mmctr
