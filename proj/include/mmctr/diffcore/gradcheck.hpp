#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include "mmctr/diffcore/graph.hpp"
#include "mmctr/diffcore/tensor.hpp"
#include "mmctr/error.hpp"

namespace mmctr {

template <typename T>
using ScalarFn = std::function<BasicTensor<T>(BasicGraph<T>&)>;

/// Default central-difference step: 1e-3 suits float; double and long double
/// allow a much smaller step before rounding noise dominates.
template <typename T>
constexpr double default_grad_check_eps() {
  return std::is_same_v<T, float> ? 1e-3 : std::is_same_v<T, double> ? 1e-5 : 1e-6;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t n_checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares backward() against central differences for every coordinate of
/// x. `f` builds the scalar loss on the graph it is handed and must read x
/// (typically by capturing the handle); it is re-run once per perturbation.
/// Coordinates before `first` are skipped (frozen embedding rows).
template <typename T>
GradCheckResult grad_check_detailed(const ScalarFn<T>& f, BasicTensor<T> x,
                                    double eps = default_grad_check_eps<T>(), std::size_t first = 0) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive, got " + std::to_string(eps));
  const bool had_rg = x.requires_grad();
  x.set_requires_grad(true);
  x.clear_grad();

  std::vector<double> analytic(x.numel(), 0.0);
  {
    BasicGraph<T> g;
    auto loss = f(g);
    g.backward(loss);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    x.clear_grad();
  }

  auto eval = [&]() {
    BasicGraph<T> g;
    return f(g).item();
  };

  GradCheckResult result;
  result.n_checked = x.numel() > first ? x.numel() - first : 0;
  for (std::size_t i = first; i < x.numel(); ++i) {
    const T orig = x[i];
    const T up = static_cast<T>(orig + eps);
    const T down = static_cast<T>(orig - eps);
    x[i] = up;
    const T fp = eval();
    x[i] = down;
    const T fm = eval();
    x[i] = orig;
    // Differenced in T so extended-precision checks keep their precision.
    const double numeric = static_cast<double>((fp - fm) / (up - down));
    const double err = relative_error(analytic[i], numeric);
    if (i == first || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.analytic = analytic[i];
      result.numeric = numeric;
    }
  }
  x.set_requires_grad(had_rg);
  return result;
}

template <typename T>
double grad_check(const ScalarFn<T>& f, BasicTensor<T> x, double eps = default_grad_check_eps<T>()) {
  return grad_check_detailed(f, std::move(x), eps).max_rel_error;
}

}  // namespace mmctr
