#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "mmctr/diffcore/tensor.hpp"
#include "mmctr/error.hpp"

namespace mmctr {

/// Define-by-run tape. Ops append their backward rule in execution order;
/// backward() replays the rules once, newest first.
template <typename T>
class BasicGraph {
 public:
  BasicGraph() : id_(next_id()) {}
  BasicGraph(const BasicGraph&) = delete;
  BasicGraph& operator=(const BasicGraph&) = delete;

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return rules_.size(); }

  /// Allocates an op result owned by this graph.
  BasicTensor<T> output(Shape shape, bool requires_grad) {
    BasicTensor<T> out(std::move(shape), requires_grad);
    out.set_producer(id_);
    return out;
  }

  void record(std::function<void()> rule) { rules_.push_back(std::move(rule)); }

  void backward(const BasicTensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " +
                          (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (loss.producer() != id_) throw ContractError("backward(): loss was not produced by this graph");
    if (consumed_) throw ContractError("backward(): graph already consumed");
    if (!loss.requires_grad()) throw ContractError("backward(): loss does not depend on any trainable tensor");
    consumed_ = true;
    loss.grad_buffer()[0] += T{1};
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
    rules_.clear();
  }

 private:
  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  std::uint64_t id_;
  std::vector<std::function<void()>> rules_;
  bool consumed_ = false;
};

using Graph = BasicGraph<float>;

}  // namespace mmctr
