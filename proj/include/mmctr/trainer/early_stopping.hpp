#pragma once

#include <cstddef>
#include <limits>

#include "mmctr/error.hpp"

namespace mmctr {

/// Patience counter over validation AUC. An epoch improves only when its
/// AUC is strictly greater than the best so far; training stops once
/// `patience` consecutive epochs fail to improve.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {
    if (patience == 0) throw ConfigError("patience must be >= 1");
  }

  /// Records the next epoch's AUC; returns true when it is a new best.
  bool update(double auc) {
    ++epoch_;
    if (epoch_ == 1 || auc > best_auc_) {
      best_auc_ = auc;
      best_epoch_ = epoch_;
      since_improve_ = 0;
      return true;
    }
    ++since_improve_;
    return false;
  }

  bool should_stop() const { return since_improve_ >= patience_; }
  double best_auc() const { return best_auc_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  std::size_t epochs_seen() const { return epoch_; }
  std::size_t epochs_since_improve() const { return since_improve_; }
  std::size_t patience() const { return patience_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_improve_ = 0;
  double best_auc_ = -std::numeric_limits<double>::infinity();
};

}  // namespace mmctr
