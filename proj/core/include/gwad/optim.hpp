#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "gwad/model.hpp"

namespace gwad {

// NAdam without the time-varying momentum-product schedule:
//   t <- t+1
//   m <- b1*m + (1-b1)*g            v <- b2*v + (1-b2)*g^2
//   mhat = m / (1 - b1^t)           vhat = v / (1 - b2^t)
//   p <- p - lr * (b1*mhat + (1-b1)*g / (1 - b1^t)) / (sqrt(vhat) + eps)
template <typename T>
class NAdam {
 public:
  explicit NAdam(T lr = static_cast<T>(1e-4), T beta1 = static_cast<T>(0.9),
                 T beta2 = static_cast<T>(0.999),
                 T epsilon = static_cast<T>(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  // One update over every named parameter. Throws NumericsError before any
  // mutation if some gradient is non-finite.
  void step(const std::vector<std::pair<std::string, Array<T>*>>& params);

  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }
  std::int64_t step_count() const { return t_; }

  struct Slot {
    std::vector<T> m, v;
  };
  const std::map<std::string, Slot>& slots() const { return slots_; }
  void restore(std::int64_t t, T lr, std::map<std::string, Slot> slots) {
    t_ = t;
    lr_ = lr;
    slots_ = std::move(slots);
  }

 private:
  T lr_, beta1_, beta2_, epsilon_;
  std::int64_t t_ = 0;
  std::map<std::string, Slot> slots_;
};

// Multiplies the lr by `factor` after `patience` consecutive epochs without
// a validation-loss improvement (strict when min_delta is 0).
class PlateauScheduler {
 public:
  explicit PlateauScheduler(double initial_lr, double factor = 0.1,
                            int patience = 5, double min_delta = 0.0)
      : lr_(initial_lr), factor_(factor), patience_(patience),
        min_delta_(min_delta) {}

  // Call once per epoch; returns the lr to use from now on.
  double on_epoch_end(double val_loss);

  double lr() const { return lr_; }
  int reductions() const { return reductions_; }

 private:
  double lr_, factor_;
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int since_improvement_ = 0;
  int reductions_ = 0;
};

// Stops training after `patience` consecutive epochs without improvement and
// remembers the best weights seen so far.
template <typename T>
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience = 10, double min_delta = 0.0)
      : patience_(patience), min_delta_(min_delta) {}

  // Call once per epoch; snapshots the model on improvement. Returns true
  // exactly when the non-improvement count reaches the patience.
  bool update(double val_loss, Model<T>& model);

  bool has_snapshot() const { return !snapshot_params_.empty(); }
  void restore_best(Model<T>& model) const;
  double best_loss() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int since_improvement_ = 0;
  int epoch_ = 0;
  int best_epoch_ = 0;
  std::vector<std::vector<T>> snapshot_params_;
  std::vector<std::vector<T>> snapshot_buffers_;
};

}  // namespace gwad
