#pragma once

#include <cstddef>

#include "ev3/model.hpp"

namespace ev3 {

enum class OptimizerKind { SGD, Momentum, Adam };

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerSpec sgd(double lr) { return {OptimizerKind::SGD, lr}; }
  static OptimizerSpec heavy_ball(double lr, double momentum = 0.9) {
    return {OptimizerKind::Momentum, lr, momentum};
  }
  static OptimizerSpec adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    return {OptimizerKind::Adam, lr, 0.9, beta1, beta2, eps};
  }

  void validate() const;
  friend bool operator==(const OptimizerSpec&, const OptimizerSpec&) = default;
};

/// Optimizer with private accumulator state. step() is functional in the
/// parameters: it returns a new ParameterSet and leaves its input untouched,
/// so any proposal can be thrown away.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec);

  ParameterSet step(const ParameterSet& params, const ParameterSet& grads);
  /// Drops accumulators, e.g. after the graph changed.
  void reset();

  const OptimizerSpec& spec() const { return spec_; }
  std::size_t step_count() const { return steps_; }

 private:
  OptimizerSpec spec_;
  std::size_t steps_ = 0;
  ParameterSet first_;   // velocity (Momentum) or first moment (Adam)
  ParameterSet second_;  // Adam second moment
};

inline ParameterSet optimizer_step(Optimizer& opt, const ParameterSet& params,
                                   const ParameterSet& grads) {
  return opt.step(params, grads);
}

}  // namespace ev3
